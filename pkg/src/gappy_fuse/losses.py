"""Whitening, reconstruction and calibration losses with exact gradients.

Every loss has two layers: a function of embedded samples that returns the
loss value and its gradient with respect to those samples, and a wrapper
that pushes that gradient through the networks.  Bursts are passed as
ragged stacks ``(rows, starts, counts)`` so bursts of different sizes can
share one forward pass.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import MAX_JACOBI_DIM, sym_eig_small
from .model import FusionDataset, ModalityData
from .nets import Mlp, backward, forward, mlp_from_dict, mlp_to_dict


# --------------------------------------------------------------------------
# encoders and decoders with fixed input/output normalization


@dataclass
class Encoder:
    """``rho(y) = out_scale * net(((y - shift) / scale) @ mix)``; ``mix`` defaults to the identity."""

    net: Mlp
    shift: np.ndarray
    scale: np.ndarray
    out_scale: float = 1.0
    mix: np.ndarray | None = None

    def _inputs(self, y) -> np.ndarray:
        x = (np.asarray(y, dtype=float) - self.shift) / self.scale
        return x if self.mix is None else x @ self.mix

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return forward(self.net, self._inputs(y)) * self.out_scale

    def forward(self, y: np.ndarray):
        out, cache = forward(self.net, self._inputs(y), keep=True)
        return out * self.out_scale, cache

    def backward(self, cache, upstream: np.ndarray):
        grads, dx = backward(self.net, None, upstream * self.out_scale, cache)
        if self.mix is not None:
            dx = dx @ self.mix.T
        return grads, dx / self.scale


@dataclass
class Decoder:
    """``gamma(z) = shift + scale * net(z / in_scale)``."""

    net: Mlp
    shift: np.ndarray
    scale: np.ndarray
    in_scale: float = 1.0

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.shift + self.scale * forward(self.net, np.asarray(z, dtype=float) / self.in_scale)

    def forward(self, z: np.ndarray):
        out, cache = forward(self.net, np.asarray(z, dtype=float) / self.in_scale, keep=True)
        return self.shift + self.scale * out, cache

    def backward(self, cache, upstream: np.ndarray):
        grads, dz = backward(self.net, None, upstream * self.scale, cache)
        return grads, dz / self.in_scale


def _coder_to_dict(c) -> dict:
    doc = {"net": mlp_to_dict(c.net), "shift": c.shift.tolist(), "scale": c.scale.tolist()}
    doc["out_scale" if isinstance(c, Encoder) else "in_scale"] = float(
        c.out_scale if isinstance(c, Encoder) else c.in_scale
    )
    if isinstance(c, Encoder) and c.mix is not None:
        doc["mix"] = c.mix.tolist()
    return doc


@dataclass
class GappyLocaModel:
    """K encoder/decoder pairs sharing one ``embed_dim``-dimensional embedding."""

    encoders: list[Encoder]
    decoders: list[Decoder]
    modality_ids: list[int]
    embed_dim: int
    intrinsic_dim: int
    sigmas: list[float]
    scales: list[float]
    # optional principal-axes projection to intrinsic_dim (used when embed_dim > intrinsic_dim)
    proj_center: np.ndarray | None = None
    proj_axes: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_modalities(self) -> int:
        return len(self.encoders)

    def params(self) -> list[np.ndarray]:
        out = []
        for enc, dec in zip(self.encoders, self.decoders):
            out += enc.net.params() + dec.net.params()
        return out

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        pos = 0
        for enc, dec in zip(self.encoders, self.decoders):
            for net in (enc.net, dec.net):
                n = 2 * (len(net.sizes) - 1)
                net.set_params(params[pos : pos + n])
                pos += n

    def project(self, points: np.ndarray) -> np.ndarray:
        """Map embedding-space points to ``intrinsic_dim`` coordinates."""
        points = np.asarray(points, dtype=float)
        if self.proj_axes is None:
            return points
        return (points - self.proj_center) @ self.proj_axes

    def to_dict(self) -> dict:
        return {
            "modality_ids": list(self.modality_ids),
            "embed_dim": self.embed_dim,
            "intrinsic_dim": self.intrinsic_dim,
            "sigmas": [float(s) for s in self.sigmas],
            "scales": [float(s) for s in self.scales],
            "encoders": [_coder_to_dict(e) for e in self.encoders],
            "decoders": [_coder_to_dict(d) for d in self.decoders],
            "proj_center": None if self.proj_center is None else self.proj_center.tolist(),
            "proj_axes": None if self.proj_axes is None else self.proj_axes.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GappyLocaModel":
        encs = [
            Encoder(
                mlp_from_dict(e["net"]),
                np.array(e["shift"]),
                np.array(e["scale"]),
                e["out_scale"],
                np.array(e["mix"]) if "mix" in e else None,
            )
            for e in doc["encoders"]
        ]
        decs = [
            Decoder(mlp_from_dict(e["net"]), np.array(e["shift"]), np.array(e["scale"]), e["in_scale"])
            for e in doc["decoders"]
        ]
        pc, pa = doc.get("proj_center"), doc.get("proj_axes")
        return cls(
            encs,
            decs,
            list(doc["modality_ids"]),
            int(doc["embed_dim"]),
            int(doc["intrinsic_dim"]),
            list(doc["sigmas"]),
            list(doc["scales"]),
            None if pc is None else np.array(pc),
            None if pa is None else np.array(pa),
            doc.get("metadata", {}),
        )


# --------------------------------------------------------------------------
# burst statistics


def burst_covariance(z: np.ndarray) -> np.ndarray:
    """Unbiased sample covariance of the rows of an ``M x p`` burst."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError(f"need an M x p burst with M >= 2, got shape {z.shape}")
    zc = z - z.mean(axis=0)
    return zc.T @ zc / (z.shape[0] - 1)


def burst_means(z: np.ndarray, starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    return np.add.reduceat(z, starts, axis=0) / counts[:, None]


def _as_ragged(bursts):
    if isinstance(bursts, np.ndarray) and bursts.ndim == 2:
        bursts = [bursts]
    blocks = [np.asarray(b, dtype=float) for b in bursts]
    counts = np.array([b.shape[0] for b in blocks], dtype=int)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
    return np.concatenate(blocks, axis=0), starts, counts


def whitening_terms(z: np.ndarray, starts: np.ndarray, counts: np.ndarray, sigma: float, rank: int | None = None):
    """Mean over bursts of ``||C_hat(z_i) / sigma^2 - T_i||_F^2``.

    ``T_i`` is the identity, or with ``rank`` the orthogonal projector onto
    the ``rank`` leading eigenvectors of ``C_hat(z_i)``: a burst then only
    has to be white inside its own ``rank``-dimensional tangent plane and
    flat across it.  Both agree when ``rank`` equals the embedding dimension.
    The projector is the nearest rank-``rank`` projector to the scaled
    covariance, so its derivative drops out of the gradient.

    Returns ``(loss, per_burst_losses, dloss/dz)``.
    """
    if np.any(counts < 2):
        raise ValueError("every burst needs M >= 2")
    p = z.shape[1]
    n_b = len(counts)
    means = burst_means(z, starts, counts)
    zc = z - np.repeat(means, counts, axis=0)
    outer = zc[:, :, None] * zc[:, None, :]
    cov = np.add.reduceat(outer, starts, axis=0) / (counts - 1)[:, None, None]
    if rank is None or rank >= p:
        target = np.eye(p)
    else:
        _, vecs = np.linalg.eigh(cov)  # ascending; batched over bursts
        lead = vecs[:, :, p - rank :]
        target = lead @ np.swapaxes(lead, 1, 2)
    resid = cov / sigma**2 - target
    per_burst = np.sum(resid * resid, axis=(1, 2))
    # d/dC of the mean loss, then through C = Zc^T Zc / (M - 1); Zc has zero column sums
    g = 2.0 * resid / (sigma**2 * n_b)
    g = g * (2.0 / (counts - 1))[:, None, None]
    dz = np.einsum("rp,rpq->rq", zc, np.repeat(g, counts, axis=0))
    return float(per_burst.mean()), per_burst, dz


def reconstruction_terms(y: np.ndarray, y_hat: np.ndarray, lam: float, n_bursts: int, counts=None, per_sample=False):
    """``(1/N) sum_i sum_{y in Y_i} ||y - y_hat||^2 / (lam * D)``; returns ``(loss, dloss/dy_hat)``.

    With ``per_sample`` each sample's term is additionally divided by its
    burst size.
    """
    diff = y_hat - y
    w = np.full(len(y), 1.0 / (lam * y.shape[1] * n_bursts))
    if per_sample:
        w = w / np.repeat(counts, counts)
    loss = float(np.sum(w * np.sum(diff * diff, axis=1)))
    return loss, 2.0 * w[:, None] * diff


def calibration_terms(means_a: np.ndarray, means_b: np.ndarray, d: int, sigma2: np.ndarray):
    """Mean over links of ``||a - b||^2 / (d * sigma^2)``; returns ``(loss, d/da, d/db)``."""
    n = len(means_a)
    if n == 0:
        return 0.0, np.zeros_like(means_a), np.zeros_like(means_b)
    diff = means_a - means_b
    w = 1.0 / (n * d * np.asarray(sigma2, dtype=float))
    loss = float(np.sum(w * np.sum(diff * diff, axis=1)))
    ga = 2.0 * w[:, None] * diff
    return loss, ga, -ga


# --------------------------------------------------------------------------
# network-level losses


def whitening_loss(encoder: Encoder, bursts, sigma: float, rank: int | None = None):
    """Whitening loss of one burst (``M x D`` array) or the mean over several."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rows, starts, counts = _as_ragged(bursts)
    z, cache = encoder.forward(rows)
    loss, _, dz = whitening_terms(z, starts, counts, sigma, rank)
    grads, _ = encoder.backward(cache, dz)
    return loss, grads


def modality_scale(modality: ModalityData, d: int) -> float:
    """Median over bursts of the d-th largest eigenvalue of the observation-space covariance."""
    if d > modality.ambient_dim:
        raise ValueError(f"d={d} exceeds ambient dimension {modality.ambient_dim}")
    if modality.n_bursts < 1:
        raise ValueError("modality has no bursts")
    vals = []
    for burst in modality.bursts:
        cov = burst_covariance(burst.samples)
        if cov.shape[0] <= MAX_JACOBI_DIM:
            w, _ = sym_eig_small(cov)
        else:
            w = np.linalg.eigvalsh(cov)[::-1]
        vals.append(w[d - 1])
    vals.sort()
    # lower median for even counts
    return float(vals[(len(vals) - 1) // 2])


def reconstruction_loss(encoder: Encoder, decoder: Decoder, bursts, lam: float, per_sample: bool = False):
    """Reconstruction loss over the given bursts, normalized by their count.

    Returns ``(loss, encoder_grads, decoder_grads)``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if isinstance(bursts, ModalityData):
        bursts = [b.samples for b in bursts.bursts]
    rows, starts, counts = _as_ragged(bursts)
    z, enc_cache = encoder.forward(rows)
    y_hat, dec_cache = decoder.forward(z)
    loss, dy = reconstruction_terms(rows, y_hat, lam, len(counts), counts, per_sample)
    dec_grads, dz = decoder.backward(dec_cache, dy)
    enc_grads, _ = encoder.backward(enc_cache, dz)
    return loss, enc_grads, dec_grads


def calibration_loss(model: GappyLocaModel, dataset: FusionDataset):
    """Calibration loss over all links; returns ``(loss, per-encoder gradients)``."""
    links = dataset.calibration
    grads = [[np.zeros_like(p) for p in enc.net.params()] for enc in model.encoders]
    if not links:
        warnings.warn("dataset has no calibration links; calibration loss is 0", stacklevel=2)
        return 0.0, grads
    pos = {mid: n for n, mid in enumerate(model.modality_ids)}
    needed: dict[int, list[int]] = {}
    for link in links:
        needed.setdefault(link.k, []).append(link.i)
        needed.setdefault(link.s, []).append(link.j)
    means, caches, slots = {}, {}, {}
    for mid, idx in needed.items():
        idx = sorted(set(idx))
        k = pos[mid]
        rows, starts, counts = dataset.modalities[dataset.modality_index(mid)].stacked(idx)
        z, cache = model.encoders[k].forward(rows)
        means[mid] = burst_means(z, starts, counts)
        caches[mid] = (cache, starts, counts)
        slots[mid] = {b: n for n, b in enumerate(idx)}
    a = np.array([means[l.k][slots[l.k][l.i]] for l in links])
    b = np.array([means[l.s][slots[l.s][l.j]] for l in links])
    sig2 = np.array([0.5 * (model.sigmas[pos[l.k]] ** 2 + model.sigmas[pos[l.s]] ** 2) for l in links])
    loss, ga, gb = calibration_terms(a, b, model.intrinsic_dim, sig2)
    for mid in needed:
        cache, starts, counts = caches[mid]
        g_means = np.zeros((len(counts), model.embed_dim))
        for n, l in enumerate(links):
            if l.k == mid:
                g_means[slots[mid][l.i]] += ga[n]
            if l.s == mid:
                g_means[slots[mid][l.j]] += gb[n]
        dz = np.repeat(g_means / counts[:, None], counts, axis=0)
        k = pos[mid]
        grads[k], _ = model.encoders[k].backward(cache, dz)
    return loss, grads
