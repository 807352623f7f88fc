"""Joint training of K auto-encoders into one shared embedding space."""

from __future__ import annotations

import logging
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .linalg import sym_eig_small
from .losses import (
    Decoder,
    Encoder,
    GappyLocaModel,
    burst_means,
    calibration_terms,
    modality_scale,
    reconstruction_terms,
    whitening_terms,
)
from .model import FusionDataset, ModalityData, validate_dataset
from .nets import AdamState, adam_step, init_mlp

log = logging.getLogger(__name__)

THREADS_ENV = "GAPPY_FUSE_THREADS"


class TrainingDivergedError(RuntimeError):
    def __init__(self, term: str, modality: int | None, epoch: int, value: float):
        where = "" if modality is None else f" (modality {modality})"
        super().__init__(f"{term} loss{where} became {value} at epoch {epoch}")
        self.term = term
        self.modality = modality
        self.epoch = epoch


@dataclass
class TrainConfig:
    w_white: float = 1.0
    w_recon: float = 1.0
    w_calib: float = 1.0
    embed_dim: int | None = None  # None: intrinsic dimension
    reflection_relaxation: bool = False  # train in d + 1 dims, project back with principal axes
    epochs: int = 200
    batch_bursts: int = 32
    lr: float = 1e-3
    lr_final: float | None = None  # cosine decay from lr to lr_final over all epochs
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 10.0
    hidden: tuple[int, ...] = (64, 64, 64)
    activation: str = "tanh"
    recon_per_sample: bool = False
    recon_detach: bool = False  # reconstruction trains the decoders only
    whitening_target: str = "identity"  # or "projector": rank-d target when embed_dim > d
    calib_start: float = 0.0  # share of epochs trained without the calibration term
    relax_fraction: float | None = None  # with relaxation: share of epochs in d + 1 dims before collapsing to d
    relax_start: float | None = None  # with relaxation: train in d dims first, lift to d + 1 at this share of epochs
    input_whitening: bool = False  # encoders pre-whiten inputs by the mean burst covariance
    register_at_calib: bool = False  # rigidly pre-align modalities over calibration bursts when calibration starts
    sigma_mode: str = "declared"  # or "estimated"
    seed: int = 0
    threads: int | None = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("w_white", "w_recon", "w_calib"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.sigma_mode not in ("declared", "estimated"):
            raise ValueError(f"unknown sigma_mode {self.sigma_mode!r}")
        if self.whitening_target not in ("identity", "projector"):
            raise ValueError(f"unknown whitening_target {self.whitening_target!r}")
        if not 0.0 <= self.calib_start <= 1.0:
            raise ValueError("calib_start must lie in [0, 1]")
        if self.relax_fraction is not None and not 0.0 <= self.relax_fraction <= 1.0:
            raise ValueError("relax_fraction must lie in [0, 1]")
        if self.relax_start is not None:
            if not 0.0 <= self.relax_start <= 1.0:
                raise ValueError("relax_start must lie in [0, 1]")
            if self.relax_fraction is not None and self.relax_fraction < self.relax_start:
                raise ValueError("relax_fraction must not precede relax_start")
        if self.epochs < 0 or self.batch_bursts < 1:
            raise ValueError("epochs must be >= 0 and batch_bursts >= 1")

    def resolved_embed_dim(self, d: int) -> int:
        p = self.embed_dim if self.embed_dim is not None else d + int(self.reflection_relaxation)
        if p < d:
            raise ValueError(f"embedding dimension {p} < intrinsic dimension {d}")
        return p

    def initial_embed_dim(self, d: int) -> int:
        """Dimension the networks start in; a delayed lift starts in ``d``."""
        if self.reflection_relaxation and self.relax_start is not None and self.embed_dim is None:
            return d
        return self.resolved_embed_dim(d)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["hidden"] = list(self.hidden)
        return doc


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)
    initial: dict | None = None
    final: dict | None = None

    def totals(self) -> list[float]:
        return [r["total"] for r in self.records]

    def to_csv(self, path) -> None:
        source = self.records[0] if self.records else self.initial
        k = len(source["white"]) if source else 0
        header = ["epoch"]
        header += [f"white_{i}" for i in range(k)] + [f"recon_{i}" for i in range(k)]
        header += ["calib", "total", "seconds"]
        lines = [",".join(header)]
        for r in self.records:
            vals = [str(r["epoch"])] + [repr(v) for v in r["white"]] + [repr(v) for v in r["recon"]]
            vals += [repr(r["calib"]), repr(r["total"]), f"{r['seconds']:.3f}"]
            lines.append(",".join(vals))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# data staging


class _Staged:
    """Per-modality sample arrays arranged for fast burst gathering."""

    def __init__(self, mod: ModalityData):
        self.mod = mod
        counts = np.array([b.m for b in mod.bursts], dtype=int)
        self.counts = counts
        self.uniform = len(counts) > 0 and np.all(counts == counts[0])
        if self.uniform:
            self.cube = np.stack([b.samples for b in mod.bursts])
        else:
            self.flat, _, _ = mod.stacked()
            self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)

    def gather(self, idx: Sequence[int]):
        idx = np.asarray(idx, dtype=int)
        counts = self.counts[idx]
        if self.uniform:
            rows = self.cube[idx].reshape(-1, self.cube.shape[2])
        else:
            rows = np.concatenate([self.flat[self.offsets[i] : self.offsets[i + 1]] for i in idx])
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
        return rows, starts, counts


def _calibration_plan(dataset: FusionDataset):
    """Per modality position: sorted calibration burst indices, and per link the (pos, slot) pairs."""
    pos_of = {m.modality_id: n for n, m in enumerate(dataset.modalities)}
    needed: list[set] = [set() for _ in dataset.modalities]
    for l in dataset.calibration:
        needed[pos_of[l.k]].add(l.i)
        needed[pos_of[l.s]].add(l.j)
    idx = [sorted(s) for s in needed]
    slot = [{b: n for n, b in enumerate(lst)} for lst in idx]
    pairs = [
        (pos_of[l.k], slot[pos_of[l.k]][l.i], pos_of[l.s], slot[pos_of[l.s]][l.j]) for l in dataset.calibration
    ]
    return idx, pairs


def _embedding_scale(mod: ModalityData, sigma: float, d: int) -> float:
    """Rough latent extent of a modality, from observation spread and burst spread alone."""
    rows, _, _ = mod.stacked()
    spread = np.sqrt(np.trace(np.atleast_2d(np.cov(rows.T))) / d)
    local = np.median([np.trace(np.atleast_2d(np.cov(b.samples.T))) for b in mod.bursts])
    gain = np.sqrt(local / d) / sigma
    if not (np.isfinite(spread) and gain > 0 and spread > 0):
        return 1.0
    return float(spread / gain)


def _input_mix(mod: ModalityData, shift: np.ndarray, scale: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Symmetric map that flattens the mean burst covariance of standardized inputs.

    Eigenvalues below ``floor`` times the largest are clamped so directions
    with no local spread are not blown up; the result is scaled so the
    mixed inputs keep unit mean variance.
    """
    cov = np.mean([np.atleast_2d(np.cov(((b.samples - shift) / scale).T)) for b in mod.bursts], axis=0)
    vals, vecs = sym_eig_small(cov) if cov.shape[0] <= 16 else np.linalg.eigh(cov)
    vals = np.maximum(vals, 0.0) + floor * max(float(np.max(vals)), 1e-300)
    mix = (vecs / np.sqrt(vals)) @ vecs.T
    rows, _, _ = mod.stacked()
    spread = np.sqrt(np.mean((((rows - shift) / scale) @ mix).var(axis=0)))
    return mix / spread if spread > 0 else mix


def init_model(dataset: FusionDataset, config: TrainConfig) -> GappyLocaModel:
    d = dataset.intrinsic_dim
    p = config.initial_embed_dim(d)
    seeds = np.random.SeedSequence(config.seed).spawn(2 * dataset.n_modalities)
    encoders, decoders, sigmas, scales = [], [], [], []
    for k, mod in enumerate(dataset.modalities):
        lam = modality_scale(mod, d)
        sigma = mod.sigma if config.sigma_mode == "declared" else math.sqrt(lam)
        rows, _, _ = mod.stacked()
        shift = rows.mean(axis=0)
        scale = rows.std(axis=0)
        scale = np.where(scale > 1e-12 * max(1.0, scale.max()), scale, 1.0)
        out_scale = _embedding_scale(mod, sigma, d)
        mix = _input_mix(mod, shift, scale) if config.input_whitening else None
        enc_net = init_mlp((mod.ambient_dim, *config.hidden, p), np.random.default_rng(seeds[2 * k]), config.activation)
        dec_net = init_mlp(
            (p, *config.hidden[::-1], mod.ambient_dim), np.random.default_rng(seeds[2 * k + 1]), config.activation
        )
        encoders.append(Encoder(enc_net, shift, scale, out_scale, mix))
        decoders.append(Decoder(dec_net, shift.copy(), scale.copy(), out_scale))
        sigmas.append(float(sigma))
        scales.append(lam)
    return GappyLocaModel(
        encoders,
        decoders,
        [m.modality_id for m in dataset.modalities],
        p,
        d,
        sigmas,
        scales,
        metadata={"seed": config.seed},
    )


# --------------------------------------------------------------------------
# loss + gradient evaluation


def _modality_forward(model, k, staged, batch_idx, calib_idx, config):
    """Whitening and reconstruction for one modality, plus calibration-burst means."""
    enc, dec = model.encoders[k], model.decoders[k]
    rows, starts, counts = staged.gather(list(batch_idx) + list(calib_idx))
    nb = len(batch_idx)
    n_rows_b = int(counts[:nb].sum())
    z, enc_cache = enc.forward(rows)
    dz = np.zeros_like(z)
    white = recon = 0.0
    dec_grads = [np.zeros_like(q) for q in dec.net.params()]
    if nb:
        zb = z[:n_rows_b]
        rank = model.intrinsic_dim if config.whitening_target == "projector" else None
        white, _, dzw = whitening_terms(zb, starts[:nb], counts[:nb], model.sigmas[k], rank)
        y_hat, dec_cache = dec.forward(zb)
        recon, dy = reconstruction_terms(
            rows[:n_rows_b], y_hat, model.scales[k], nb, counts[:nb], config.recon_per_sample
        )
        dec_grads, dzr = dec.backward(dec_cache, config.w_recon * dy)
        dz[:n_rows_b] = config.w_white * dzw if config.recon_detach else config.w_white * dzw + dzr
    c_starts = starts[nb:] - n_rows_b
    c_counts = counts[nb:]
    means = burst_means(z[n_rows_b:], c_starts, c_counts) if len(c_counts) else np.zeros((0, z.shape[1]))
    return {
        "white": white,
        "recon": recon,
        "z": z,
        "dz": dz,
        "cache": enc_cache,
        "dec_grads": dec_grads,
        "means": means,
        "n_rows_b": n_rows_b,
        "c_counts": c_counts,
    }


def _losses_and_grads(model, staged, batches, calib_idx, pairs, config, pool=None):
    K = model.n_modalities
    run = (lambda f, items: list(pool.map(f, items))) if pool else (lambda f, items: [f(i) for i in items])
    parts = run(lambda k: _modality_forward(model, k, staged[k], batches[k], calib_idx[k], config), range(K))

    calib = 0.0
    if pairs:
        a = np.array([parts[ka]["means"][sa] for ka, sa, _, _ in pairs])
        b = np.array([parts[kb]["means"][sb] for _, _, kb, sb in pairs])
        sig2 = np.array([0.5 * (model.sigmas[ka] ** 2 + model.sigmas[kb] ** 2) for ka, _, kb, _ in pairs])
        calib, ga, gb = calibration_terms(a, b, model.intrinsic_dim, sig2)
        g_means = [np.zeros_like(part["means"]) for part in parts]
        for n, (ka, sa, kb, sb) in enumerate(pairs):
            g_means[ka][sa] += config.w_calib * ga[n]
            g_means[kb][sb] += config.w_calib * gb[n]
        for k, part in enumerate(parts):
            if len(part["c_counts"]):
                part["dz"][part["n_rows_b"] :] += np.repeat(
                    g_means[k] / part["c_counts"][:, None], part["c_counts"], axis=0
                )

    def back(k):
        enc_grads, _ = model.encoders[k].backward(parts[k]["cache"], parts[k]["dz"])
        return enc_grads + parts[k]["dec_grads"]

    grads = [g for gs in run(back, range(K)) for g in gs]
    white = [part["white"] for part in parts]
    recon = [part["recon"] for part in parts]
    total = config.w_white * sum(white) + config.w_recon * sum(recon) + config.w_calib * calib
    return {"white": white, "recon": recon, "calib": calib, "total": total}, grads


def evaluate_losses(model: GappyLocaModel, dataset: FusionDataset, config: TrainConfig | None = None) -> dict:
    """All three loss terms over the full dataset (no gradients kept)."""
    config = config or TrainConfig()
    staged = [_Staged(m) for m in dataset.modalities]
    calib_idx, pairs = _calibration_plan(dataset)
    batches = [range(m.n_bursts) for m in dataset.modalities]
    values, _ = _losses_and_grads(model, staged, batches, calib_idx, pairs, config)
    return values


def _check_finite(values: dict, epoch: int, modality_ids):
    for term in ("white", "recon"):
        for k, v in enumerate(values[term]):
            if not np.isfinite(v):
                raise TrainingDivergedError(term, modality_ids[k], epoch, v)
    if not np.isfinite(values["calib"]):
        raise TrainingDivergedError("calib", None, epoch, values["calib"])


def _resolve_threads(config: TrainConfig) -> int:
    if config.threads is not None:
        return max(1, int(config.threads))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------------------
# training loop


def train(
    dataset: FusionDataset,
    config: TrainConfig | None = None,
    callback: Callable[[int, dict], None] | None = None,
    model: GappyLocaModel | None = None,
):
    """Minimize the weighted sum of whitening, reconstruction and calibration losses.

    Returns ``(model, history)``.  Results depend only on ``dataset`` and
    ``config`` (including ``config.seed``), not on the worker count.
    """
    from .rigidity import check_patch_rigidity

    config = config or TrainConfig()
    problems = validate_dataset(dataset)
    if problems:
        raise ValueError("invalid dataset: " + "; ".join(problems))
    if dataset.calibration and not check_patch_rigidity(dataset).verdict:
        warnings.warn("observation graph is not rigid; the fused embedding may not be unique", stacklevel=2)
    if not dataset.calibration and dataset.n_modalities > 1 and config.w_calib > 0:
        warnings.warn("no calibration links; modalities cannot be registered", stacklevel=2)

    model = model or init_model(dataset, config)
    staged = [_Staged(m) for m in dataset.modalities]
    calib_idx, pairs = _calibration_plan(dataset)
    # children 0..2K-1 seed the networks in init_model; the next one drives shuffling
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2 * dataset.n_modalities + 1)[-1])
    params = model.params()
    adam = AdamState.for_params(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    history = TrainHistory()
    history.initial = evaluate_losses(model, dataset, config)
    _check_finite(history.initial, 0, model.modality_ids)

    n_max = max(m.n_bursts for m in dataset.modalities)
    steps = max(1, math.ceil(n_max / config.batch_bursts))
    threads = _resolve_threads(config)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    target_dim = config.resolved_embed_dim(model.intrinsic_dim)
    lift_at = collapse_at = None
    if config.relax_start is not None and model.embed_dim < target_dim:
        lift_at = round(config.relax_start * config.epochs)
    if config.relax_fraction is not None and target_dim > model.intrinsic_dim:
        collapse_at = round(config.relax_fraction * config.epochs)
    lift_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2 * dataset.n_modalities + 2)[-1])
    calib_from = round(config.calib_start * config.epochs)
    try:
        for epoch in range(1, config.epochs + 1):
            reset = False
            if epoch - 1 == lift_at:
                lift_embedding(model, target_dim, lift_rng)
                reset = True
            if epoch - 1 == collapse_at and model.embed_dim > model.intrinsic_dim:
                collapse_embedding(model, dataset)
                reset = True
            if config.register_at_calib and pairs and epoch - 1 == calib_from:
                register_embedding(model, dataset)
                reset = True
            if reset:
                params = model.params()
                adam = AdamState.for_params(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
            t0 = time.perf_counter()
            lr = config.lr
            if config.lr_final is not None and config.epochs > 1:
                frac = (epoch - 1) / (config.epochs - 1)
                lr = config.lr_final + 0.5 * (config.lr - config.lr_final) * (1 + math.cos(math.pi * frac))
            orders = []
            for m in dataset.modalities:
                reps = math.ceil(steps * config.batch_bursts / m.n_bursts)
                orders.append(np.concatenate([rng.permutation(m.n_bursts) for _ in range(reps)]))
            acc = None
            for step in range(steps):
                lo, hi = step * config.batch_bursts, (step + 1) * config.batch_bursts
                batches = [order[lo:hi] for order in orders]
                step_config = config if epoch > calib_from else replace(config, w_calib=0.0)
                values, grads = _losses_and_grads(model, staged, batches, calib_idx, pairs, step_config, pool)
                _check_finite(values, epoch, model.modality_ids)
                norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
                if config.grad_clip and norm > config.grad_clip:
                    grads = [g * (config.grad_clip / norm) for g in grads]
                params, adam = adam_step(params, grads, adam, lr=lr)
                model.set_params(params)
                if acc is None:
                    acc = {key: np.array(val, dtype=float) for key, val in values.items()}
                else:
                    for key in acc:
                        acc[key] = acc[key] + np.array(values[key], dtype=float)
            record = {
                "epoch": epoch,
                "white": (acc["white"] / steps).tolist(),
                "recon": (acc["recon"] / steps).tolist(),
                "calib": float(acc["calib"] / steps),
                "total": float(acc["total"] / steps),
                "seconds": time.perf_counter() - t0,
            }
            history.records.append(record)
            if callback is not None:
                callback(epoch, record)
    finally:
        if pool is not None:
            pool.shutdown()

    history.final = evaluate_losses(model, dataset, config)
    _check_finite(history.final, config.epochs, model.modality_ids)
    if model.embed_dim > model.intrinsic_dim:
        fit_projection(model, dataset)
    model.metadata.update({"epochs": config.epochs, "train_config": config.to_dict()})
    return model, history


def register_embedding(model: GappyLocaModel, dataset: FusionDataset) -> list[tuple[int, int]]:
    """Rigidly move each modality's embedding onto its calibration partners.

    Modalities are placed breadth-first from the first one; each newly
    reached modality gets the least-squares orthogonal map (reflections
    allowed) and shift taking its calibration-burst means onto those of all
    modalities already placed.  The maps are folded into the encoder output
    and decoder input layers.  Returns the ``(parent, child)`` positions in
    visiting order.
    """
    from .evaluation import procrustes_fit

    means = embed_dataset(model, dataset, project=False).means
    pos_of = {m.modality_id: n for n, m in enumerate(dataset.modalities)}
    links = [(pos_of[l.k], l.i, pos_of[l.s], l.j) for l in dataset.calibration]
    placed = {0}
    order = []
    queue = [0]
    while queue:
        parent = queue.pop(0)
        partners = sorted({b for a, _, b, _ in links if a == parent} | {a for a, _, b, _ in links if b == parent})
        for child in partners:
            if child in placed:
                continue
            src, dst = [], []
            for a, i, b, j in links:
                if a == child and b in placed:
                    src.append(means[child][i])
                    dst.append(means[b][j])
                elif b == child and a in placed:
                    src.append(means[child][j])
                    dst.append(means[a][i])
            fit = procrustes_fit(np.array(src), np.array(dst), allow_reflection=True)
            enc, dec = model.encoders[child], model.decoders[child]
            enc.net.weights[-1] = fit.Q @ enc.net.weights[-1]
            enc.net.biases[-1] = fit.Q @ enc.net.biases[-1] + fit.t / enc.out_scale
            w = dec.net.weights[0] @ fit.Q.T
            dec.net.biases[0] = dec.net.biases[0] - w @ fit.t / dec.in_scale
            dec.net.weights[0] = w
            means[child] = fit(means[child])
            placed.add(child)
            order.append((parent, child))
            queue.append(child)
    return order


def lift_embedding(model: GappyLocaModel, dim: int, rng: np.random.Generator) -> None:
    """Place each modality's embedding in ``dim`` dimensions through its own random orthonormal frame.

    With frame ``Q`` (``dim x p``, orthonormal columns) the encoder output
    becomes ``Q z`` and the decoder reads ``Q^T z'``, so reconstructions are
    unchanged while the modalities no longer share an orientation.  Two
    embeddings that are mirror images in ``p`` dimensions can then be
    brought together by a rotation in ``dim`` dimensions.
    """
    p = model.embed_dim
    if dim < p:
        raise ValueError(f"cannot lift from {p} to {dim} dimensions")
    for enc, dec in zip(model.encoders, model.decoders):
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        frame = (q * np.sign(np.diag(r)))[:, :p]
        enc.net.weights[-1] = frame @ enc.net.weights[-1]
        enc.net.biases[-1] = frame @ enc.net.biases[-1]
        dec.net.weights[0] = dec.net.weights[0] @ frame.T
        enc.net.sizes = (*enc.net.sizes[:-1], dim)
        dec.net.sizes = (dim, *dec.net.sizes[1:])
    model.embed_dim = dim
    model.proj_axes = model.proj_center = None


def collapse_embedding(model: GappyLocaModel, dataset: FusionDataset) -> None:
    """Fold the principal-axes projection into the networks so training can go on in ``intrinsic_dim``.

    Encoder output layers become ``A^T (W h + b - c)`` and decoder input
    layers absorb ``z = c + A z'``, so the projected model reproduces the
    projected embedding exactly.
    """
    fit_projection(model, dataset)
    axes, center = model.proj_axes, model.proj_center
    for enc, dec in zip(model.encoders, model.decoders):
        w, b = enc.net.weights[-1], enc.net.biases[-1]
        enc.net.weights[-1] = axes.T @ w
        enc.net.biases[-1] = axes.T @ (b - center / enc.out_scale)
        w, b = dec.net.weights[0], dec.net.biases[0]
        dec.net.weights[0] = w @ axes
        dec.net.biases[0] = b + w @ center / dec.in_scale
        enc.net.sizes = (*enc.net.sizes[:-1], model.intrinsic_dim)
        dec.net.sizes = (model.intrinsic_dim, *dec.net.sizes[1:])
    model.embed_dim = model.intrinsic_dim
    model.proj_axes = model.proj_center = None


def fit_projection(model: GappyLocaModel, dataset: FusionDataset) -> None:
    """Principal axes of all burst-center embeddings, kept to ``intrinsic_dim`` components."""
    means = np.concatenate(embed_dataset(model, dataset, project=False).means)
    center = means.mean(axis=0)
    cov = (means - center).T @ (means - center) / max(1, len(means) - 1)
    _, vecs = sym_eig_small(cov)
    model.proj_center = center
    model.proj_axes = vecs[:, : model.intrinsic_dim]


@dataclass
class DatasetEmbedding:
    means: list[np.ndarray]  # per modality, N_k x p burst-center embeddings
    samples: list[np.ndarray]  # per modality, all samples stacked
    starts: list[np.ndarray]
    counts: list[np.ndarray]


def embed_dataset(model: GappyLocaModel, dataset: FusionDataset, project: bool = True) -> DatasetEmbedding:
    """Embed every sample and average per burst.

    With ``project`` the results go through the model's projection to
    ``intrinsic_dim`` (a no-op when ``embed_dim == intrinsic_dim``).
    """
    if dataset.n_modalities != model.n_modalities:
        raise ValueError(f"model has {model.n_modalities} encoders, dataset has {dataset.n_modalities} modalities")
    out = DatasetEmbedding([], [], [], [])
    for enc, mod in zip(model.encoders, dataset.modalities):
        if enc.net.n_in != mod.ambient_dim:
            raise ValueError(f"encoder input {enc.net.n_in} != ambient_dim {mod.ambient_dim}")
        rows, starts, counts = mod.stacked()
        z = enc(rows)
        if project:
            z = model.project(z)
        out.means.append(burst_means(z, starts, counts))
        out.samples.append(z)
        out.starts.append(starts)
        out.counts.append(counts)
    return out
