"""Isometry metrics, distance-matrix completion and the register-afterwards baseline."""

from __future__ import annotations

import csv
import warnings
from collections import deque
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .linalg import small_svd, sym_eig_small
from .model import FusionDataset, GroundTruth
from .rigidity import orthogonal_dof, patch_graph, disconnected_subgraphs

__all__ = [
    "sym_eig_small",
    "RigidTransform",
    "DegenerateConfigurationError",
    "procrustes_fit",
    "IsometrySummary",
    "isometry_error",
    "PartialDistanceMatrix",
    "partial_from_ground_truth",
    "complete_distance_matrix",
    "completion_error",
    "BaselineResult",
    "baseline_register",
    "write_metrics_csv",
    "write_scatter_csv",
]

PAIR_CAP = 200_000
ALL_PAIRS_LIMIT = 2000


class DegenerateConfigurationError(ValueError):
    """Point sets too degenerate (e.g. collinear in the plane) to fix a rigid motion."""


@dataclass
class RigidTransform:
    Q: np.ndarray
    t: np.ndarray

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.Q.T + self.t

    @property
    def is_proper(self) -> bool:
        return np.linalg.det(self.Q) > 0

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """``self(inner(x))``."""
        return RigidTransform(self.Q @ inner.Q, self.Q @ inner.t + self.t)


def procrustes_fit(source, target, allow_reflection: bool = True) -> RigidTransform:
    """Least-squares rigid motion with ``Q @ source_i + t ~= target_i``.

    With ``allow_reflection=False`` the result is a proper rotation.
    """
    S = np.asarray(source, dtype=float)
    G = np.asarray(target, dtype=float)
    if S.shape != G.shape or S.ndim != 2:
        raise ValueError(f"point sets differ in shape: {S.shape} vs {G.shape}")
    n, p = S.shape
    if n < p:
        raise DegenerateConfigurationError(f"need at least {p} points, got {n}")
    s_bar, g_bar = S.mean(axis=0), G.mean(axis=0)
    H = (S - s_bar).T @ (G - g_bar)
    U, _, V, rank = small_svd(H)
    if rank < p - 1:
        raise DegenerateConfigurationError(f"cross-covariance rank {rank} < {p - 1}")
    D = np.eye(p)
    if not allow_reflection and np.linalg.det(V @ U.T) < 0:
        D[-1, -1] = -1.0
    Q = V @ D @ U.T
    return RigidTransform(Q, g_bar - Q @ s_bar)


# --------------------------------------------------------------------------
# isometry metric


@dataclass
class IsometrySummary:
    rmse: float
    relative_rmse: float
    max_error: float
    n_pairs: int
    latent_distances: np.ndarray
    embedded_distances: np.ndarray

    def row(self) -> dict:
        return {
            "rmse": self.rmse,
            "relative_rmse": self.relative_rmse,
            "max_error": self.max_error,
            "n_pairs": self.n_pairs,
        }


def _pairs(n: int, n_pairs: int | None, seed: int):
    if n_pairs is None and n <= ALL_PAIRS_LIMIT:
        return np.triu_indices(n, k=1)
    total = n * (n - 1) // 2
    want = min(n_pairs or PAIR_CAP, PAIR_CAP, total)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=want)
    j = rng.integers(0, n - 1, size=want)
    j = j + (j >= i)
    return i, j


def isometry_error(embedded, latent, n_pairs: int | None = None, seed: int = 0) -> IsometrySummary:
    """Compare pairwise Euclidean distances of embedded and latent points (no rescaling)."""
    E = np.asarray(embedded, dtype=float)
    X = np.asarray(latent, dtype=float)
    if len(E) != len(X):
        raise ValueError(f"{len(E)} embedded points but {len(X)} latent points")
    if len(E) < 2:
        raise ValueError("need at least 2 points")
    i, j = _pairs(len(E), n_pairs, seed)
    d_lat = np.linalg.norm(X[i] - X[j], axis=1)
    d_emb = np.linalg.norm(E[i] - E[j], axis=1)
    err = np.abs(d_emb - d_lat)
    rmse = float(np.sqrt(np.mean(err**2)))
    mean_lat = float(d_lat.mean())
    rel = rmse / mean_lat if mean_lat > 0 else float("inf")
    return IsometrySummary(rmse, rel, float(err.max()), len(err), d_lat, d_emb)


# --------------------------------------------------------------------------
# distance-matrix completion


@dataclass
class PartialDistanceMatrix:
    values: np.ndarray
    known: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.known = np.asarray(self.known, dtype=bool)
        n = self.values.shape[0]
        if self.values.shape != (n, n) or self.known.shape != (n, n):
            raise ValueError("distance matrix and mask must be square and equal in shape")
        if not np.array_equal(self.known, self.known.T):
            raise ValueError("mask must be symmetric")
        if not np.array_equal(np.where(self.known, self.values, 0.0), np.where(self.known, self.values, 0.0).T):
            raise ValueError("known distances must be symmetric")
        if not self.known.diagonal().all() or np.any(self.values.diagonal() != 0):
            raise ValueError("diagonal must be known and zero")
        if np.any(self.values[self.known] < 0):
            raise ValueError("known distances must be non-negative")


def _point_index(dataset: FusionDataset):
    """Merge calibration-linked bursts into shared points; returns per point its (modality_id, burst) list."""
    parent: dict = {}

    def find(a):
        while parent.setdefault(a, a) != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for mod in dataset.modalities:
        for b in range(mod.n_bursts):
            find((mod.modality_id, b))
    for l in dataset.calibration:
        ra, rb = find((l.k, l.i)), find((l.s, l.j))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict = {}
    for mod in dataset.modalities:
        for b in range(mod.n_bursts):
            groups.setdefault(find((mod.modality_id, b)), []).append((mod.modality_id, b))
    return list(groups.values())


def partial_from_ground_truth(dataset: FusionDataset, truth: GroundTruth):
    """Distance matrix over all distinct points, known only where one modality sees both points.

    Returns ``(partial, index, full)`` where ``index[r]`` lists the
    ``(modality_id, burst)`` observations of point ``r`` and ``full`` is the
    complete ground-truth matrix.
    """
    index = _point_index(dataset)
    pos = {m.modality_id: n for n, m in enumerate(dataset.modalities)}
    X = np.array([truth.centers[pos[obs[0][0]]][obs[0][1]] for obs in index])
    full = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
    seen = np.zeros((len(index), len(dataset.modalities)), dtype=bool)
    for r, obs in enumerate(index):
        for mod_id, _ in obs:
            seen[r, pos[mod_id]] = True
    known = (seen.astype(int) @ seen.T.astype(int)) > 0
    np.fill_diagonal(known, True)
    values = np.where(known, full, 0.0)
    return PartialDistanceMatrix(values, known), index, full


def complete_distance_matrix(model, dataset: FusionDataset, partial: PartialDistanceMatrix, index) -> np.ndarray:
    """Fill unknown entries with distances between burst-center embeddings.

    A point observed by several modalities is placed at the average of its
    burst-center embeddings.  Known entries are returned unchanged.
    """
    from .training import embed_dataset

    n = partial.values.shape[0]
    if len(index) != n:
        raise ValueError(f"index has {len(index)} rows, matrix has {n}")
    if partial.known.all():
        return partial.values.copy()
    emb = embed_dataset(model, dataset)
    pos = {m.modality_id: k for k, m in enumerate(dataset.modalities)}
    pts = []
    for r, obs in enumerate(index):
        if not obs:
            raise ValueError(f"row {r} is not mapped to any burst")
        try:
            pts.append(np.mean([emb.means[pos[mid]][b] for mid, b in obs], axis=0))
        except (KeyError, IndexError):
            raise ValueError(f"row {r} maps to an unknown burst {obs}") from None
    P = np.array(pts)
    filled = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    out = np.where(partial.known, partial.values, filled)
    np.fill_diagonal(out, 0.0)
    return out


def completion_error(completed: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> dict:
    """RMSE and relative RMSE of ``completed`` against ``truth`` on the entries in ``mask``."""
    diff = (completed - truth)[mask]
    rmse = float(np.sqrt(np.mean(diff**2))) if diff.size else 0.0
    mean = float(truth[mask].mean()) if diff.size else 0.0
    return {"rmse": rmse, "relative_rmse": rmse / mean if mean > 0 else 0.0, "n_entries": int(diff.size)}


# --------------------------------------------------------------------------
# baseline: independent auto-encoders, registered afterwards


@dataclass
class BaselineResult:
    means: list[np.ndarray]  # per modality burst-center embeddings, in the root modality's frame
    transforms: list[RigidTransform]
    models: list
    tree: list[tuple[int, int]]  # (parent_id, child_id)


def baseline_register(dataset: FusionDataset, config=None) -> BaselineResult:
    """Train one auto-encoder per modality alone, then chain Procrustes fits over calibration bursts.

    The chain follows a breadth-first spanning tree of the patch graph rooted
    at the first modality, visiting neighbors by ascending modality id.
    """
    from .training import TrainConfig, embed_dataset, train

    config = config or TrainConfig()
    graph = patch_graph(dataset)
    components = disconnected_subgraphs(graph)
    if len(components) > 1:
        raise ValueError(f"patch graph is disconnected: components {[sorted(c) for c in components]}")
    solo_cfg = replace(config, w_calib=0.0)
    models, means = [], []
    for mod in dataset.modalities:
        solo = FusionDataset(dataset.intrinsic_dim, (mod,), ())
        model, _ = train(solo, solo_cfg)
        models.append(model)
        means.append(embed_dataset(model, solo).means[0])

    ids = [m.modality_id for m in dataset.modalities]
    pos = {mid: n for n, mid in enumerate(ids)}
    p = means[0].shape[1]
    transforms: list[RigidTransform | None] = [None] * len(ids)
    transforms[0] = RigidTransform(np.eye(p), np.zeros(p))
    tree = []
    queue = deque([ids[0]])
    need = orthogonal_dof(dataset.intrinsic_dim)
    while queue:
        parent = queue.popleft()
        for child in sorted(graph.adjacency[parent]):
            if transforms[pos[child]] is not None:
                continue
            src, dst = [], []
            for l in dataset.calibration:
                if (l.k, l.s) == (child, parent):
                    src.append(means[pos[child]][l.i])
                    dst.append(means[pos[parent]][l.j])
                elif (l.k, l.s) == (parent, child):
                    src.append(means[pos[child]][l.j])
                    dst.append(means[pos[parent]][l.i])
            if len(src) < need:
                warnings.warn(
                    f"only {len(src)} calibration links between modalities {parent} and {child}; "
                    f"{need} are needed for a unique registration",
                    stacklevel=2,
                )
            parent_tf = transforms[pos[parent]]
            fit = procrustes_fit(np.array(src), parent_tf(np.array(dst)), allow_reflection=True)
            transforms[pos[child]] = fit
            tree.append((parent, child))
            queue.append(child)
    registered = [tf(m) for tf, m in zip(transforms, means)]
    return BaselineResult(registered, transforms, models, tree)


# --------------------------------------------------------------------------
# CSV artifacts

METRIC_FIELDS = ["scenario", "method", "rmse", "relative_rmse", "max_error", "n_pairs", "seed"]


def write_metrics_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_scatter_csv(path, summary: IsometrySummary) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["latent_distance", "embedded_distance"])
        for a, b in zip(summary.latent_distances, summary.embedded_distances):
            writer.writerow([repr(float(a)), repr(float(b))])


def stack_embedding(means: Sequence[np.ndarray], truth: GroundTruth):
    """Concatenate per-modality burst embeddings and the matching latent centers."""
    return np.concatenate(list(means)), np.concatenate(list(truth.centers))


def model_isometry(model, dataset: FusionDataset, truth: GroundTruth, n_pairs=None, seed: int = 0) -> IsometrySummary:
    from .training import embed_dataset

    E, X = stack_embedding(embed_dataset(model, dataset).means, truth)
    return isometry_error(E, X, n_pairs, seed)
