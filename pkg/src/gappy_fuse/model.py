"""Domain types for multi-modality burst data and their JSON file layout.

A :class:`FusionDataset` is the only thing the trainer ever sees.  Latent
burst centers live in a separate :class:`GroundTruth` object so that training
code cannot consume them by accident.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np


class DatasetFormatError(ValueError):
    """Raised when a dataset or ground-truth file cannot be parsed."""


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Burst:
    """M observed samples (rows) of one burst center in a modality."""

    samples: np.ndarray
    burst_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples, 2))

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class ModalityData:
    modality_id: int
    ambient_dim: int
    bursts: tuple[Burst, ...]
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "bursts", tuple(self.bursts))

    @property
    def n_bursts(self) -> int:
        return len(self.bursts)

    def stacked(self, indices: Sequence[int] | None = None):
        """Concatenate burst samples; returns ``(rows, starts, counts)``."""
        if indices is None:
            indices = range(len(self.bursts))
        blocks = [self.bursts[i].samples for i in indices]
        counts = np.array([b.shape[0] for b in blocks], dtype=int)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
        rows = np.concatenate(blocks, axis=0) if blocks else np.zeros((0, self.ambient_dim))
        return rows, starts, counts


@dataclass(frozen=True)
class CalibrationLink:
    """Burst ``i`` of modality ``k`` and burst ``j`` of modality ``s`` share a latent center."""

    i: int
    j: int
    k: int
    s: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.i, self.j, self.k, self.s)


@dataclass(frozen=True)
class FusionDataset:
    intrinsic_dim: int
    modalities: tuple[ModalityData, ...]
    calibration: tuple[CalibrationLink, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "calibration", tuple(self.calibration))

    @property
    def n_modalities(self) -> int:
        return len(self.modalities)

    def modality_index(self, modality_id: int) -> int:
        for pos, mod in enumerate(self.modalities):
            if mod.modality_id == modality_id:
                return pos
        raise KeyError(f"no modality with id {modality_id}")

    def with_calibration(self, links: Sequence[CalibrationLink]) -> "FusionDataset":
        return FusionDataset(self.intrinsic_dim, self.modalities, tuple(links))


@dataclass(frozen=True)
class GroundTruth:
    """Latent burst centers, indexed exactly like the dataset's bursts."""

    centers: tuple[np.ndarray, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(_frozen(c, 2) for c in self.centers))


# --------------------------------------------------------------------------
# validation


def validate_dataset(dataset: FusionDataset) -> list[str]:
    """Return every invariant violation found in ``dataset`` (empty if valid)."""
    problems: list[str] = []
    d = dataset.intrinsic_dim
    if d < 1:
        problems.append(f"intrinsic_dim {d} < 1")
    n_bursts = {}
    seen_ids = set()
    for pos, mod in enumerate(dataset.modalities):
        where = f"modality[{pos}] (id {mod.modality_id})"
        if mod.modality_id in seen_ids:
            problems.append(f"{where}: duplicate modality_id")
        seen_ids.add(mod.modality_id)
        n_bursts[mod.modality_id] = mod.n_bursts
        if mod.ambient_dim < 1:
            problems.append(f"{where}: ambient_dim {mod.ambient_dim} < 1")
        if mod.ambient_dim < d:
            problems.append(f"{where}: ambient_dim {mod.ambient_dim} < intrinsic_dim {d}")
        if not (mod.sigma > 0 and np.isfinite(mod.sigma)):
            problems.append(f"{where}: sigma must be positive, got {mod.sigma}")
        for b_pos, burst in enumerate(mod.bursts):
            if burst.m < 2:
                problems.append(f"{where} burst {b_pos}: burst M<2 (M={burst.m})")
            if burst.dim != mod.ambient_dim:
                problems.append(
                    f"{where} burst {b_pos}: sample length {burst.dim} != ambient_dim {mod.ambient_dim}"
                )
            if not np.all(np.isfinite(burst.samples)):
                problems.append(f"{where} burst {b_pos}: non-finite sample values")
    for pos, link in enumerate(dataset.calibration):
        where = f"calibration[{pos}] {link.as_tuple()}"
        if link.k == link.s:
            problems.append(f"{where}: links a modality to itself")
        for mod_id, idx in ((link.k, link.i), (link.s, link.j)):
            if mod_id not in n_bursts:
                problems.append(f"{where}: dangling calibration index (unknown modality {mod_id})")
            elif not 0 <= idx < n_bursts[mod_id]:
                problems.append(
                    f"{where}: dangling calibration index (burst {idx} of modality {mod_id} "
                    f"with {n_bursts[mod_id]} bursts)"
                )
    return problems


# --------------------------------------------------------------------------
# serialization


def dataset_to_dict(dataset: FusionDataset) -> dict:
    return {
        "intrinsic_dim": int(dataset.intrinsic_dim),
        "modalities": [
            {
                "modality_id": int(mod.modality_id),
                "ambient_dim": int(mod.ambient_dim),
                "sigma": float(mod.sigma),
                "bursts": [b.samples.tolist() for b in mod.bursts],
            }
            for mod in dataset.modalities
        ],
        "calibration": [list(link.as_tuple()) for link in dataset.calibration],
    }


def _require(obj: dict, key: str, path: str):
    if not isinstance(obj, dict) or key not in obj:
        raise DatasetFormatError(f"missing field '{path}{key}'")
    return obj[key]


def dataset_from_dict(doc: dict) -> FusionDataset:
    d = _require(doc, "intrinsic_dim", "")
    if not isinstance(d, int):
        raise DatasetFormatError("field 'intrinsic_dim' must be an integer")
    modalities = []
    for pos, raw in enumerate(_require(doc, "modalities", "")):
        path = f"modalities[{pos}]."
        dim = _require(raw, "ambient_dim", path)
        bursts = []
        for b_pos, samples in enumerate(_require(raw, "bursts", path)):
            try:
                arr = np.array(samples, dtype=float)
            except (TypeError, ValueError) as exc:
                raise DatasetFormatError(f"field '{path}bursts[{b_pos}]': {exc}") from None
            if arr.ndim != 2:
                raise DatasetFormatError(
                    f"field '{path}bursts[{b_pos}]' must be an M x D array, got shape {arr.shape}"
                )
            bursts.append(Burst(arr, b_pos))
        modalities.append(
            ModalityData(
                modality_id=int(_require(raw, "modality_id", path)),
                ambient_dim=int(dim),
                bursts=tuple(bursts),
                sigma=float(_require(raw, "sigma", path)),
            )
        )
    links = []
    for pos, raw in enumerate(_require(doc, "calibration", "")):
        if not (isinstance(raw, list) and len(raw) == 4 and all(isinstance(v, int) for v in raw)):
            raise DatasetFormatError(f"field 'calibration[{pos}]' must be 4 integers, got {raw!r}")
        links.append(CalibrationLink(*raw))
    return FusionDataset(d, tuple(modalities), tuple(links))


def _load_json(path: Path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def save_dataset(dataset: FusionDataset, path) -> None:
    # json emits repr() floats, which round-trip doubles exactly
    Path(path).write_text(json.dumps(dataset_to_dict(dataset)))


def load_dataset(path) -> FusionDataset:
    try:
        return dataset_from_dict(_load_json(Path(path)))
    except DatasetFormatError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None


def roundtrip(dataset: FusionDataset) -> FusionDataset:
    """Serialize to the on-disk text layout and parse it back."""
    return dataset_from_dict(json.loads(json.dumps(dataset_to_dict(dataset))))


def save_ground_truth(truth: GroundTruth, path) -> None:
    doc = {"centers": [c.tolist() for c in truth.centers], "metadata": truth.metadata}
    Path(path).write_text(json.dumps(doc))


def load_ground_truth(path) -> GroundTruth:
    doc = _load_json(Path(path))
    centers = _require(doc, "centers", "")
    return GroundTruth(tuple(np.array(c, dtype=float) for c in centers), doc.get("metadata", {}))


def datasets_equal(a: FusionDataset, b: FusionDataset) -> bool:
    """Exact structural and numerical equality."""
    if a.intrinsic_dim != b.intrinsic_dim or len(a.modalities) != len(b.modalities):
        return False
    if [l.as_tuple() for l in a.calibration] != [l.as_tuple() for l in b.calibration]:
        return False
    for ma, mb in zip(a.modalities, b.modalities):
        if (ma.modality_id, ma.ambient_dim, ma.sigma, ma.n_bursts) != (
            mb.modality_id,
            mb.ambient_dim,
            mb.sigma,
            mb.n_bursts,
        ):
            return False
        for ba, bb in zip(ma.bursts, mb.bursts):
            if ba.samples.shape != bb.samples.shape or not np.array_equal(ba.samples, bb.samples):
                return False
    return True
