"""Seeded generators for latent domains, modality functions and burst data.

Every generator is a pure function of its config (seed included): the same
config produces bit-identical datasets.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import Burst, CalibrationLink, FusionDataset, GroundTruth, ModalityData

PI = math.pi


class ConfigurationError(ValueError):
    pass


# --------------------------------------------------------------------------
# geometry helpers


@dataclass(frozen=True)
class Rect:
    """Axis-aligned box ``[lo, hi]`` in latent coordinates."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or any(h < l for l, h in zip(self.lo, self.hi)):
            raise ConfigurationError(f"bad rectangle {self.lo} .. {self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= np.array(self.lo) - tol) & (pts <= np.array(self.hi) + tol), axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def grid(self, per_axis: int = 9) -> np.ndarray:
        axes = [np.linspace(l, h, per_axis) for l, h in zip(self.lo, self.hi)]
        return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)

    def intersect(self, other: "Rect") -> "Rect | None":
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(h <= l for l, h in zip(lo, hi)):
            return None
        return Rect(lo, hi)


def in_union(rects: Sequence[Rect], pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(pts)
    inside = np.zeros(len(pts), dtype=bool)
    for r in rects:
        inside |= r.contains(pts)
    return inside


# --------------------------------------------------------------------------
# bursts


def sample_burst(center, sigma: float, m: int, rng: np.random.Generator, distribution: str = "gaussian") -> np.ndarray:
    """``m`` i.i.d. latent samples around ``center`` with covariance ``sigma^2 I``.

    ``distribution="uniform_ball"`` draws uniformly from a ball whose radius
    ``sigma * sqrt(d + 2)`` gives the same per-coordinate variance.
    """
    if m < 2:
        raise ValueError(f"burst size must be >= 2, got {m}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    center = np.asarray(center, dtype=float)
    return sample_bursts(center[None, :], sigma, m, rng, distribution)[0]


def sample_bursts(centers: np.ndarray, sigma: float, m: int, rng: np.random.Generator, distribution: str = "gaussian"):
    """Vectorized :func:`sample_burst` for an ``(n, d)`` array of centers; returns ``(n, m, d)``."""
    if m < 2:
        raise ValueError(f"burst size must be >= 2, got {m}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    n, d = centers.shape
    if distribution == "gaussian":
        noise = rng.standard_normal((n, m, d)) * sigma
    elif distribution == "uniform_ball":
        direction = rng.standard_normal((n, m, d))
        direction /= np.linalg.norm(direction, axis=2, keepdims=True)
        radius = sigma * math.sqrt(d + 2) * rng.uniform(size=(n, m, 1)) ** (1.0 / d)
        noise = direction * radius
    else:
        raise ValueError(f"unknown burst distribution {distribution!r}")
    return centers[:, None, :] + noise


# --------------------------------------------------------------------------
# modality functions


def cosine_modality_eval(x, which: int) -> np.ndarray:
    """The two planar test modalities; accepts a single point or an ``(n, 2)`` array."""
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    if pts.shape[1] != 2:
        raise ValueError("cosine modalities need 2-d latent points")
    phase = {1: 0.0, 2: PI / 2}[which]
    out = np.stack([pts[:, 0], np.cos(phase + 2 * PI * 0.3 * pts[:, 0]) + pts[:, 1]], axis=1)
    return out[0] if x.ndim == 1 else out


MODALITY_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "cos1": lambda x: cosine_modality_eval(x, 1),
    "cos2": lambda x: cosine_modality_eval(x, 2),
    "identity": lambda x: np.array(x, dtype=float),
}


# --------------------------------------------------------------------------
# synthetic planar scenarios


@dataclass
class Component:
    """A rectangle of a modality's domain and how many burst centers to draw from it."""

    rect: Rect
    n: int


@dataclass
class CalibrationSpec:
    """``count`` shared burst centers drawn in ``region``, observed by modalities ``a`` and ``b``."""

    a: int
    b: int
    region: Rect
    count: int = 3


@dataclass
class ScenarioConfig:
    scenario_id: str
    domains: list[list[Component]]  # per modality (ids 1..K)
    functions: list[str]
    calibration: list[CalibrationSpec]
    burst_size: int = 100
    sigma: float = 0.1
    distribution: str = "gaussian"
    seed: int = 0

    def validate(self) -> None:
        if len(self.domains) != len(self.functions):
            raise ConfigurationError("need one function per modality domain")
        if self.burst_size < 2:
            raise ConfigurationError(f"scenario.burst_size must be >= 2, got {self.burst_size}")
        if not self.sigma > 0:
            raise ConfigurationError(f"scenario.sigma must be positive, got {self.sigma}")
        for k, comps in enumerate(self.domains):
            if not comps:
                raise ConfigurationError(f"modality {k + 1} has an empty domain")
            for c in comps:
                if c.n < 1:
                    raise ConfigurationError(f"modality {k + 1}: component point count must be >= 1")
        for fn in self.functions:
            if fn not in MODALITY_FUNCTIONS:
                raise ConfigurationError(f"unknown modality function {fn!r}")
        K = len(self.domains)
        for spec in self.calibration:
            if not (1 <= spec.a <= K and 1 <= spec.b <= K) or spec.a == spec.b:
                raise ConfigurationError(f"calibration pair ({spec.a}, {spec.b}) invalid for {K} modalities")
            grid = spec.region.grid()
            for mod in (spec.a, spec.b):
                rects = [c.rect for c in self.domains[mod - 1]]
                if not in_union(rects, grid).all():
                    raise ConfigurationError(
                        f"calibration region {spec.region.lo}..{spec.region.hi} is not inside the "
                        f"domain of modality {mod} (empty intersection)"
                    )

    def to_dict(self) -> dict:
        return asdict(self)


def _components(*items) -> list[Component]:
    return [Component(Rect(lo, hi), n) for lo, hi, n in items]


def default_scenario(scenario_id: str, **overrides) -> ScenarioConfig:
    """Defaults of the planar experiments (full scale)."""
    n = overrides.pop("n_per_component", 500)
    n_cal = overrides.pop("calibration_count", 3)
    sq = ((0.0, 0.0), (PI, PI))
    if scenario_id == "same_domain":
        cfg = ScenarioConfig(
            scenario_id,
            [_components((*sq, n)), _components((*sq, n))],
            ["cos1", "cos2"],
            [CalibrationSpec(1, 2, Rect(*sq), n_cal)],
        )
    elif scenario_id == "overlap":
        cfg = ScenarioConfig(
            scenario_id,
            [_components((*sq, n)), _components(((PI / 2, 0.0), (3 * PI / 2, PI), n))],
            ["cos1", "cos2"],
            [CalibrationSpec(1, 2, Rect((PI / 2, 0.0), (PI, PI)), n_cal)],
        )
    elif scenario_id == "patchy":
        cfg = ScenarioConfig(
            scenario_id,
            [
                _components((*sq, n), ((2 * PI, 0.0), (3 * PI, PI), n)),
                _components(((PI / 2, 0.0), (5 * PI / 2, PI), n)),
            ],
            ["cos1", "cos2"],
            [
                CalibrationSpec(1, 2, Rect((PI / 2, 0.0), (PI, PI)), n_cal),
                CalibrationSpec(1, 2, Rect((2 * PI, 0.0), (5 * PI / 2, PI)), n_cal),
            ],
        )
    elif scenario_id == "french_flag":
        # three vertical stripes; the outer two are seen by the same sensor type
        left = ((0.0, 0.0), (1.25 * PI, PI))
        mid = ((PI, 0.0), (2 * PI, PI))
        right = ((1.75 * PI, 0.0), (3 * PI, PI))
        cfg = ScenarioConfig(
            scenario_id,
            [_components((*left, n)), _components((*mid, n)), _components((*right, n))],
            ["cos1", "cos2", "cos1"],
            [
                CalibrationSpec(1, 2, Rect((PI, 0.0), (1.25 * PI, PI)), n_cal),
                CalibrationSpec(2, 3, Rect((1.75 * PI, 0.0), (2 * PI, PI)), n_cal),
            ],
        )
    else:
        raise ConfigurationError(f"unknown synthetic scenario {scenario_id!r}")
    for key, val in overrides.items():
        if not hasattr(cfg, key):
            raise ConfigurationError(f"unknown scenario field {key!r}")
        setattr(cfg, key, val)
    return cfg


def _assemble(d, sigma, per_mod_bursts, per_mod_centers, links, metadata):
    modalities, centers = [], []
    for k, (bursts, cents) in enumerate(zip(per_mod_bursts, per_mod_centers)):
        arr = np.concatenate(bursts, axis=0)
        modalities.append(
            ModalityData(k + 1, arr.shape[2], tuple(Burst(b, i) for i, b in enumerate(arr)), float(sigma))
        )
        centers.append(np.concatenate(cents, axis=0))
    return FusionDataset(d, tuple(modalities), tuple(links)), GroundTruth(tuple(centers), metadata)


def make_synthetic_scenario(config: ScenarioConfig):
    """Planar two-or-more-modality scenarios; returns ``(dataset, ground_truth)``.

    Regular bursts come first in each modality, in component order;
    calibration bursts are appended after them.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    K = len(config.domains)
    fns = [MODALITY_FUNCTIONS[f] for f in config.functions]
    bursts: list[list[np.ndarray]] = [[] for _ in range(K)]
    cents: list[list[np.ndarray]] = [[] for _ in range(K)]
    counts = [0] * K

    def observe(k, centers):
        lat = sample_bursts(centers, config.sigma, config.burst_size, rng, config.distribution)
        obs = fns[k](lat.reshape(-1, lat.shape[2])).reshape(len(centers), config.burst_size, -1)
        bursts[k].append(obs)
        cents[k].append(centers)
        counts[k] += len(centers)

    for k, comps in enumerate(config.domains):
        for comp in comps:
            observe(k, comp.rect.sample(comp.n, rng))
    links = []
    for spec in config.calibration:
        centers = spec.region.sample(spec.count, rng)
        i0, j0 = counts[spec.a - 1], counts[spec.b - 1]
        observe(spec.a - 1, centers)
        observe(spec.b - 1, centers)
        links += [CalibrationLink(i0 + n, j0 + n, spec.a, spec.b) for n in range(spec.count)]
    meta = {"scenario": config.scenario_id, "config": config.to_dict()}
    return _assemble(config.domains[0][0].rect.dim, config.sigma, bursts, cents, links, meta)


def scenario_functions(config) -> list[Callable[[np.ndarray], np.ndarray]]:
    """Latent-to-observation map of every modality of a generated scenario."""
    if isinstance(config, ScenarioConfig):
        return [MODALITY_FUNCTIONS[f] for f in config.functions]
    if isinstance(config, WifiConfig):
        return [lambda x, t=t: wifi_signal_eval(x, config)[..., [i - 1 for i in t]] for t in config.triplets]
    if isinstance(config, WaveConfig):
        return [lambda x, o=o: trajectory_observation(x, o, config.n_samples) for o in config.observers]
    raise TypeError(f"unsupported config type {type(config).__name__}")


# --------------------------------------------------------------------------
# Wi-Fi floor plan


DEFAULT_TRANSMITTERS = (
    (40.0, 60.0),  # 1
    (60.0, 140.0),  # 2
    (340.0, 260.0),  # 3
    (260.0, 240.0),  # 4
    (60.0, 250.0),  # 5
    (120.0, 80.0),  # 6
    (230.0, 90.0),  # 7
    (320.0, 150.0),  # 8
    (140.0, 280.0),  # 9
    (180.0, 200.0),  # 10
    (170.0, 20.0),  # 11
    (300.0, 60.0),  # 12
)
DEFAULT_TRIPLETS = ((1, 2, 6), (5, 9, 10), (6, 7, 11), (3, 4, 8), (7, 8, 12))


@dataclass
class WifiConfig:
    transmitters: tuple[tuple[float, float], ...] = DEFAULT_TRANSMITTERS
    decay: float = 100.0
    threshold: float = 0.05
    triplets: tuple[tuple[int, int, int], ...] = DEFAULT_TRIPLETS
    floor: tuple[float, float] = (400.0, 300.0)
    n_per_modality: int = 150
    burst_size: int = 50
    sigma: float = 5.0
    calibration_per_edge: int = 3
    seed: int = 0

    def __post_init__(self):
        self.transmitters = tuple(tuple(float(v) for v in t) for t in self.transmitters)
        self.triplets = tuple(tuple(int(i) for i in t) for t in self.triplets)
        self.floor = tuple(float(v) for v in self.floor)

    def validate(self) -> None:
        if len(self.transmitters) != 12:
            raise ConfigurationError(f"need 12 transmitters, got {len(self.transmitters)}")
        for t in self.triplets:
            if len(t) != 3 or len(set(t)) != 3 or not all(1 <= i <= 12 for i in t):
                raise ConfigurationError(f"triplet {t} must name 3 distinct transmitters in 1..12")
        if not (self.decay > 0 and 0 < self.threshold <= 1):
            raise ConfigurationError("decay must be positive and threshold in (0, 1]")
        if self.burst_size < 2 or not self.sigma > 0 or self.n_per_modality < 1:
            raise ConfigurationError("need burst_size >= 2, sigma > 0, n_per_modality >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def wifi_signal_eval(x, cfg: WifiConfig) -> np.ndarray:
    """Thresholded strengths ``g_1..g_12`` at a point or an ``(..., 2)`` array of points."""
    x = np.asarray(x, dtype=float)
    mu = np.asarray(cfg.transmitters, dtype=float)
    sq = np.sum((x[..., None, :] - mu) ** 2, axis=-1)
    s = np.exp(-sq / cfg.decay**2)
    return np.where(s >= cfg.threshold, s, 0.0)


def _wifi_inside(pts: np.ndarray, triplet, cfg: WifiConfig) -> np.ndarray:
    """All three transmitters strictly positive, and inside the floor plan."""
    g = wifi_signal_eval(pts, cfg)[..., [i - 1 for i in triplet]]
    on_floor = np.all((pts >= 0) & (pts <= np.array(cfg.floor)), axis=-1)
    return np.all(g > 0, axis=-1) & on_floor


def _wifi_sample_centers(n, masks_fn, cfg, rng, what):
    """Rejection-sample ``n`` centers whose whole burst stays inside the domain(s)."""
    out_c, out_b = [], []
    floor = np.array(cfg.floor)
    tries = 0
    while sum(len(c) for c in out_c) < n:
        tries += 1
        if tries > 200:
            raise ConfigurationError(f"empty (or too thin) domain for {what}")
        cand = rng.uniform(0.0, 1.0, size=(4 * n, 2)) * floor
        ok = masks_fn(cand)
        cand = cand[ok]
        if not len(cand):
            continue
        lat = sample_bursts(cand, cfg.sigma, cfg.burst_size, rng)
        keep = np.all(masks_fn(lat), axis=1)
        out_c.append(cand[keep])
        out_b.append(lat[keep])
    return np.concatenate(out_c)[:n], np.concatenate(out_b)[:n]


def _max_spanning_tree(n: int, weights: dict[tuple[int, int], float]) -> list[tuple[int, int]]:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree = []
    for (a, b), w in sorted(weights.items(), key=lambda kv: (-kv[1], kv[0])):
        if w <= 0:
            continue
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            tree.append((a, b))
    return sorted(tree)


def wifi_domain_overlaps(cfg: WifiConfig, per_axis: int = 160) -> dict[tuple[int, int], float]:
    """Grid estimate of the pairwise intersection area of the triplet domains."""
    xs = np.linspace(0, cfg.floor[0], per_axis)
    ys = np.linspace(0, cfg.floor[1], per_axis)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    cell = cfg.floor[0] * cfg.floor[1] / len(grid)
    inside = [_wifi_inside(grid, t, cfg) for t in cfg.triplets]
    for t, m in zip(cfg.triplets, inside):
        if not m.any():
            raise ConfigurationError(f"triplet {t} has an empty domain")
    K = len(cfg.triplets)
    return {(a, b): float(np.sum(inside[a] & inside[b]) * cell) for a in range(K) for b in range(a + 1, K)}


def make_wifi_scenario(cfg: WifiConfig | None = None):
    """Five triplet modalities over a rectangular floor plan.

    Calibration bursts sit in the pairwise domain intersections along a
    maximum-overlap spanning tree of the modalities.
    """
    from .rigidity import check_patch_rigidity

    cfg = cfg or WifiConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    K = len(cfg.triplets)
    overlaps = wifi_domain_overlaps(cfg)
    tree = _max_spanning_tree(K, overlaps)
    if len(tree) != K - 1:
        raise ConfigurationError("triplet domains do not overlap enough to connect all modalities")

    def observe(k, lat):
        t = [i - 1 for i in cfg.triplets[k]]
        return wifi_signal_eval(lat, cfg)[..., t]

    bursts = [[] for _ in range(K)]
    cents = [[] for _ in range(K)]
    counts = [0] * K
    for k, t in enumerate(cfg.triplets):
        c, lat = _wifi_sample_centers(cfg.n_per_modality, lambda p, t=t: _wifi_inside(p, t, cfg), cfg, rng, f"triplet {t}")
        bursts[k].append(observe(k, lat))
        cents[k].append(c)
        counts[k] += len(c)
    links = []
    for a, b in tree:
        ta, tb = cfg.triplets[a], cfg.triplets[b]
        c, lat = _wifi_sample_centers(
            cfg.calibration_per_edge,
            lambda p: _wifi_inside(p, ta, cfg) & _wifi_inside(p, tb, cfg),
            cfg,
            rng,
            f"intersection of triplets {ta} and {tb}",
        )
        lat_b = sample_bursts(c, cfg.sigma, cfg.burst_size, rng)
        # the second modality's burst gets its own noise; redraw until it stays in the domain
        for n in range(len(c)):
            while not np.all(_wifi_inside(lat_b[n], tb, cfg)):
                lat_b[n] = sample_bursts(c[n : n + 1], cfg.sigma, cfg.burst_size, rng)[0]
        i0, j0 = counts[a], counts[b]
        bursts[a].append(observe(a, lat))
        bursts[b].append(observe(b, lat_b))
        for k in (a, b):
            cents[k].append(c)
            counts[k] += len(c)
        links += [CalibrationLink(i0 + n, j0 + n, a + 1, b + 1) for n in range(len(c))]
    meta = {"scenario": "wifi", "config": cfg.to_dict(), "tree": [list(e) for e in tree]}
    dataset, truth = _assemble(2, cfg.sigma, bursts, cents, links, meta)
    report = check_patch_rigidity(dataset)
    if not report.verdict:
        raise ConfigurationError(f"generated Wi-Fi patch graph is not rigid: {report.to_dict()}")
    return dataset, truth


# --------------------------------------------------------------------------
# wave equation with travelling observers


def wave_eval(x, t):
    """``u(x, t) = cos(2 pi x / 140) cos(2 pi t / 440)``."""
    return np.cos(2 * PI * np.asarray(x, dtype=float) / 140.0) * np.cos(2 * PI * np.asarray(t, dtype=float) / 440.0)


@dataclass
class Observer:
    """A travelling observer: straight space-time segment centered on the burst point."""

    direction: tuple[float, float]
    half_length: float
    domain: list[Component]

    def __post_init__(self):
        v = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ConfigurationError("observer direction must be nonzero")
        self.direction = tuple(float(c) for c in v / norm)


def trajectory_observation(pts, observer: Observer, n_samples: int) -> np.ndarray:
    """``u`` at ``n_samples`` equispaced points of the observer's segment through each point."""
    pts = np.asarray(pts, dtype=float)
    offsets = np.linspace(-observer.half_length, observer.half_length, n_samples)
    v = np.asarray(observer.direction)
    xs = pts[..., 0, None] + offsets * v[0]
    ts = pts[..., 1, None] + offsets * v[1]
    return wave_eval(xs, ts)


def _default_observers() -> list[Observer]:
    two_pi = 2 * PI
    return [
        Observer((1.0, 0.0), 0.6, _components(((0.0, 1.0), (2.5, 1.4), 200), ((4.5, 1.0), (two_pi, 1.2), 100))),
        Observer((0.0, 1.0), 0.6, _components(((2.0, 1.0), (4.7, 1.4), 200))),
        Observer((1.0, 1.0), 0.6, _components(((4.2, 1.1), (two_pi, 1.4), 150))),
    ]


def _default_wave_calibration() -> list[CalibrationSpec]:
    return [
        CalibrationSpec(1, 2, Rect((2.0, 1.0), (2.5, 1.4)), 3),
        CalibrationSpec(2, 3, Rect((4.2, 1.1), (4.7, 1.4)), 3),
        CalibrationSpec(1, 3, Rect((4.5, 1.1), (2 * PI, 1.2)), 3),
    ]


@dataclass
class WaveConfig:
    observers: list[Observer] = field(default_factory=_default_observers)
    calibration: list[CalibrationSpec] = field(default_factory=_default_wave_calibration)
    n_samples: int = 7
    burst_size: int = 50
    sigma: float = 0.02
    seed: int = 0

    def validate(self) -> None:
        d = 2
        if self.n_samples < 2 * d + 1:
            raise ConfigurationError(
                f"n_samples={self.n_samples} < 2d+1={2 * d + 1}: trajectories too short to embed the domain"
            )
        if len(self.observers) < 1:
            raise ConfigurationError("need at least one observer")
        as_scenario = ScenarioConfig(
            "wave",
            [o.domain for o in self.observers],
            ["identity"] * len(self.observers),
            self.calibration,
            self.burst_size,
            self.sigma,
        )
        as_scenario.validate()

    def to_dict(self) -> dict:
        return asdict(self)


def make_wave_scenario(cfg: WaveConfig | None = None):
    """Three travelling-observer modalities of the closed-form wave solution."""
    from .rigidity import check_patch_rigidity

    cfg = cfg or WaveConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    K = len(cfg.observers)
    bursts = [[] for _ in range(K)]
    cents = [[] for _ in range(K)]
    counts = [0] * K

    def observe(k, centers):
        lat = sample_bursts(centers, cfg.sigma, cfg.burst_size, rng)
        bursts[k].append(trajectory_observation(lat, cfg.observers[k], cfg.n_samples))
        cents[k].append(centers)
        counts[k] += len(centers)

    for k, obs in enumerate(cfg.observers):
        for comp in obs.domain:
            observe(k, comp.rect.sample(comp.n, rng))
    links = []
    for spec in cfg.calibration:
        centers = spec.region.sample(spec.count, rng)
        i0, j0 = counts[spec.a - 1], counts[spec.b - 1]
        observe(spec.a - 1, centers)
        observe(spec.b - 1, centers)
        links += [CalibrationLink(i0 + n, j0 + n, spec.a, spec.b) for n in range(spec.count)]
    meta = {"scenario": "wave", "config": cfg.to_dict()}
    dataset, truth = _assemble(2, cfg.sigma, bursts, cents, links, meta)
    report = check_patch_rigidity(dataset)
    if not report.verdict:
        raise ConfigurationError(f"wave observer graph is not rigid: {report.to_dict()}")
    return dataset, truth


# --------------------------------------------------------------------------
# point case


def make_point_case(n_per_type: int = 10, seed: int = 0):
    """Three point types carrying sensor subsets A, B (five sensors each, d = 2).

    Type 1 points carry both subsets, types 2 and 3 one each, plus a few
    private sensors.  Returns a list of ``{"point_id", "sensor_ids"}``
    records and the latent positions.
    """
    rng = np.random.default_rng(seed)
    subset_a = ["A0", "A1", "A2", "A3", "A4"]
    subset_b = ["B0", "B1", "B2", "B3", "B4"]
    records, latent = [], []
    pid = 0
    for kind, sensors in ((1, subset_a + subset_b), (2, subset_a), (3, subset_b)):
        for _ in range(n_per_type):
            extra = [f"p{pid}"]
            records.append({"point_id": pid, "sensor_ids": sensors + extra, "type": kind})
            latent.append(rng.uniform(0, PI, size=2))
            pid += 1
    return records, np.array(latent)
