"""Command line driver: ``gappy-fuse <subcommand> --config exp.toml``.

Each run lives in its own directory.  ``generate``, ``rigidity``, ``train``
and ``evaluate`` each perform one stage and reuse whatever earlier stages
left in ``--out`` when it points at an existing run directory; otherwise a
fresh timestamped directory is created below ``--out``.  ``run`` performs
every stage and the report.

Exit status: 0 on success (and thresholds met), 2 when evaluation
thresholds fail, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .evaluation import (
    baseline_register,
    complete_distance_matrix,
    completion_error,
    isometry_error,
    model_isometry,
    partial_from_ground_truth,
    read_metrics_csv,
    stack_embedding,
    write_metrics_csv,
    write_scatter_csv,
)
from .losses import GappyLocaModel
from .model import load_dataset, load_ground_truth, save_dataset, save_ground_truth
from .rigidity import check_patch_rigidity
from .scenarios import (
    CalibrationSpec,
    Component,
    ConfigurationError,
    Observer,
    Rect,
    ScenarioConfig,
    WaveConfig,
    WifiConfig,
    default_scenario,
    make_synthetic_scenario,
    make_wave_scenario,
    make_wifi_scenario,
)
from .training import TrainConfig, TrainingDivergedError, embed_dataset, train

SYNTHETIC = ("same_domain", "overlap", "patchy", "french_flag")
ARTIFACTS = {
    "dataset": "dataset.json",
    "truth": "ground_truth.json",
    "rigidity": "rigidity.json",
    "model": "model.json",
    "history": "history.csv",
    "metrics": "metrics.csv",
    "embedding": "embedding.csv",
    "svg": "isometry.svg",
}
SCATTER_PREFIX = "scatter_"  # one two-column CSV per method: scatter_<method>.csv
SUMMARY = "summary.txt"
MAX_SCATTER_POINTS = 5000


class CliError(Exception):
    """Anything that should end the process with exit status 1."""


# --------------------------------------------------------------------------
# configuration


@dataclass
class EvaluationConfig:
    n_pairs: int | None = None  # None: all pairs up to 2000 points, else a seeded sample
    baseline: bool = False
    completion: bool = False
    max_relative_rmse: float | None = None
    baseline_max_relative_rmse: float | None = None
    baseline_min_ratio: float | None = None  # baseline rel. RMSE must be >= ratio * Gappy rel. RMSE
    max_completion_rmse: float | None = None


@dataclass
class ExperimentConfig:
    name: str
    scenario_kind: str
    scenario: object
    train: TrainConfig
    evaluation: EvaluationConfig
    out: str = "runs"
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def generate(self):
        if self.scenario_kind == "wifi":
            return make_wifi_scenario(self.scenario)
        if self.scenario_kind == "wave":
            return make_wave_scenario(self.scenario)
        return make_synthetic_scenario(self.scenario)


def _check_keys(section: dict, allowed, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigurationError(f"unknown field {path}.{key}")


def _rect(value, path: str) -> Rect:
    try:
        lo, hi = value
        return Rect(tuple(float(v) for v in lo), tuple(float(v) for v in hi))
    except (TypeError, ValueError):
        raise ConfigurationError(f"{path} must be [[lo...], [hi...]]") from None


def _components(items, path: str) -> list[Component]:
    comps = []
    for n, item in enumerate(items):
        _check_keys(item, ("lo", "hi", "n"), f"{path}[{n}]")
        comps.append(Component(_rect((item["lo"], item["hi"]), f"{path}[{n}]"), int(item["n"])))
    return comps


def _calibration(items, path: str) -> list[CalibrationSpec]:
    out = []
    for n, item in enumerate(items):
        _check_keys(item, ("a", "b", "lo", "hi", "count"), f"{path}[{n}]")
        out.append(
            CalibrationSpec(int(item["a"]), int(item["b"]), _rect((item["lo"], item["hi"]), f"{path}[{n}]"), int(item.get("count", 3)))
        )
    return out


def _scenario_section(sec: dict, seed: int):
    sec = dict(sec)
    kind = sec.pop("kind", None)
    if kind is None:
        raise ConfigurationError("missing field scenario.kind")
    if kind in SYNTHETIC:
        allowed = ("n_per_component", "calibration_count", "burst_size", "sigma", "distribution", "modalities", "calibration")
        _check_keys(sec, allowed, "scenario")
        if "modalities" in sec:
            mods = sec.pop("modalities")
            domains, functions = [], []
            for n, mod in enumerate(mods):
                _check_keys(mod, ("function", "components"), f"scenario.modalities[{n}]")
                functions.append(mod["function"])
                domains.append(_components(mod["components"], f"scenario.modalities[{n}].components"))
            cal = _calibration(sec.pop("calibration", []), "scenario.calibration")
            sec.pop("n_per_component", None)
            sec.pop("calibration_count", None)
            cfg = ScenarioConfig(kind, domains, functions, cal, seed=seed, **sec)
        else:
            cfg = default_scenario(kind, seed=seed, **sec)
    elif kind == "wifi":
        _check_keys(sec, [f.name for f in fields(WifiConfig) if f.name != "seed"], "scenario")
        cfg = WifiConfig(seed=seed, **sec)
    elif kind == "wave":
        _check_keys(sec, ("observers", "calibration", "n_samples", "burst_size", "sigma"), "scenario")
        if "observers" in sec:
            obs = []
            for n, o in enumerate(sec.pop("observers")):
                _check_keys(o, ("direction", "half_length", "components"), f"scenario.observers[{n}]")
                comps = _components(o["components"], f"scenario.observers[{n}].components")
                obs.append(Observer(tuple(o["direction"]), float(o["half_length"]), comps))
            sec["observers"] = obs
        if "calibration" in sec:
            sec["calibration"] = _calibration(sec["calibration"], "scenario.calibration")
        cfg = WaveConfig(seed=seed, **sec)
    else:
        raise ConfigurationError(f"scenario.kind: unknown scenario {kind!r}")
    cfg.validate()
    return kind, cfg


def _train_section(sec: dict, seed: int) -> TrainConfig:
    _check_keys(sec, [f.name for f in fields(TrainConfig) if f.name != "seed"], "train")
    try:
        return TrainConfig(seed=seed, **sec)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"train: {exc}") from None


def _evaluation_section(sec: dict) -> EvaluationConfig:
    _check_keys(sec, [f.name for f in fields(EvaluationConfig)], "evaluation")
    cfg = EvaluationConfig(**sec)
    if cfg.n_pairs is not None and cfg.n_pairs < 1:
        raise ConfigurationError("evaluation.n_pairs must be positive")
    return cfg


def load_experiment(path, seed: int | None = None) -> ExperimentConfig:
    """Parse and validate an experiment TOML file; ``seed`` overrides the file's global seed."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    _check_keys(raw, ("name", "seed", "out", "scenario", "train", "evaluation"), "config")
    if "scenario" not in raw:
        raise ConfigurationError("missing section scenario")
    glob_seed = int(raw.get("seed", 0) if seed is None else seed)
    if glob_seed < 0:
        raise ConfigurationError("seed must be non-negative")
    try:
        kind, scenario = _scenario_section(raw["scenario"], glob_seed)
    except TypeError as exc:
        raise ConfigurationError(f"scenario: {exc}") from None
    return ExperimentConfig(
        name=str(raw.get("name", path.stem)),
        scenario_kind=kind,
        scenario=scenario,
        train=_train_section(raw.get("train", {}), glob_seed),
        evaluation=_evaluation_section(raw.get("evaluation", {})),
        out=str(raw.get("out", "runs")),
        seed=glob_seed,
        raw=raw,
    )


# --------------------------------------------------------------------------
# stages


def _run_dir(out: str | None, exp: ExperimentConfig | None) -> Path:
    base = Path(out if out is not None else (exp.out if exp else "runs"))
    if (base / ARTIFACTS["dataset"]).exists() or (base / ARTIFACTS["metrics"]).exists():
        return base
    if exp is None:
        return base
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run = base / f"{exp.name}-{stamp}"
    n = 1
    while run.exists():
        n += 1
        run = base / f"{exp.name}-{stamp}-{n}"
    try:
        run.mkdir(parents=True)
    except OSError as exc:
        raise CliError(f"cannot create run directory {run}: {exc.strerror}") from None
    return run


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def stage_generate(exp: ExperimentConfig, run: Path):
    dataset, truth = exp.generate()
    save_dataset(dataset, run / ARTIFACTS["dataset"])
    save_ground_truth(truth, run / ARTIFACTS["truth"])
    (run / "config.toml").write_text(_dump_raw(exp.raw, exp.seed))
    return dataset, truth


def _load_generated(exp: ExperimentConfig, run: Path):
    if (run / ARTIFACTS["dataset"]).exists():
        return load_dataset(run / ARTIFACTS["dataset"]), load_ground_truth(run / ARTIFACTS["truth"])
    return stage_generate(exp, run)


def stage_rigidity(exp: ExperimentConfig, run: Path):
    dataset, truth = _load_generated(exp, run)
    report = check_patch_rigidity(dataset, truth=truth)
    _write_json(run / ARTIFACTS["rigidity"], report.to_dict())
    return report


def stage_train(exp: ExperimentConfig, run: Path):
    dataset, _ = _load_generated(exp, run)
    if not (run / ARTIFACTS["rigidity"]).exists():
        stage_rigidity(exp, run)
    model, history = train(dataset, exp.train)
    _write_json(run / ARTIFACTS["model"], model.to_dict())
    history.to_csv(run / ARTIFACTS["history"])
    return model


def stage_evaluate(exp: ExperimentConfig, run: Path) -> bool:
    """Metrics, embedding and scatter artifacts; returns whether all thresholds hold."""
    dataset, truth = _load_generated(exp, run)
    if (run / ARTIFACTS["model"]).exists():
        model = GappyLocaModel.from_dict(json.loads((run / ARTIFACTS["model"]).read_text()))
    else:
        model = stage_train(exp, run)
    ev = exp.evaluation
    scenario = exp.scenario_kind
    gappy = model_isometry(model, dataset, truth, ev.n_pairs, exp.seed)
    rows = [{"scenario": scenario, "method": "gappy_loca", **gappy.row(), "seed": exp.seed}]
    series = {"gappy_loca": gappy}
    ok = ev.max_relative_rmse is None or gappy.relative_rmse <= ev.max_relative_rmse

    if ev.baseline:
        base = baseline_register(dataset, exp.train)
        E, X = stack_embedding(base.means, truth)
        bsum = isometry_error(E, X, ev.n_pairs, exp.seed)
        rows.append({"scenario": scenario, "method": "baseline_register", **bsum.row(), "seed": exp.seed})
        series["baseline_register"] = bsum
        if ev.baseline_max_relative_rmse is not None:
            ok &= bsum.relative_rmse <= ev.baseline_max_relative_rmse
        if ev.baseline_min_ratio is not None:
            ok &= bsum.relative_rmse >= ev.baseline_min_ratio * gappy.relative_rmse
    if ev.completion:
        partial, index, full = partial_from_ground_truth(dataset, truth)
        completed = complete_distance_matrix(model, dataset, partial, index)
        comp = completion_error(completed, full, ~partial.known)
        rows.append(
            {
                "scenario": scenario,
                "method": "completion",
                "rmse": comp["rmse"],
                "relative_rmse": comp["relative_rmse"],
                "max_error": float(np.max(np.abs(completed - full)[~partial.known], initial=0.0)),
                "n_pairs": comp["n_entries"],
                "seed": exp.seed,
            }
        )
        if ev.max_completion_rmse is not None:
            ok &= comp["relative_rmse"] <= ev.max_completion_rmse

    write_metrics_csv(run / ARTIFACTS["metrics"], rows)
    _write_embedding(run / ARTIFACTS["embedding"], model, dataset, truth)
    for method, summary in series.items():
        write_scatter_csv(run / f"{SCATTER_PREFIX}{method}.csv", summary)
    return bool(ok)


def _write_embedding(path: Path, model, dataset, truth) -> None:
    emb = embed_dataset(model, dataset)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = emb.means[0].shape[1]
        writer.writerow(
            ["modality", "burst"] + [f"z{a}" for a in range(dim)] + [f"x{a}" for a in range(truth.centers[0].shape[1])]
        )
        for mod, means, cents in zip(dataset.modalities, emb.means, truth.centers):
            for b, (z, x) in enumerate(zip(means, cents)):
                writer.writerow([mod.modality_id, b] + [repr(float(v)) for v in z] + [repr(float(v)) for v in x])


def _dump_raw(raw: dict, seed: int) -> str:
    """Small TOML writer for the resolved config copy (tables of scalars, lists and arrays of tables)."""

    def value(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(value(x) for x in v) + "]"
        if isinstance(v, dict):
            return "{" + ", ".join(f"{k} = {value(x)}" for k, x in v.items()) + "}"
        return repr(v)

    lines = []
    doc = dict(raw)
    doc["seed"] = seed
    for k, v in doc.items():
        if not isinstance(v, dict):
            lines.append(f"{k} = {value(v)}")
    for k, v in doc.items():
        if isinstance(v, dict):
            lines.append(f"\n[{k}]")
            lines.extend(f"{kk} = {value(vv)}" for kk, vv in v.items())
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# report


def _nice_ticks(hi: float, n: int = 5) -> list[float]:
    if hi <= 0:
        return [0.0]
    raw = hi / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    return [i * step for i in range(int(hi / step) + 1)]


COLORS = {"gappy_loca": "#1f77b4", "baseline_register": "#d62728"}


def scatter_svg(series: dict[str, tuple[np.ndarray, np.ndarray]], width: int = 480, height: int = 480) -> str:
    """Latent (x) against embedded (y) pairwise distances, identity line included."""
    margin = 56
    top = max([1e-12] + [float(max(np.max(x, initial=0), np.max(y, initial=0))) for x, y in series.values()])
    span = top * 1.05
    sx = (width - 2 * margin) / span
    sy = (height - 2 * margin) / span

    def px(x):
        return margin + x * sx

    def py(y):
        return height - margin - y * sy

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{px(0):.2f}" y1="{py(0):.2f}" x2="{px(span):.2f}" y2="{py(0):.2f}" stroke="black"/>',
        f'<line x1="{px(0):.2f}" y1="{py(0):.2f}" x2="{px(0):.2f}" y2="{py(span):.2f}" stroke="black"/>',
    ]
    for t in _nice_ticks(span):
        out.append(f'<line x1="{px(t):.2f}" y1="{py(0):.2f}" x2="{px(t):.2f}" y2="{py(0) + 4:.2f}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{py(0) + 16:.2f}" font-size="10" text-anchor="middle">{t:g}</text>')
        out.append(f'<line x1="{px(0) - 4:.2f}" y1="{py(t):.2f}" x2="{px(0):.2f}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{px(0) - 6:.2f}" y="{py(t) + 3:.2f}" font-size="10" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{width / 2:.0f}" y="{height - 14}" font-size="12" text-anchor="middle">latent distance</text>')
    out.append(
        f'<text x="14" y="{height / 2:.0f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {height / 2:.0f})">embedded distance</text>'
    )
    out.append(
        f'<line class="identity" x1="{px(0):.2f}" y1="{py(0):.2f}" x2="{px(span):.2f}" y2="{py(span):.2f}" '
        'stroke="gray" stroke-dasharray="4 3"/>'
    )
    for n, (name, (x, y)) in enumerate(series.items()):
        color = COLORS.get(name, ["#2ca02c", "#9467bd", "#8c564b"][n % 3])
        idx = np.arange(len(x))
        if len(idx) > MAX_SCATTER_POINTS:
            idx = np.sort(np.random.default_rng(n).choice(len(x), MAX_SCATTER_POINTS, replace=False))
        out.append(f'<g class="series" data-method="{name}" fill="{color}" fill-opacity="0.5">')
        out.extend(f'<circle cx="{px(x[i]):.2f}" cy="{py(y[i]):.2f}" r="1.5"/>' for i in idx)
        out.append("</g>")
        out.append(f'<circle cx="{margin + 12}" cy="{margin + 10 + 16 * n}" r="4" fill="{color}"/>')
        out.append(f'<text x="{margin + 22}" y="{margin + 14 + 16 * n}" font-size="11">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(run) -> str:
    """Write the scatter SVG and a text summary for a finished run; returns the summary."""
    run = Path(run)
    scatter_files = sorted(run.glob(f"{SCATTER_PREFIX}*.csv"))
    missing = [ARTIFACTS["metrics"]] if not (run / ARTIFACTS["metrics"]).exists() else []
    if not scatter_files:
        missing.append(f"{SCATTER_PREFIX}<method>.csv")
    if missing:
        raise CliError(f"{run}: missing artifacts {', '.join(missing)}")
    rows = read_metrics_csv(run / ARTIFACTS["metrics"])
    order = [r["method"] for r in rows]

    def method_of(path: Path) -> str:
        return path.stem[len(SCATTER_PREFIX) :]

    def rank(path: Path) -> int:
        return order.index(method_of(path)) if method_of(path) in order else len(order)

    series: dict[str, tuple[list, list]] = {}
    for path in sorted(scatter_files, key=rank):
        xs, ys = series.setdefault(method_of(path), ([], []))
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                xs.append(float(rec["latent_distance"]))
                ys.append(float(rec["embedded_distance"]))
    arrays = {k: (np.array(x), np.array(y)) for k, (x, y) in series.items()}
    (run / ARTIFACTS["svg"]).write_text(scatter_svg(arrays))
    lines = [f"run {run}"]
    for r in rows:
        lines.append(
            f"{r['scenario']:<12} {r['method']:<18} rmse {float(r['rmse']):.4g}  "
            f"relative {100 * float(r['relative_rmse']):.2f}%  ({r['n_pairs']} pairs)"
        )
    text = "\n".join(lines) + "\n"
    (run / SUMMARY).write_text(text)
    return text


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gappy-fuse", description="Fuse partially overlapping sensor modalities.")
    parser.add_argument("command", choices=["generate", "rigidity", "train", "evaluate", "run", "report"])
    parser.add_argument("--config", help="experiment TOML file (not needed for report)")
    parser.add_argument("--out", help="output root, or an existing run directory to continue")
    parser.add_argument("--seed", type=int, help="override the global seed")
    parser.add_argument("--dry-run", action="store_true", help="generate and check rigidity only")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            if args.out is None:
                raise CliError("report needs --out <run directory>")
            print(emit_report(args.out), end="")
            return 0
        if args.config is None:
            raise CliError(f"{args.command} needs --config")
        exp = load_experiment(args.config, args.seed)
        run = _run_dir(args.out, exp)
        print(f"run directory: {run}")
        if args.dry_run or args.command in ("generate", "rigidity"):
            if args.command == "generate" and not args.dry_run:
                stage_generate(exp, run)
                return 0
            report = stage_rigidity(exp, run)
            print(f"rigidity verdict: {report.verdict}")
            return 0
        if args.command == "train":
            stage_train(exp, run)
            return 0
        ok = stage_evaluate(exp, run)
        if args.command == "run":
            print(emit_report(run), end="")
        print("thresholds met" if ok else "thresholds NOT met")
        return 0 if ok else 2
    except (ConfigurationError, CliError, TrainingDivergedError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
