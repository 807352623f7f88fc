"""Acceptance suite: one test per criterion, each printing a single pass/fail line.

The experiment criteria drive the real pipeline through ``gappy_fuse.cli.main``
with the configs in ``configs/``.  Expect roughly half an hour on one core.
Run just this file with ``pytest tests/test_acceptance.py -v -s``.
"""

import itertools
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from gappy_fuse.cli import load_experiment, main
from gappy_fuse.evaluation import model_isometry, read_metrics_csv
from gappy_fuse.losses import calibration_loss, reconstruction_loss, whitening_loss
from gappy_fuse.model import Burst, CalibrationLink, FusionDataset, ModalityData
from gappy_fuse.rigidity import (
    Graph,
    check_patch_rigidity,
    check_point_rigidity,
    disconnected_subgraphs,
    orthogonal_dof,
    point_graph,
    whitney_count,
)
from gappy_fuse.training import train

from test_losses import _model, _two_modality, fd_check, random_decoder, random_encoder
from test_rigidity import closure_components

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def announce(capsys, number: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")


class Runs:
    """Runs each experiment config at most once per session through the CLI."""

    def __init__(self, root: Path):
        self.root = root
        self.done: dict[str, tuple[Path, int, float]] = {}

    def get(self, name: str, tag: str = "") -> tuple[Path, int, float]:
        key = name + tag
        if key not in self.done:
            out = self.root / key
            t0 = time.perf_counter()
            code = main(["run", "--config", str(CONFIGS / f"{name}.toml"), "--out", str(out)])
            seconds = time.perf_counter() - t0
            (run,) = [p for p in out.iterdir() if p.is_dir()]
            self.done[key] = (run, code, seconds)
        return self.done[key]


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


def metrics(run: Path) -> dict[str, dict]:
    return {row["method"]: row for row in read_metrics_csv(run / "metrics.csv")}


# -- 1. gradients --------------------------------------------------------------


def test_criterion_1_gradients(capsys):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    errors = []
    for trial in range(40):
        D, p, m = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(2, 9))
        enc = random_encoder(rng, D, p, width=int(rng.integers(3, 7)), seed=trial)
        if trial % 4 == 3:
            enc.mix = rng.normal(size=(D, D))
        rank = int(rng.integers(1, p)) if (trial % 2 and p > 1) else None
        bursts = [rng.normal(size=(m, D)) for _ in range(int(rng.integers(1, 4)))]
        sigma = float(rng.uniform(0.3, 1.5))
        _, g = whitening_loss(enc, bursts, sigma, rank)
        errors.append(("whitening", fd_check(lambda: whitening_loss(enc, bursts, sigma, rank)[0], [enc.net], [g])))
    for trial in range(35):
        D, p = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        enc = random_encoder(rng, D, p, width=int(rng.integers(3, 7)), seed=100 + trial)
        dec = random_decoder(rng, p, D, width=int(rng.integers(3, 7)), seed=200 + trial)
        bursts = [rng.normal(size=(int(rng.integers(2, 8)), D)) for _ in range(int(rng.integers(1, 4)))]
        lam, per_sample = float(rng.uniform(0.2, 2.0)), bool(trial % 2)
        _, ge, gd = reconstruction_loss(enc, dec, bursts, lam, per_sample)
        err = fd_check(lambda: reconstruction_loss(enc, dec, bursts, lam, per_sample)[0], [enc.net, dec.net], [ge, gd])
        errors.append(("reconstruction", err))
    for trial in range(35):
        p = int(rng.integers(1, 4))
        n_links = int(rng.integers(1, 5))
        links = [(int(rng.integers(0, 3)), int(rng.integers(0, 3)), 1, 2) for _ in range(n_links)]
        ds = _two_modality(rng, d=min(p, 2), links=links)
        encs = [random_encoder(rng, 2, p, seed=300 + trial), random_encoder(rng, 3, p, seed=400 + trial)]
        model = _model(encs, ds, p)
        _, grads = calibration_loss(model, ds)
        errors.append(("calibration", fd_check(lambda: calibration_loss(model, ds)[0], [e.net for e in encs], grads)))
    seconds = time.perf_counter() - t0
    worst = max(e for _, e in errors)
    ok = len(errors) >= 100 and worst <= 1e-5 and seconds < 60
    announce(capsys, 1, ok, f"{len(errors)} instances, worst relative error {worst:.2e}, {seconds:.1f} s")
    assert ok


# -- 2. rigidity -----------------------------------------------------------------


def _random_patch_dataset(rng, n: int) -> tuple[FusionDataset, list]:
    n_links = int(rng.integers(0, 4 * n + 1))
    mods = tuple(ModalityData(k, 1, (Burst(np.zeros((2, 1))),), 0.1) for k in range(1, n + 1))
    pairs = []
    for _ in range(n_links):
        a, b = rng.choice(n, size=2, replace=False) if n > 1 else (0, 0)
        if a != b:
            pairs.append((int(a), int(b)))
    links = tuple(CalibrationLink(0, 0, a + 1, b + 1) for a, b in pairs)
    return FusionDataset(2, mods, links), pairs


def _patch_oracle(n: int, pairs: list) -> bool:
    if n == 1:
        return True
    counts = [sum(v in pair for pair in pairs) for v in range(n)]
    return len(closure_components(n, pairs)) == 1 and min(counts) >= 3


def _point_oracle(sets: list[set]) -> bool:
    n = len(sets)
    edges = [(a, b) for a, b in itertools.combinations(range(n), 2) if len(sets[a] & sets[b]) >= 5]
    if n == 1:
        return True
    neighbors = [len({b for e in edges for b in e if a in e} - {a}) for a in range(n)]
    return len(closure_components(n, edges)) == 1 and min(neighbors) >= 3


def test_criterion_2_rigidity(capsys):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    mismatches = 0
    for trial in range(500):
        n = int(rng.integers(1, 51))
        # connectivity against transitive closure
        pairs = [tuple(int(v) for v in rng.choice(n, 2, replace=False)) for _ in range(int(rng.integers(0, 2 * n)))] if n > 1 else []
        g = Graph(range(n))
        for a, b in pairs:
            g.add_edge(a, b)
        mismatches += [frozenset(c) for c in disconnected_subgraphs(g)] != closure_components(n, pairs)
        # patch verdict against connectivity plus link counting
        ds, links = _random_patch_dataset(rng, n)
        mismatches += check_patch_rigidity(ds).verdict != _patch_oracle(n, links)
        # point verdict against shared-sensor counting
        if trial % 2 == 0:
            m = int(rng.integers(1, 16))
            sets = [set(rng.choice(12, size=int(rng.integers(3, 12)), replace=False).tolist()) for _ in range(m)]
            points = [(i, s) for i, s in enumerate(sets)]
            mismatches += check_point_rigidity(points, 2).verdict != _point_oracle(sets)
    counts_ok = orthogonal_dof(2) == 3 and whitney_count(2) == 5
    five = [("a", set(range(5))), ("b", set(range(5)))]
    four = [("a", set(range(4))), ("b", set(range(4)))]
    counts_ok &= point_graph(five, 2).degree("a") == 1 and point_graph(four, 2).degree("a") == 0
    two = FusionDataset(
        2,
        tuple(ModalityData(k, 1, (Burst(np.zeros((2, 1))),), 0.1) for k in (1, 2)),
        tuple(CalibrationLink(0, 0, 1, 2) for _ in range(3)),
    )
    counts_ok &= check_patch_rigidity(two).verdict
    counts_ok &= not check_patch_rigidity(FusionDataset(2, two.modalities, two.calibration[:2])).verdict
    seconds = time.perf_counter() - t0
    ok = mismatches == 0 and counts_ok and seconds < 10
    announce(capsys, 2, ok, f"500 graphs, {mismatches} oracle mismatches, counts 3 and 5 {'hold' if counts_ok else 'broken'}, {seconds:.1f} s")
    assert ok


# -- 3 to 7. experiments ---------------------------------------------------------


def test_criterion_3_same_domain(runs, capsys):
    run, code, seconds = runs.get("exp1_same_domain")
    rows = metrics(run)
    g, b = float(rows["gappy_loca"]["relative_rmse"]), float(rows["baseline_register"]["relative_rmse"])
    ok = g <= 0.075 and b <= 0.075 and seconds < 600
    announce(capsys, 3, ok, f"same_domain gappy {g:.2%}, baseline {b:.2%} (limit 7.5%), {seconds:.0f} s")
    assert ok


def test_criterion_4_patchy(runs, capsys):
    run, code, seconds = runs.get("exp3_patchy")
    rows = metrics(run)
    g, b = float(rows["gappy_loca"]["relative_rmse"]), float(rows["baseline_register"]["relative_rmse"])
    ok = g <= 0.10 and b >= 2 * g and seconds < 900
    announce(capsys, 4, ok, f"patchy gappy {g:.2%} (limit 10%), baseline {b:.2%} = {b / g:.1f}x gappy, {seconds:.0f} s")
    assert ok


def test_criterion_5_completion(runs, capsys):
    run, _, _ = runs.get("exp3_patchy")
    c = float(metrics(run)["completion"]["relative_rmse"])
    ok = c <= 0.10
    announce(capsys, 5, ok, f"patchy cross-modality distance completion {c:.2%} (limit 10%)")
    assert ok


def _rigid(run: Path) -> bool:
    import json

    return bool(json.loads((run / "rigidity.json").read_text())["verdict"])


def test_criterion_6_wifi(runs, capsys):
    run, _, seconds = runs.get("exp5_wifi")
    g = float(metrics(run)["gappy_loca"]["relative_rmse"])
    ok = _rigid(run) and g <= 0.12 and seconds < 1200
    announce(capsys, 6, ok, f"wifi rigid={_rigid(run)}, gappy {g:.2%} (limit 12%), {seconds:.0f} s")
    assert ok


def test_criterion_7_wave(runs, capsys):
    run, _, seconds = runs.get("exp6_wave")
    g = float(metrics(run)["gappy_loca"]["relative_rmse"])
    ok = _rigid(run) and g <= 0.15 and seconds < 1200
    announce(capsys, 7, ok, f"wave rigid={_rigid(run)}, gappy {g:.2%} (limit 15%), {seconds:.0f} s")
    assert ok


# -- 8. reflection relaxation ------------------------------------------------------


def test_criterion_8_relaxation_ablation(capsys):
    t0 = time.perf_counter()
    wins = {True: [], False: []}
    for seed in range(10):
        exp = load_experiment(CONFIGS / "exp2_overlap_ablation.toml", seed=seed)
        dataset, truth = exp.generate()
        for relax in (True, False):
            cfg = replace(exp.train, reflection_relaxation=relax)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                model, _ = train(dataset, cfg)
            err = model_isometry(model, dataset, truth, n_pairs=exp.evaluation.n_pairs, seed=seed).relative_rmse
            if err <= 0.075:
                wins[relax].append(seed)
    seconds = time.perf_counter() - t0
    ok = len(wins[True]) > len(wins[False]) and seconds < 3600
    announce(
        capsys,
        8,
        ok,
        f"overlap seeds 0-9: p=d+1 succeeds on {len(wins[True])} {wins[True]}, p=d on {len(wins[False])} {wins[False]}, {seconds:.0f} s",
    )
    assert ok


# -- 9. determinism ----------------------------------------------------------------


def test_criterion_9_determinism(runs, capsys):
    first, _, _ = runs.get("exp1_same_domain")
    second, _, _ = runs.get("exp1_same_domain", tag="-rerun")
    a, b = (first / "metrics.csv").read_bytes(), (second / "metrics.csv").read_bytes()
    ok = a == b
    announce(capsys, 9, ok, f"same_domain metrics.csv rerun {'bit-identical' if ok else 'differs'} ({len(a)} bytes)")
    assert ok
