import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gappy_fuse.evaluation import (
    DegenerateConfigurationError,
    PartialDistanceMatrix,
    RigidTransform,
    complete_distance_matrix,
    completion_error,
    isometry_error,
    partial_from_ground_truth,
    procrustes_fit,
    read_metrics_csv,
    sym_eig_small,
    write_metrics_csv,
)
from gappy_fuse.linalg import small_svd
from gappy_fuse.losses import Encoder, GappyLocaModel
from gappy_fuse.model import Burst, CalibrationLink, FusionDataset, GroundTruth, ModalityData
from gappy_fuse.nets import init_mlp


def det_expansion(M):
    """Determinant by Laplace expansion along the first row."""
    n = len(M)
    if n == 1:
        return M[0][0]
    return sum((-1) ** j * M[0][j] * det_expansion([row[:j] + row[j + 1 :] for row in M[1:]]) for j in range(n))


def charpoly_roots(S):
    """Eigenvalues as roots of det(S - xI): sample the determinant at n+1 nodes, interpolate, solve."""
    n = len(S)
    xs = np.arange(n + 1, dtype=float) - n / 2
    ys = [det_expansion([[S[i][j] - (x if i == j else 0.0) for j in range(n)] for i in range(n)]) for x in xs]
    coeffs = np.polyfit(xs, ys, n)
    return np.sort(np.roots(coeffs).real)[::-1]


def rotation(theta):
    return np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])


# -- eigen / svd -------------------------------------------------------------


def test_diagonal():
    w, V = sym_eig_small(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [3, 2, 1])
    assert np.allclose(np.abs(V), np.eye(3)[:, [0, 2, 1]])


def test_two_by_two():
    w, _ = sym_eig_small(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(w, [3, 1], atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_five_by_five_matches_characteristic_polynomial(seed):
    A = np.random.default_rng(seed).normal(size=(5, 5))
    S = (A + A.T) / 2
    w, _ = sym_eig_small(S)
    assert np.allclose(w, charpoly_roots(S.tolist()), atol=1e-8)


@given(st.integers(1, 16), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_reconstruction_and_invariants(m, seed):
    A = np.random.default_rng(seed).normal(size=(m, m))
    S = A + A.T
    w, V = sym_eig_small(S)
    assert np.linalg.norm(S - V @ np.diag(w) @ V.T) <= 1e-10 * max(1.0, np.linalg.norm(S))
    assert np.allclose(V.T @ V, np.eye(m), atol=1e-10)
    assert np.all(np.diff(w) <= 0)
    assert w.sum() == pytest.approx(np.trace(S), rel=1e-8, abs=1e-10)
    det = np.linalg.det(S)
    assert np.prod(w) == pytest.approx(det, rel=1e-8, abs=1e-10)


def test_asymmetric_rejected():
    with pytest.raises(ValueError, match="symmetric"):
        sym_eig_small(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_too_large_rejected():
    with pytest.raises(ValueError):
        sym_eig_small(np.eye(17))


def test_small_svd_rank_deficient():
    H = np.outer([1.0, 2.0, 0.0], [0.0, 1.0, 1.0])
    U, s, V, rank = small_svd(H)
    assert rank == 1
    assert np.allclose(U @ np.diag(s) @ V.T, H, atol=1e-12)
    assert np.allclose(U.T @ U, np.eye(3), atol=1e-10)
    assert np.allclose(V.T @ V, np.eye(3), atol=1e-10)


# -- procrustes --------------------------------------------------------------


def test_identity_fit(rng):
    S = rng.normal(size=(6, 2))
    T = procrustes_fit(S, S)
    assert np.allclose(T.Q, np.eye(2), atol=1e-12) and np.allclose(T.t, 0, atol=1e-12)


def test_recover_rotation_and_shift(rng):
    S = rng.normal(size=(5, 2))
    R = rotation(math.pi / 2)
    T = procrustes_fit(S, S @ R.T + [1.0, 2.0])
    assert np.max(np.abs(T.Q - R)) <= 1e-10
    assert np.max(np.abs(T.t - [1.0, 2.0])) <= 1e-10


def test_mirror_needs_reflection(rng):
    S = rng.normal(size=(7, 2))
    G = S * [1.0, -1.0]
    proper = procrustes_fit(S, G, allow_reflection=False)
    assert proper.is_proper
    assert np.sum((proper(S) - G) ** 2) > 1e-3
    free = procrustes_fit(S, G, allow_reflection=True)
    assert np.sum((free(S) - G) ** 2) <= 1e-20
    assert not free.is_proper


def test_degenerate_points():
    S = np.zeros((4, 2))
    with pytest.raises(DegenerateConfigurationError):
        procrustes_fit(S, S)
    with pytest.raises(DegenerateConfigurationError):
        procrustes_fit(np.ones((1, 2)), np.ones((1, 2)))


@given(st.floats(0, 2 * math.pi), st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_residual_invariant_under_common_motion(theta, tx, ty, seed):
    r = np.random.default_rng(seed)
    S, G = r.normal(size=(6, 2)), r.normal(size=(6, 2))
    base = procrustes_fit(S, G)
    res = np.sum((base(S) - G) ** 2)
    M = RigidTransform(rotation(theta), np.array([tx, ty]))
    moved = procrustes_fit(M(S), M(G))
    assert np.sum((moved(M(S)) - M(G)) ** 2) == pytest.approx(res, rel=1e-8, abs=1e-10)


def test_compose(rng):
    a = RigidTransform(rotation(0.3), np.array([1.0, 0.0]))
    b = RigidTransform(rotation(-1.1), np.array([0.0, 2.0]))
    x = rng.normal(size=(3, 2))
    assert np.allclose(a.compose(b)(x), a(b(x)))


# -- isometry ----------------------------------------------------------------


def test_identity_embedding_zero(rng):
    X = rng.normal(size=(30, 2))
    s = isometry_error(X, X)
    assert s.rmse == 0 and s.max_error == 0 and s.n_pairs == 30 * 29 // 2


@given(st.floats(0, 2 * math.pi), st.booleans(), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_rigid_embedding_zero(theta, mirror, seed):
    X = np.random.default_rng(seed).normal(size=(20, 2))
    Q = rotation(theta) @ np.diag([1.0, -1.0 if mirror else 1.0])
    assert isometry_error(X @ Q.T + [3.0, -1.0], X).relative_rmse <= 1e-12


def test_scaled_embedding(rng):
    X = rng.normal(size=(25, 2))
    s = isometry_error(2 * X, X)
    assert np.allclose(s.embedded_distances - s.latent_distances, s.latent_distances)
    ref = math.sqrt(np.mean(s.latent_distances**2)) / np.mean(s.latent_distances)
    assert s.relative_rmse == pytest.approx(ref)


def test_sampled_pairs_are_seeded(rng):
    X = rng.normal(size=(2500, 2))
    E = X + rng.normal(size=X.shape) * 0.01
    a = isometry_error(E, X, n_pairs=5000, seed=3)
    b = isometry_error(E, X, n_pairs=5000, seed=3)
    assert a.n_pairs == 5000 and a.rmse == b.rmse


def test_count_mismatch():
    with pytest.raises(ValueError):
        isometry_error(np.zeros((3, 2)), np.zeros((4, 2)))


# -- completion --------------------------------------------------------------


class IdentityModel(GappyLocaModel):
    pass


def _exact_setup(rng):
    """Two modalities observing the plane directly, with an encoder equal to the identity."""
    d = 2
    n = (6, 5)
    centers = [rng.uniform(0, 3, size=(k, d)) for k in n]
    centers[1][:3] = centers[0][:3]  # three shared points
    mods = tuple(
        ModalityData(k + 1, d, tuple(Burst(np.stack([c - 0.01, c + 0.01])) for c in cs), 0.1)
        for k, cs in enumerate(centers)
    )
    ds = FusionDataset(d, mods, tuple(CalibrationLink(i, i, 1, 2) for i in range(3)))
    encoders = []
    for _ in range(2):
        net = init_mlp((2, 2), 0)
        net.weights[0][:] = np.eye(2)
        encoders.append(Encoder(net, np.zeros(2), np.ones(2), 1.0))
    model = GappyLocaModel(encoders, [None, None], [1, 2], 2, 2, [0.1, 0.1], [1.0, 1.0])
    return ds, GroundTruth(tuple(centers)), model


def test_partial_matrix_structure(rng):
    ds, gt, _ = _exact_setup(rng)
    partial, index, full = partial_from_ground_truth(ds, gt)
    assert len(index) == 6 + 5 - 3
    assert np.array_equal(partial.known, partial.known.T)
    # a point seen only by modality 1 and one seen only by modality 2 are unknown to each other
    only1 = next(r for r, obs in enumerate(index) if {m for m, _ in obs} == {1})
    only2 = next(r for r, obs in enumerate(index) if {m for m, _ in obs} == {2})
    assert not partial.known[only1, only2]
    assert np.allclose(full, full.T)


def test_exact_isometry_completes_exactly(rng):
    ds, gt, model = _exact_setup(rng)
    partial, index, full = partial_from_ground_truth(ds, gt)
    out = complete_distance_matrix(model, ds, partial, index)
    assert np.max(np.abs(out - full)) <= 1e-12
    assert np.array_equal(out, out.T) and np.all(out.diagonal() == 0)
    assert completion_error(out, full, ~partial.known)["rmse"] <= 1e-12


def test_fully_known_unchanged(rng):
    X = rng.normal(size=(4, 2))
    D = np.linalg.norm(X[:, None] - X[None], axis=2)
    partial = PartialDistanceMatrix(D, np.ones((4, 4), dtype=bool))
    assert np.array_equal(complete_distance_matrix(None, None, partial, [[(1, i)] for i in range(4)]), D)


def test_unmapped_row(rng):
    ds, gt, model = _exact_setup(rng)
    partial, index, _ = partial_from_ground_truth(ds, gt)
    index[0] = []
    with pytest.raises(ValueError, match="row 0"):
        complete_distance_matrix(model, ds, partial, index)


@pytest.mark.parametrize(
    "values,known",
    [
        ([[0, 1], [2, 0]], [[1, 1], [1, 1]]),
        ([[0, 1], [1, 0]], [[1, 1], [0, 1]]),
        ([[1, 1], [1, 0]], [[1, 1], [1, 1]]),
        ([[0, -1], [-1, 0]], [[1, 1], [1, 1]]),
    ],
)
def test_partial_matrix_validation(values, known):
    with pytest.raises(ValueError):
        PartialDistanceMatrix(np.array(values, dtype=float), np.array(known, dtype=bool))


def test_metrics_csv_roundtrip(tmp_path):
    rows = [{"scenario": "s", "method": "m", "rmse": 0.1, "relative_rmse": 1 / 3, "max_error": 0.5, "n_pairs": 10, "seed": 0}]
    write_metrics_csv(tmp_path / "m.csv", rows)
    back = read_metrics_csv(tmp_path / "m.csv")
    assert float(back[0]["relative_rmse"]) == 1 / 3
