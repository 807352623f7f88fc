import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gappy_fuse.model import Burst, CalibrationLink, FusionDataset, GroundTruth, ModalityData
from gappy_fuse.rigidity import (
    Graph,
    PointCoverError,
    check_patch_rigidity,
    check_point_rigidity,
    disconnected_subgraphs,
    orthogonal_dof,
    point_graph,
    select_point_modalities,
    whitney_count,
)
from gappy_fuse.scenarios import make_point_case


def closure_components(n, edges):
    """Brute-force reachability by Warshall transitive closure."""
    reach = np.eye(n, dtype=bool)
    for a, b in edges:
        reach[a, b] = reach[b, a] = True
    for k in range(n):
        reach |= reach[:, k : k + 1] & reach[k : k + 1, :]
    comps = {frozenset(np.flatnonzero(reach[v]).tolist()) for v in range(n)}
    return sorted(comps, key=min)


@pytest.mark.parametrize("d,expected", [(1, 1), (2, 3), (3, 6), (4, 10)])
def test_orthogonal_dof(d, expected):
    assert orthogonal_dof(d) == expected


@pytest.mark.parametrize("d,expected", [(1, 3), (2, 5), (3, 7)])
def test_whitney_count(d, expected):
    assert whitney_count(d) == expected


def test_self_loop_rejected():
    with pytest.raises(ValueError, match="self-loop"):
        Graph([1]).add_edge(1, 1)


def test_multiplicity_counts_but_degree_does_not():
    g = Graph()
    g.add_edge(1, 2)
    g.add_edge(2, 1)
    assert g.connection_count(1) == 2
    assert g.degree(1) == 1


@given(st.integers(1, 30), st.data())
@settings(max_examples=60, deadline=None)
def test_components_match_closure(n, data):
    pairs = list(itertools.combinations(range(n), 2))
    edges = data.draw(st.lists(st.sampled_from(pairs), max_size=2 * n)) if pairs else []
    g = Graph(range(n))
    for a, b in edges:
        g.add_edge(a, b)
    got = [frozenset(c) for c in disconnected_subgraphs(g)]
    assert got == closure_components(n, edges)


def _dataset(n_mods, links, d=2):
    mods = tuple(ModalityData(k, 2, tuple(Burst(np.zeros((2, 2)) + b) for b in range(6)), 0.1) for k in range(1, n_mods + 1))
    return FusionDataset(d, mods, tuple(CalibrationLink(*l) for l in links))


def test_two_bodies_three_links_rigid():
    rep = check_patch_rigidity(_dataset(2, [(0, 0, 1, 2), (1, 1, 1, 2), (2, 2, 1, 2)]))
    assert rep.verdict and rep.connected and rep.required == 3


def test_two_bodies_two_links_deficit():
    rep = check_patch_rigidity(_dataset(2, [(0, 0, 1, 2), (1, 1, 1, 2)]))
    assert not rep.verdict
    assert rep.deficits == {1: 1, 2: 1}


def test_disconnected_bodies():
    links = [(0, 0, 1, 2), (1, 1, 1, 2), (2, 2, 1, 2)]
    rep = check_patch_rigidity(_dataset(3, links))
    assert not rep.connected and not rep.verdict
    assert [sorted(c) for c in rep.components] == [[1, 2], [3]]


def test_star_graph():
    # center 1 linked three times to each leaf: every leaf has 3, the center 9
    links = [(i, i, 1, leaf) for leaf in (2, 3, 4) for i in range(3)]
    rep = check_patch_rigidity(_dataset(4, links))
    assert rep.verdict
    assert all(v == 0 for v in rep.deficits.values())


def test_chain_needs_three_per_body():
    links = [(i, i, 1, 2) for i in range(3)] + [(i + 3, i, 2, 3) for i in range(2)]
    rep = check_patch_rigidity(_dataset(3, links))
    assert rep.deficits[3] == 1 and not rep.verdict


def test_single_modality_trivially_rigid():
    assert check_patch_rigidity(_dataset(1, [])).verdict


def test_patch_labels_split_a_modality():
    links = [(i, i, 1, 2) for i in range(3)]
    labels = {1: [0, 0, 0, 1, 1, 1], 2: [0] * 6}
    rep = check_patch_rigidity(_dataset(2, links), patch_labels=labels)
    assert not rep.connected
    assert (1, 1) in rep.components[1]


def test_collinear_calibration_warns():
    ds = _dataset(2, [(i, i, 1, 2) for i in range(3)])
    line = np.array([[t, 2 * t] for t in range(6)], dtype=float)
    with pytest.warns(UserWarning, match="affinely degenerate"):
        rep = check_patch_rigidity(ds, truth=GroundTruth((line, line)))
    assert rep.verdict and rep.warnings


def test_report_dict_roundtrips_through_json():
    import json

    rep = check_patch_rigidity(_dataset(2, [(0, 0, 1, 2)]))
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["deficits"] == {"1": 2, "2": 2}
    assert doc["verdict"] is False


# -- point case --------------------------------------------------------------


def test_five_shared_sensors_make_an_edge():
    g = point_graph([("a", range(5)), ("b", range(5))], 2)
    assert g.degree("a") == 1


def test_four_shared_sensors_do_not():
    g = point_graph([("a", range(5)), ("b", range(1, 6))], 2)
    assert g.degree("a") == 0


def test_point_neighbors_not_multiplicity():
    # one neighbor sharing many sensors does not count as three
    pts = [("a", range(12)), ("b", range(12))]
    rep = check_point_rigidity(pts, 2)
    assert rep.deficits == {"a": 2, "b": 2}


def test_point_case_example_is_rigid_and_covered():
    points, _ = make_point_case(n_per_type=4, seed=0)
    assert check_point_rigidity(points, 2).verdict
    chosen = select_point_modalities(points, 2)
    assert chosen.report.verdict
    covered = {pid for group in chosen.members for pid in group}
    assert covered == {p["point_id"] for p in points}
    assert all(len(s) >= 5 for s in chosen.subsets)
    assert chosen.common_points()


def test_isolated_point_is_reported():
    points = make_point_case(n_per_type=4, seed=0)[0] + [{"point_id": "lonely", "sensor_ids": [900, 901, 902, 903, 904]}]
    with pytest.raises(PointCoverError) as info:
        select_point_modalities(points, 2)
    assert "lonely" in info.value.points
