"""Observation graphs and the counting conditions for a unique rigid assembly.

Two settings are covered.  In the patch case the vertices are modalities
(or patches of them) and every calibration link is a connection point.  In
the point case the vertices are points, joined when they share at least
``2d + 1`` sensors.  Either way the graph must be connected and every vertex
needs ``d(d + 1) / 2`` connections.
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .model import FusionDataset, GroundTruth


def orthogonal_dof(d: int) -> int:
    """Connections needed per body to pin its orthogonal transformation."""
    return d * (d + 1) // 2


def whitney_count(d: int) -> int:
    """Shared sensors needed to relate two points."""
    return 2 * d + 1


class Graph:
    """Undirected multigraph without self-loops; insertion order of vertices is kept."""

    def __init__(self, vertices: Iterable[Hashable] = ()):
        self.adjacency: dict[Hashable, list[Hashable]] = {}
        self.multiplicity: dict[frozenset, int] = defaultdict(int)
        for v in vertices:
            self.add_vertex(v)

    @property
    def vertices(self) -> list:
        return list(self.adjacency)

    def add_vertex(self, v) -> None:
        self.adjacency.setdefault(v, [])

    def add_edge(self, a, b, count: int = 1) -> None:
        if a == b:
            raise ValueError(f"self-loop on vertex {a!r}")
        self.add_vertex(a)
        self.add_vertex(b)
        key = frozenset((a, b))
        if self.multiplicity[key] == 0:
            self.adjacency[a].append(b)
            self.adjacency[b].append(a)
        self.multiplicity[key] += count

    def connection_count(self, v) -> int:
        """Sum of edge multiplicities at ``v``."""
        return sum(self.multiplicity[frozenset((v, u))] for u in self.adjacency[v])

    def degree(self, v) -> int:
        return len(self.adjacency[v])


def _sort_key(v):
    return (0, v) if isinstance(v, (int, np.integer)) else (1, repr(v))


def disconnected_subgraphs(g: Graph) -> list[set]:
    """Connected components by depth-first search, ordered by their smallest vertex."""
    visited: set = set()
    components = []
    for start in sorted(g.vertices, key=_sort_key):
        if start in visited:
            continue
        component = set()
        stack = [start]
        visited.add(start)
        while stack:
            v = stack.pop()
            component.add(v)
            for u in g.adjacency[v]:
                if u not in visited:
                    visited.add(u)
                    stack.append(u)
        components.append(component)
    return components


@dataclass
class RigidityReport:
    connected: bool
    components: list[set]
    deficits: dict
    required: int
    verdict: bool
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def key(v):
            return v if isinstance(v, (int, str)) else str(v)

        return {
            "verdict": self.verdict,
            "connected": self.connected,
            "required_connections": self.required,
            "components": [sorted((key(v) for v in c), key=_sort_key) for c in self.components],
            "deficits": {str(key(v)): int(n) for v, n in self.deficits.items()},
            "warnings": list(self.warnings),
        }


def _report(g: Graph, required: int, count) -> RigidityReport:
    components = disconnected_subgraphs(g)
    connected = len(components) <= 1
    # a lone body has nothing to be registered against
    need = required if len(g.vertices) > 1 else 0
    deficits = {v: max(0, need - count(v)) for v in g.vertices}
    verdict = connected and all(n == 0 for n in deficits.values())
    return RigidityReport(connected, components, deficits, need, verdict)


def patch_graph(dataset: FusionDataset, patch_labels: Mapping[int, Sequence[int]] | None = None) -> Graph:
    """Vertices are modality ids, or ``(modality_id, patch)`` when labels are given."""

    def vertex(mod_id, burst):
        if patch_labels is None:
            return mod_id
        return (mod_id, int(patch_labels[mod_id][burst]))

    g = Graph()
    for mod in dataset.modalities:
        if patch_labels is None:
            g.add_vertex(mod.modality_id)
        else:
            for label in sorted(set(int(v) for v in patch_labels[mod.modality_id])):
                g.add_vertex((mod.modality_id, label))
    for link in dataset.calibration:
        g.add_edge(vertex(link.k, link.i), vertex(link.s, link.j))
    return g


def check_patch_rigidity(
    dataset: FusionDataset,
    patch_labels: Mapping[int, Sequence[int]] | None = None,
    truth: GroundTruth | None = None,
) -> RigidityReport:
    """Connectivity plus ``d(d+1)/2`` calibration links per body.

    With ``truth`` a warning is attached (and emitted) for every body whose
    calibration centers are affinely degenerate, e.g. three collinear points
    in the plane: the count is met but the placement is not pinned down.
    """
    d = dataset.intrinsic_dim
    g = patch_graph(dataset, patch_labels)
    report = _report(g, orthogonal_dof(d), g.connection_count)
    if truth is not None:
        pos = {m.modality_id: n for n, m in enumerate(dataset.modalities)}
        per_mod: dict[int, list] = defaultdict(list)
        for link in dataset.calibration:
            per_mod[link.k].append(truth.centers[pos[link.k]][link.i])
            per_mod[link.s].append(truth.centers[pos[link.s]][link.j])
        for mod_id, pts in sorted(per_mod.items()):
            pts = np.array(pts)
            rank = np.linalg.matrix_rank(pts - pts.mean(axis=0), tol=1e-9 * max(1.0, np.abs(pts).max()))
            if rank < d:
                msg = f"calibration centers of modality {mod_id} are affinely degenerate (rank {rank} < {d})"
                report.warnings.append(msg)
                warnings.warn(msg, stacklevel=2)
    return report


# --------------------------------------------------------------------------
# point case


def _normalize_points(points) -> list[tuple[Hashable, frozenset]]:
    out = []
    for p in points:
        if isinstance(p, Mapping):
            out.append((p["point_id"], frozenset(p["sensor_ids"])))
        else:
            pid, sensors = p
            out.append((pid, frozenset(sensors)))
    return out


def point_graph(points, d: int) -> Graph:
    pts = _normalize_points(points)
    g = Graph(pid for pid, _ in pts)
    need = whitney_count(d)
    for (pa, sa), (pb, sb) in combinations(pts, 2):
        shared = len(sa & sb)
        if shared >= need:
            g.add_edge(pa, pb, shared)
    return g


def check_point_rigidity(points, d: int) -> RigidityReport:
    """Points joined by ``>= 2d+1`` shared sensors; each needs ``d(d+1)/2`` distinct neighbors."""
    g = point_graph(points, d)
    return _report(g, orthogonal_dof(d), g.degree)


class PointCoverError(ValueError):
    def __init__(self, message: str, points: list):
        super().__init__(f"{message}: {points}")
        self.points = points


@dataclass
class PointModalities:
    """Sensor subsets chosen as modalities and the points each one observes."""

    subsets: list[frozenset]
    members: list[list]
    report: RigidityReport

    def common_points(self) -> list:
        seen: dict = defaultdict(int)
        for group in self.members:
            for pid in group:
                seen[pid] += 1
        return sorted((pid for pid, n in seen.items() if n > 1), key=_sort_key)


def _modality_graph(members: list[list]) -> Graph:
    g = Graph(range(len(members)))
    sets = [set(m) for m in members]
    for a, b in combinations(range(len(sets)), 2):
        shared = len(sets[a] & sets[b])
        if shared:
            g.add_edge(a, b, shared)
    return g


def select_point_modalities(points, d: int) -> PointModalities:
    """Greedily pick sensor subsets until every point is covered and the modalities rigidify.

    Candidates are the pairwise intersections of the points' sensor sets
    with at least ``2d + 1`` sensors.  Each round takes the candidate shared
    by the most uncovered points (ties: more points overall, then fewer
    sensors); once everything is covered, further candidates are added only
    while they reduce the connection deficit of the modality graph.
    """
    pts = _normalize_points(points)
    pre = check_point_rigidity(points, d)
    if not pre.verdict:
        bad = sorted((v for v, n in pre.deficits.items() if n), key=_sort_key)
        if not pre.connected:
            bad = sorted((v for c in pre.components[1:] for v in c), key=_sort_key)
        raise PointCoverError("point graph is not rigid", bad)
    need = whitney_count(d)
    candidates = set()
    for (_, sa), (_, sb) in combinations(pts, 2):
        shared = sa & sb
        if len(shared) >= need:
            candidates.add(frozenset(shared))
    groups = {c: [pid for pid, s in pts if c <= s] for c in candidates}
    order = sorted(candidates, key=lambda c: (sorted(map(str, c))))

    subsets: list[frozenset] = []
    members: list[list] = []
    covered: set = set()
    all_ids = [pid for pid, _ in pts]
    while len(covered) < len(all_ids):
        best = max(
            (c for c in order if c not in subsets),
            key=lambda c: (len(set(groups[c]) - covered), len(groups[c]), -len(c)),
            default=None,
        )
        if best is None or not set(groups[best]) - covered:
            raise PointCoverError("no shared sensor subset covers", [p for p in all_ids if p not in covered])
        subsets.append(best)
        members.append(groups[best])
        covered |= set(groups[best])

    def deficit(mem):
        rep = _report(_modality_graph(mem), orthogonal_dof(d), _modality_graph(mem).connection_count)
        return (len(rep.components), sum(rep.deficits.values())), rep

    score, report = deficit(members)
    while not report.verdict:
        trials = [(deficit(members + [groups[c]])[0], n, c) for n, c in enumerate(order) if c not in subsets]
        if not trials:
            break
        best_score, _, best = min(trials, key=lambda t: (t[0], t[1]))
        if best_score >= score:
            break
        subsets.append(best)
        members.append(groups[best])
        score, report = deficit(members)
    if not report.verdict:
        bad_mods = {v for v, n in report.deficits.items() if n}
        if not report.connected:
            bad_mods |= {v for c in report.components[1:] for v in c}
        bad = sorted({pid for m in bad_mods for pid in members[m]}, key=_sort_key)
        raise PointCoverError("selected modalities cannot be rigidified", bad)
    return PointModalities(subsets, members, report)
