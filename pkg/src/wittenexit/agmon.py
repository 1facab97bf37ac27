"""Agmon distances on lattice graphs and the geometric sufficient conditions.

The Agmon metric is ``|grad f|^2`` times the Euclidean one.  Its geodesic
distance is approximated by shortest paths on the lattice graph of a grid,
with each edge weighted by the trapezoid rule for ``int |grad f| ds`` along
the straight segment.  Boundary crossing points of the grid are added as
nodes so that distances to the boundary start on the boundary itself.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .operator import Grid, build_grid
from .potential.critical import find_critical_points
from .potential.domains import DomainPair
from .potential.fields import ScalarField

__all__ = [
    "AgmonGraph",
    "ConddagResult",
    "agmon_graph",
    "agmon_distance",
    "distance_field",
    "nearest_nodes",
    "check_conddag",
    "write_distance_csv",
]


@dataclass
class AgmonGraph:
    """Undirected weighted graph; ``boundary`` marks nodes on the domain boundary."""

    nodes: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    boundary: np.ndarray

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    def to_csr(self) -> sp.csr_matrix:
        """Symmetric adjacency matrix; zero-weight edges are stored explicitly."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        A = sp.coo_matrix((np.concatenate([self.weights, self.weights]),
                           (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(self.n, self.n))
        return A.tocsr()

    def _adjacency(self):
        if getattr(self, "_adj", None) is None:
            i, j = self.edges[:, 0], self.edges[:, 1]
            src = np.concatenate([i, j])
            dst = np.concatenate([j, i])
            w = np.concatenate([self.weights, self.weights])
            order = np.argsort(src, kind="stable")
            ptr = np.searchsorted(src[order], np.arange(self.n + 1))
            self._adj = (ptr, dst[order].tolist(), w[order].tolist())
        return self._adj


def _diagonal_edges(grid: Grid) -> np.ndarray:
    lat = grid.lattice.astype(np.int64)
    width = int(lat[:, 1].max()) + 3
    keys = (lat[:, 0] + 1) * width + (lat[:, 1] + 1)
    order = np.argsort(keys)
    sk = keys[order]
    out = []
    for di, dj in ((1, 1), (1, -1)):
        k2 = (lat[:, 0] + 1 + di) * width + (lat[:, 1] + 1 + dj)
        pos = np.clip(np.searchsorted(sk, k2), 0, len(sk) - 1)
        hit = sk[pos] == k2
        a = np.flatnonzero(hit)
        out.append(np.stack([a, order[pos[hit]]], axis=1))
    return np.concatenate(out) if out else np.empty((0, 2), dtype=np.int64)


def agmon_graph(field: ScalarField, grid: Grid, use_diagonals: bool = True) -> AgmonGraph:
    """Graph on the grid nodes plus the boundary crossing points.

    Edges are the lattice edges, the cut edges from boundary-adjacent nodes to
    their crossing points and, in 2D with ``use_diagonals``, the diagonals of
    lattice cells whose two ends are both active.  Edge (i, j) has weight
    ``(|grad f(x_i)| + |grad f(x_j)|)/2 * |x_j - x_i|``.
    """
    bpts, inv = np.unique(np.round(grid.cut_points, 13), axis=0, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    # recover unrounded coordinates for each unique crossing point
    first = np.zeros(len(bpts), dtype=np.int64)
    first[inv[::-1]] = np.arange(len(inv))[::-1]
    bpts = grid.cut_points[first]
    nodes = np.concatenate([grid.nodes, bpts])
    n0 = grid.n
    edges = [np.asarray(grid.edges, dtype=np.int64).reshape(-1, 2),
             np.stack([np.asarray(grid.cut_nodes, dtype=np.int64), n0 + inv], axis=1)]
    if use_diagonals and grid.dim == 2:
        edges.append(_diagonal_edges(grid))
    E = np.concatenate(edges)
    E = np.unique(np.sort(E, axis=1), axis=0)
    g = field.grad_norm(nodes if grid.dim == 2 else nodes[:, 0])
    g = np.atleast_1d(g)
    L = np.linalg.norm(nodes[E[:, 1]] - nodes[E[:, 0]], axis=1)
    w = 0.5 * (g[E[:, 0]] + g[E[:, 1]]) * L
    bnd = np.zeros(len(nodes), dtype=bool)
    bnd[n0:] = True
    return AgmonGraph(nodes, E, w, bnd)


def distance_field(graph: AgmonGraph, sources) -> np.ndarray:
    """Multi-source Dijkstra distances to every node (``inf`` if unreachable)."""
    return _dijkstra(graph, sources, None)[0]


def _dijkstra(graph, sources, targets):
    ptr, dst, w = graph._adjacency()
    dist = np.full(graph.n, np.inf)
    src = np.unique(np.asarray(list(sources), dtype=np.int64))
    if src.size == 0:
        raise ValueError("empty source set")
    tgt = None if targets is None else set(int(t) for t in targets)
    d = dist.tolist()
    heap = []
    for s in src.tolist():
        d[s] = 0.0
        heap.append((0.0, s))
    heapq.heapify(heap)
    done = [False] * graph.n
    hit = np.inf
    while heap:
        du, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if tgt is not None and u in tgt:
            hit = du
            break
        for k in range(ptr[u], ptr[u + 1]):
            v = dst[k]
            nd = du + w[k]
            if nd < d[v]:
                d[v] = nd
                heapq.heappush(heap, (nd, v))
    return np.array(d), hit


def agmon_distance(graph: AgmonGraph, source_set, target_set) -> float:
    """``min`` over sources and targets of the graph distance; ``inf`` if disconnected."""
    tgt = np.asarray(list(target_set), dtype=np.int64)
    if tgt.size == 0:
        raise ValueError("empty target set")
    return float(_dijkstra(graph, source_set, tgt)[1])


def nearest_nodes(graph: AgmonGraph, points) -> np.ndarray:
    """Index of the graph node closest to each point."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[1] != graph.nodes.shape[1]:
        P = P.reshape(-1, graph.nodes.shape[1])
    from scipy.spatial import cKDTree

    return cKDTree(graph.nodes).query(P)[1].astype(np.int64)


class ConddagResult(NamedTuple):
    ok: bool
    lhs: float
    rhs: float


def _min_targets(graph, cps):
    pts = []
    for c in cps:
        if c.kind == "component" and c.extent is not None:
            pts.append(np.asarray(c.extent, dtype=float).reshape(-1, graph.nodes.shape[1]))
        else:
            pts.append(np.atleast_2d(c.location))
    return np.unique(nearest_nodes(graph, np.concatenate(pts)))


def check_conddag(field: ScalarField, pair: DomainPair, grid: Grid | None = None,
                  spacing: float | None = None, margin: float = 0.0,
                  critical_points=None, report=None) -> ConddagResult:
    """Agmon distance from the inner boundary to the local minima versus the largest barrier.

    ``lhs`` is the Agmon distance from the boundary of the inner domain to the
    set of local minima in it; ``rhs`` is the largest ``f(U1) - f(U0)`` over
    index-1 points U1 and minima U0 (``-inf`` without index-1 points).  The
    condition holds when ``lhs > rhs + margin``.  Flat minimum sets are used
    as target node sets and the verdict is then marked heuristic in
    ``report`` (a :class:`HypothesisReport`) when one is given.
    """
    dom = pair.minus
    ext = float(np.max(dom.bbox[1] - dom.bbox[0]))
    if grid is None:
        spacing = spacing or ext / (4000 if dom.dim == 1 else 200)
        grid = build_grid(dom, spacing, min_nodes=2)
    cps = critical_points if critical_points is not None else \
        find_critical_points(field, dom, spacing or grid.spacing)
    interior = [c for c in cps if c.kind in ("interior", "component")]
    mins = [c for c in interior if c.index == 0]
    sads = [c for c in interior if c.index == 1]
    if not mins:
        raise ValueError("no local minimum in the inner domain")
    graph = agmon_graph(field, grid)
    lhs = agmon_distance(graph, graph.boundary_nodes, _min_targets(graph, mins))
    rhs = max((s.value - m.value for s in sads for m in mins), default=-np.inf)
    ok = bool(lhs > rhs + margin)
    if report is not None:
        report.conddag_ok = ok
        report.conddag_lhs = lhs
        report.conddag_rhs = rhs
        report.conddag_heuristic = any(c.kind == "component" for c in interior)
    return ConddagResult(ok, lhs, float(rhs))


def write_distance_csv(graph: AgmonGraph, dist: np.ndarray, path) -> None:
    coords = ["x"] if graph.nodes.shape[1] == 1 else ["x", "y"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(coords + ["distance", "boundary"])
        for x, d, b in zip(graph.nodes, dist, graph.boundary):
            w.writerow([repr(float(c)) for c in x] + [repr(float(d)), int(b)])
