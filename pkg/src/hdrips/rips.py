"""Simplex counts of L-infinity Vietoris-Rips complexes and add-one costs.

The k-simplices of the complex are the (k+1)-cliques of the geometric graph
joining points at uniform distance at most ``delta``.  Counting grows each
clique through increasing point indices, with candidate sets restricted to
grid neighbours.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._cliques import clique_counts
from .errors import CapacityError, OutsideAnalyticRangeWarning, ParameterError
from .geometry import PointCloud, build_grid, neighbor_pairs, query_ball

__all__ = [
    "SimplexCount",
    "FVector",
    "RipsGraph",
    "rips_graph",
    "count_simplices",
    "naive_count",
    "f_vector",
    "diff1",
    "diff2",
    "kernel_indicator",
    "COUNT_CAPACITY",
]

# Unsigned 128-bit register.
COUNT_CAPACITY = (1 << 128) - 1
_FAST_LIMIT = 2.0 ** 62
NAIVE_MAX_POINTS = 64


@dataclass(frozen=True)
class SimplexCount:
    k: int
    count: int

    def __int__(self):
        return self.count


@dataclass(frozen=True)
class FVector:
    """Face counts ``f_0, ..., f_kmax``."""

    counts: tuple[SimplexCount, ...]

    def __getitem__(self, k: int) -> int:
        return self.counts[k].count

    def __len__(self):
        return len(self.counts)

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(c.count for c in self.counts)


@dataclass(frozen=True, eq=False)
class RipsGraph:
    """Geometric graph of a cloud, stored as forward (higher-index) adjacency."""

    n: int
    delta: float
    pairs: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray


def _check_delta(delta):
    if not (0 < delta < 1):
        raise ParameterError(f"delta must lie in (0, 1), got {delta!r}")
    if delta >= 0.25:
        warnings.warn(f"delta={delta} outside analytic range (0, 1/4)", OutsideAnalyticRangeWarning,
                      stacklevel=3)


def _check_order(k, lowest=1):
    if not isinstance(k, (int, np.integer)) or k < lowest:
        raise ParameterError(f"simplex order must be an integer >= {lowest}, got {k!r}")


def _graph_from_pairs(n, delta, pairs) -> RipsGraph:
    indptr = np.zeros(n + 1, dtype=np.int64)
    if len(pairs):
        np.cumsum(np.bincount(pairs[:, 0], minlength=n), out=indptr[1:])
        indices = np.ascontiguousarray(pairs[:, 1], dtype=np.int64)
    else:
        indices = np.zeros(0, dtype=np.int64)
    return RipsGraph(n, float(delta), pairs, indptr, indices)


def rips_graph(cloud: PointCloud, delta: float) -> RipsGraph:
    grid = build_grid(cloud, delta)
    return _graph_from_pairs(len(cloud), delta, neighbor_pairs(grid, cloud))


def _python_counts(graph: RipsGraph, kmax: int) -> list[int]:
    """Arbitrary-precision traversal used when int64 could overflow."""
    counts = [0] * (kmax + 1)
    counts[0] = graph.n
    fwd = [set(graph.indices[graph.indptr[v]:graph.indptr[v + 1]].tolist()) for v in range(graph.n)]

    def bump(depth, amount):
        counts[depth] += amount
        if counts[depth] > COUNT_CAPACITY:
            raise CapacityError(f"count of {depth}-simplices exceeds 128-bit register")

    def grow(cand, depth):
        ordered = sorted(cand)
        if all(fwd[u].issuperset(ordered[i + 1:]) for i, u in enumerate(ordered)):
            # candidates form a complete subgraph: every subset extends the clique
            for j in range(1, min(len(ordered), kmax - depth + 1) + 1):
                bump(depth + j - 1, math.comb(len(ordered), j))
            return
        bump(depth, len(cand))
        if depth == kmax:
            return
        for u in ordered:
            nxt = {w for w in cand if w > u} & fwd[u]
            if nxt:
                grow(nxt, depth + 1)

    if kmax >= 1:
        for v in range(graph.n):
            if fwd[v]:
                grow(fwd[v], 1)
    return counts


def _graph_counts(graph: RipsGraph, kmax: int) -> list[int]:
    if graph.n == 0:
        return [0] * (kmax + 1)
    fdeg = np.diff(graph.indptr).astype(np.float64)
    # Sum of binom(fdeg, j) bounds the number of (j+1)-cliques rooted anywhere.
    worst = 0.0
    for j in range(1, kmax + 1):
        fd = fdeg[fdeg >= j]
        if len(fd):
            worst = max(worst, float(np.exp(gammaln(fd + 1) - gammaln(j + 1) - gammaln(fd - j + 1)).sum()))
    if worst < _FAST_LIMIT:
        return [int(c) for c in clique_counts(graph.indptr, graph.indices, kmax)]
    return _python_counts(graph, kmax)


def f_vector(cloud: PointCloud, delta: float, k_max: int, graph: RipsGraph | None = None) -> FVector:
    _check_order(k_max, lowest=0)
    _check_delta(delta)
    if graph is None:
        graph = rips_graph(cloud, delta)
    counts = _graph_counts(graph, k_max)
    return FVector(tuple(SimplexCount(k, c) for k, c in enumerate(counts)))


def count_simplices(cloud: PointCloud, delta: float, k: int, graph: RipsGraph | None = None) -> SimplexCount:
    """Number of k-simplices, i.e. (k+1)-subsets pairwise within ``delta``."""
    _check_order(k)
    _check_delta(delta)
    if graph is None:
        graph = rips_graph(cloud, delta)
    return SimplexCount(k, _graph_counts(graph, k)[k])


def naive_count(cloud: PointCloud, delta: float, k: int) -> SimplexCount:
    """Brute force over every (k+1)-subset; the oracle for ``count_simplices``."""
    _check_order(k, lowest=0)
    n = len(cloud)
    if n > NAIVE_MAX_POINTS:
        raise ParameterError(f"naive_count is limited to {NAIVE_MAX_POINTS} points, got {n}")
    if n < k + 1:
        return SimplexCount(k, 0)
    pts = cloud.points
    adj = np.max(np.abs(pts[:, None, :] - pts[None, :, :]), axis=2) <= delta
    pair_slots = list(itertools.combinations(range(k + 1), 2))
    total = 0
    combos = itertools.combinations(range(n), k + 1)
    while True:
        chunk = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, 200_000)),
                            dtype=np.int64)
        if chunk.size == 0:
            break
        chunk = chunk.reshape(-1, k + 1)
        ok = np.ones(len(chunk), dtype=bool)
        for a, b in pair_slots:
            ok &= adj[chunk[:, a], chunk[:, b]]
        total += int(ok.sum())
    return SimplexCount(k, total)


def kernel_indicator(points, delta: float) -> int:
    """1 if all given points are pairwise within ``delta``, else 0 (1 for <= 1 point)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if len(pts) <= 1:
        return 1
    spread = pts.max(axis=0) - pts.min(axis=0)
    return int(np.max(spread) <= delta)


def _cliques_in(cloud: PointCloud, idx: np.ndarray, delta: float, size: int) -> int:
    """Number of ``size``-subsets of ``cloud[idx]`` that are pairwise within delta."""
    if size == 0:
        return 1
    if len(idx) < size:
        return 0
    if size == 1:
        return len(idx)
    sub = cloud.subset(idx)
    return _graph_counts(rips_graph(sub, delta), size - 1)[size - 1]


def _as_point(cloud: PointCloud, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (cloud.d,):
        raise ParameterError(f"point must have dimension {cloud.d}")
    if x.min() < -0.5 or x.max() > 0.5:
        raise ParameterError("point must lie in [-1/2, 1/2]^d")
    return x


def diff1(cloud: PointCloud, delta: float, k: int, x) -> int:
    """Add-one cost of the k-simplex count when ``x`` joins the cloud."""
    _check_order(k)
    _check_delta(delta)
    x = _as_point(cloud, x)
    near = query_ball(build_grid(cloud, delta), cloud, x)
    return _cliques_in(cloud, near, delta, k)


def diff2(cloud: PointCloud, delta: float, k: int, x1, x2) -> int:
    """Second-order add-one cost for the pair ``x1``, ``x2``."""
    _check_order(k)
    _check_delta(delta)
    x1 = _as_point(cloud, x1)
    x2 = _as_point(cloud, x2)
    if np.max(np.abs(x1 - x2)) > delta:
        return 0
    if k == 1:
        return 1
    grid = build_grid(cloud, delta)
    common = np.intersect1d(query_ball(grid, cloud, x1), query_ball(grid, cloud, x2))
    return _cliques_in(cloud, common, delta, k - 1)
