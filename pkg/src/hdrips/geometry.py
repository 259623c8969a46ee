"""Poisson sampling in the centred unit cube and L-infinity proximity queries.

Points live in ``W = [-1/2, 1/2]^d``.  Fixed-radius queries go through a
uniform cell grid of width ``delta``: two points within uniform distance
``delta`` sit in cells whose index vectors differ by at most one in every
coordinate.  The 3^d adjacent cells are never enumerated blindly; the grid
walks the coordinates one at a time and drops any partial index vector that
no occupied cell starts with, which keeps high-dimensional sparse clouds cheap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

__all__ = [
    "PointCloud",
    "CellGrid",
    "make_rng",
    "sample_poisson",
    "uniform_distance",
    "build_grid",
    "neighbors",
    "neighbor_pairs",
    "query_ball",
    "cloud_to_json",
    "cloud_from_json",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite point set in ``[-1/2, 1/2]^d``; the array is stored read-only."""

    d: int
    points: np.ndarray

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"dimension must be >= 1, got {self.d}")
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, self.d)
        if pts.size and (pts.min() < -0.5 or pts.max() > 0.5):
            raise ParameterError("coordinates must lie in [-1/2, 1/2]")
        if _has_duplicates(pts):
            raise ParameterError("duplicate points are not allowed")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.d == other.d and np.array_equal(self.points, other.points)

    def with_point(self, x) -> "PointCloud":
        """Return a new cloud with ``x`` appended (duplicates rejected)."""
        x = np.asarray(x, dtype=np.float64).reshape(1, self.d)
        return PointCloud(self.d, np.vstack([self.points, x]))

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.d, self.points[np.asarray(idx, dtype=np.int64)])


def _has_duplicates(pts: np.ndarray) -> bool:
    if len(pts) < 2:
        return False
    first = np.sort(pts[:, 0])
    if np.all(first[1:] != first[:-1]):
        return False
    return len(np.unique(pts, axis=0)) != len(pts)


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Counter-based generator keyed by ``seed`` and an optional stream path.

    ``make_rng(s, i)`` and ``make_rng(s, j)`` are independent for ``i != j``
    and each is reproducible on its own, so replications can be regenerated
    individually and in any order.
    """
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def _uniform_points(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    pts = rng.random((n, d)) - 0.5
    if n > 1:
        # Probability zero in exact arithmetic; resample offenders so that
        # every tuple of distinct indices is a tuple of distinct points.
        while _has_duplicates(pts):
            _, first = np.unique(pts, axis=0, return_index=True)
            dup = np.setdiff1d(np.arange(n), first)
            pts[dup] = rng.random((len(dup), d)) - 0.5
    return pts


def sample_poisson(d: int, t: float, seed: int, replication: int | None = None) -> PointCloud:
    """Stationary Poisson process of intensity ``t`` on the unit-volume cube."""
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ParameterError(f"dimension must be a positive integer, got {d!r}")
    if not (t > 0) or not math.isfinite(t):
        raise ParameterError(f"intensity must be positive and finite, got {t!r}")
    rng = make_rng(seed) if replication is None else make_rng(seed, replication)
    n = int(rng.poisson(t))
    return PointCloud(int(d), _uniform_points(rng, n, int(d)))


def uniform_distance(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ParameterError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x - y)))


@dataclass(frozen=True, eq=False)
class CellGrid:
    """Sparse uniform grid over the cube.

    ``cells[i]`` is the integer index vector of point ``i``.  Occupied partial
    index vectors are kept per level as sorted integer keys over dense ranks,
    which avoids ever forming a key of size ``m^d``.
    """

    cell_width: float
    d: int
    m: int  # cells per axis
    cells: np.ndarray
    level_keys: tuple  # sorted occupied prefix keys, one array per coordinate
    cell_rank: np.ndarray  # dense rank of each point's full cell
    order: np.ndarray  # point indices sorted by cell rank
    starts: np.ndarray  # CSR offsets into ``order`` per cell rank
    _buckets: dict = field(default=None, repr=False)
    _tables: dict = field(default=None, repr=False)

    @property
    def buckets(self) -> dict:
        """Map from cell index tuple to ascending list of point indices."""
        if self._buckets is None:
            out = {}
            for r in range(len(self.starts) - 1):
                members = np.sort(self.order[self.starts[r]:self.starts[r + 1]])
                key = tuple(int(v) for v in self.cells[members[0]])
                out[key] = members.tolist()
            object.__setattr__(self, "_buckets", out)
        return self._buckets

    def lookup_table(self, j: int) -> np.ndarray:
        """Dense map from level-``j`` prefix key to rank (-1 if unoccupied)."""
        if self._tables is None:
            object.__setattr__(self, "_tables", {})
        table = self._tables.get(j)
        if table is None:
            prev = len(self.level_keys[j - 1]) if j else 1
            table = np.full(prev * self.m, -1, dtype=np.int64)
            table[self.level_keys[j]] = np.arange(len(self.level_keys[j]))
            self._tables[j] = table
        return table

    def cell_of(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.d)
        return np.floor((x + 0.5) / self.cell_width).astype(np.int64)


def _check_delta(delta):
    if not (0 < delta < 1):
        raise ParameterError(f"delta must lie in (0, 1), got {delta!r}")


def build_grid(cloud: PointCloud, delta: float) -> CellGrid:
    _check_delta(delta)
    d = cloud.d
    m = int(math.floor(1.0 / delta)) + 1
    n = len(cloud)
    cells = np.floor((cloud.points + 0.5) / delta).astype(np.int64)
    np.clip(cells, 0, m - 1, out=cells)
    keys = []
    rank = np.zeros(n, dtype=np.int64)
    for j in range(d):
        key = rank * m + cells[:, j]
        uniq, rank = np.unique(key, return_inverse=True)
        rank = rank.reshape(-1)
        keys.append(uniq)
    if n == 0:
        rank = np.zeros(0, dtype=np.int64)
    order = np.argsort(rank, kind="stable")
    ncells = len(keys[-1]) if keys else 0
    starts = np.zeros(ncells + 1, dtype=np.int64)
    np.cumsum(np.bincount(rank, minlength=ncells), out=starts[1:])
    cells.flags.writeable = False
    return CellGrid(float(delta), d, m, cells, tuple(keys), rank, order, starts)


_TABLE_LIMIT = 1 << 24


def _level_lookup(grid: CellGrid, j: int, c: np.ndarray, coord: np.ndarray) -> np.ndarray:
    """Rank of the occupied level-``j`` prefix ``(c, coord)``, or -1."""
    keys = grid.level_keys[j]
    key = c * grid.m + coord
    prev = len(grid.level_keys[j - 1]) if j else 1
    if prev * grid.m <= _TABLE_LIMIT:
        table = grid.lookup_table(j)
        return table[key]
    pos = np.minimum(np.searchsorted(keys, key), len(keys) - 1)
    return np.where(keys[pos] == key, pos, -1)


def _adjacent_cells(grid: CellGrid, qcells: np.ndarray, forward: bool = False):
    """Occupied cells adjacent to each query cell.

    Returns ``(query_index, cell_rank)`` arrays listing every occupied cell
    whose index vector is within one of ``qcells[q]`` in every coordinate.
    With ``forward`` only cells lexicographically >= the query cell are kept,
    so each unordered pair of distinct cells appears once.
    """
    nq = len(qcells)
    q = np.arange(nq, dtype=np.int64)
    c = np.zeros(nq, dtype=np.int64)
    tied = np.ones(nq, dtype=bool)
    if len(grid.cells) == 0:
        return q[:0], c[:0]
    m = grid.m
    for j in range(grid.d):
        qs, cs, ts = [], [], []
        base = qcells[q, j]
        for off in (-1, 0, 1):
            coord = base + off
            ok = (coord >= 0) & (coord < m)
            if forward and off < 0:
                ok &= ~tied
            r = _level_lookup(grid, j, c[ok], coord[ok])
            hit = r >= 0
            qs.append(q[ok][hit])
            cs.append(r[hit])
            ts.append(tied[ok][hit] & (off == 0))
        q = np.concatenate(qs)
        c = np.concatenate(cs)
        tied = np.concatenate(ts)
        if len(q) == 0:
            break
    if forward:
        return q, c, tied
    return q, c


def _expand(grid: CellGrid, q: np.ndarray, c: np.ndarray):
    """Expand (query, cell) pairs into (query, point) candidate pairs."""
    lo = grid.starts[c]
    cnt = grid.starts[c + 1] - lo
    total = int(cnt.sum())
    qq = np.repeat(q, cnt)
    offs = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    pp = grid.order[np.repeat(lo, cnt) + offs]
    return qq, pp


def _validate_grid(grid: CellGrid, cloud: PointCloud, delta):
    if delta is not None and delta != grid.cell_width:
        raise ParameterError(f"delta {delta} does not match grid cell width {grid.cell_width}")
    if len(grid.cells) != len(cloud) or grid.d != cloud.d:
        raise ParameterError("grid was not built for this cloud")


def neighbor_pairs(grid: CellGrid, cloud: PointCloud) -> np.ndarray:
    """All index pairs ``(i, j)``, ``i < j``, at uniform distance <= delta.

    Rows are sorted lexicographically.
    """
    _validate_grid(grid, cloud, None)
    n = len(cloud)
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    q, c, tied = _adjacent_cells(grid, grid.cells, forward=True)
    lo = grid.starts[c]
    i, j = _expand(grid, q, c)
    same = np.repeat(tied, grid.starts[c + 1] - lo)
    keep = ~same | (j > i)
    i, j = i[keep], j[keep]
    pts = cloud.points
    close = np.max(np.abs(pts[i] - pts[j]), axis=1) <= grid.cell_width
    i, j = i[close], j[close]
    i, j = np.minimum(i, j), np.maximum(i, j)
    order = np.lexsort((j, i))
    return np.stack([i[order], j[order]], axis=1)


def query_ball(grid: CellGrid, cloud: PointCloud, x) -> np.ndarray:
    """Ascending indices of cloud points within uniform distance delta of ``x``."""
    _validate_grid(grid, cloud, None)
    x = np.asarray(x, dtype=np.float64).reshape(1, cloud.d)
    qc = np.clip(grid.cell_of(x), -1, grid.m)
    q, c = _adjacent_cells(grid, qc)
    _, p = _expand(grid, q, c)
    p = p[np.max(np.abs(cloud.points[p] - x), axis=1) <= grid.cell_width]
    return np.sort(p)


def neighbors(grid: CellGrid, cloud: PointCloud, i: int, delta: float) -> list[int]:
    """Indices ``j != i`` within uniform distance ``delta`` of point ``i``."""
    _validate_grid(grid, cloud, delta)
    if not 0 <= i < len(cloud):
        raise ParameterError(f"point index {i} out of range for {len(cloud)} points")
    found = query_ball(grid, cloud, cloud.points[i])
    return [int(j) for j in found if j != i]


def cloud_to_json(cloud: PointCloud, t: float | None = None, delta: float | None = None,
                  seed: int | None = None) -> str:
    record = {
        "header": {"d": cloud.d, "t": t, "delta": delta, "seed": seed},
        "points": [[float(v) for v in row] for row in cloud.points],
    }
    return json.dumps(record)


def cloud_from_json(text: str) -> tuple[PointCloud, dict]:
    record = json.loads(text)
    header = record["header"]
    pts = np.asarray(record["points"], dtype=np.float64).reshape(-1, int(header["d"]))
    return PointCloud(int(header["d"]), pts), header
