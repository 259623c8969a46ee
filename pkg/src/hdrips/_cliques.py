"""Compiled clique-tree traversal over forward adjacency lists."""

import numpy as np
from numba import njit


@njit(cache=True)
def clique_counts(indptr, indices, kmax):
    """Count cliques of every size up to ``kmax + 1`` vertices.

    ``indices[indptr[v]:indptr[v + 1]]`` must hold the neighbours of ``v``
    with larger index, sorted ascending.  Each clique is grown only through
    increasing vertex indices, so it is reached exactly once.  The deepest
    level is counted from candidate-set sizes without being enumerated.
    Returns ``counts[j]`` = number of ``(j + 1)``-cliques.
    """
    n = len(indptr) - 1
    counts = np.zeros(kmax + 1, dtype=np.int64)
    counts[0] = n
    if kmax == 0 or n == 0:
        return counts
    maxdeg = 0
    for v in range(n):
        deg = indptr[v + 1] - indptr[v]
        if deg > maxdeg:
            maxdeg = deg
    if maxdeg == 0:
        return counts
    buf = np.empty((kmax + 1, maxdeg), dtype=np.int64)
    lens = np.zeros(kmax + 1, dtype=np.int64)
    pos = np.zeros(kmax + 1, dtype=np.int64)
    for v in range(n):
        s = indptr[v]
        e = indptr[v + 1]
        deg = e - s
        if deg == 0:
            continue
        counts[1] += deg
        if kmax == 1:
            continue
        for a in range(deg):
            buf[1, a] = indices[s + a]
        lens[1] = deg
        pos[1] = 0
        depth = 1
        while depth >= 1:
            if pos[depth] >= lens[depth]:
                depth -= 1
                continue
            u = buf[depth, pos[depth]]
            pos[depth] += 1
            # candidates after u at this depth, intersected with forward(u)
            a = pos[depth]
            la = lens[depth]
            b = indptr[u]
            lb = indptr[u + 1]
            found = 0
            while a < la and b < lb:
                x = buf[depth, a]
                y = indices[b]
                if x == y:
                    buf[depth + 1, found] = x
                    found += 1
                    a += 1
                    b += 1
                elif x < y:
                    a += 1
                else:
                    b += 1
            counts[depth + 1] += found
            if found > 0 and depth + 1 < kmax:
                depth += 1
                lens[depth] = found
                pos[depth] = 0
    return counts
