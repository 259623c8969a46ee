"""Independent reference computations shared by the unit and acceptance tests."""

import math

import numpy as np


def _range_ok(cols):
    """Rows whose values (together with the origin) span at most 1."""
    hi = np.maximum(cols.max(axis=1), 0.0)
    lo = np.minimum(cols.min(axis=1), 0.0)
    return hi - lo <= 1.0


def quadrature_IE(k, samples, rng, chunk=250_000):
    """Monte Carlo of int_{[-1,1]^k} 1{0, y_1..y_k pairwise within 1} dy; returns (value, se)."""
    hits = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        y = rng.uniform(-1, 1, size=(m, k))
        hits += int(_range_ok(y).sum())
        done += m
    p = hits / samples
    vol = 2.0 ** k
    return vol * p, vol * math.sqrt(p * (1 - p) / samples)


def quadrature_IV(k, r, samples, rng, chunk=250_000):
    """Monte Carlo of the one-dimensional two-kernel integral sharing the origin and y_1..y_r."""
    hits = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        y = rng.uniform(-1, 1, size=(m, k))
        z = rng.uniform(-1, 1, size=(m, k - r))
        ok = _range_ok(y) & _range_ok(np.concatenate([y[:, :r], z], axis=1))
        hits += int(ok.sum())
        done += m
    p = hits / samples
    vol = 2.0 ** (2 * k - r)
    return vol * p, vol * math.sqrt(p * (1 - p) / samples)


def brute_pairs(points, delta):
    n = len(points)
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    dist = np.max(np.abs(points[:, None, :] - points[None, :, :]), axis=2)
    i, j = np.nonzero(np.triu(dist <= delta, k=1))
    return np.stack([i, j], axis=1)
