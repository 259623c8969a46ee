"""Moment decompositions of Poisson U-statistics for powers p = 2, 3, 4.

Writing ``F^p`` as a sum over p ordered n-tuples of distinct points, every
coincidence between variables of different kernels is encoded by a chain of
injective maps: the j-th kernel's variables either stay fresh or are glued
injectively onto variables already introduced by kernels 1..j-1.  Grouping
the maps by how many variables each kernel reuses from each earlier kernel
gives the classes whose sizes, divided by ``n!^p``, are the decomposition
constants.

A class fixes only sharing counts.  For p >= 3 maps in one class can produce
different integrands (which earlier variables get reused matters once three
kernels overlap), so each class also carries its *patterns*: the number of
variables of every membership type (the set of kernels containing the
variable), with how many maps produce that pattern.  Class constants are
what the bounds use; patterns are what exact moments use.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ParameterError

__all__ = [
    "IndexSignature",
    "Term",
    "MomentDecomposition",
    "Estimate",
    "enumerate_classes",
    "enumerate_maps_bruteforce",
    "count_map_tuples",
    "second_moment_constants",
    "max_constant_per_arity",
    "pattern_kernels",
    "signature_of_pattern",
    "discrete_moment",
    "moment_estimate",
    "variance_terms",
    "constants_table",
    "constants_csv",
]

MAX_NP = 20
SIGNATURE_FIELDS = {
    2: ("r",),
    3: ("r", "s_Y", "s_Z"),
    4: ("r", "s_Y", "s_Z", "m_Y", "m_Z", "m_W"),
}


@dataclass(frozen=True, order=True)
class IndexSignature:
    n: int
    shared: tuple[int, ...]

    def label(self) -> str:
        return "(" + ",".join(str(v) for v in self.shared) + ")"


@dataclass(frozen=True)
class Term:
    signature: IndexSignature
    constant: Fraction
    arity: int
    # ((count of each membership mask 1..2^p-1), number of maps)
    patterns: tuple[tuple[tuple[int, ...], int], ...]

    @property
    def class_size(self) -> int:
        return sum(mult for _, mult in self.patterns)


@dataclass(frozen=True)
class MomentDecomposition:
    n: int
    p: int
    terms: tuple[Term, ...]

    def term(self, *shared) -> Term:
        for t in self.terms:
            if t.signature.shared == tuple(shared):
                return t
        raise KeyError(shared)

    def total_maps(self) -> int:
        return sum(t.class_size for t in self.terms)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def __float__(self):
        return float(self.value)


def _check_np(n, p):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError(f"kernel order must be a positive integer, got {n!r}")
    if p not in (2, 3, 4):
        raise ParameterError(f"power must be 2, 3 or 4, got {p!r}")
    if n * p > MAX_NP:
        raise ParameterError(f"n*p = {n * p} exceeds the enumeration guard {MAX_NP}")


def _falling(a: int, b: int) -> int:
    return math.perm(a, b) if 0 <= b <= a else 0


def signature_of_pattern(pattern: tuple[int, ...], p: int) -> tuple[int, ...]:
    """Sharing counts of a pattern, in the order of ``SIGNATURE_FIELDS[p]``."""

    def count(required: int, forbidden: int = 0) -> int:
        return sum(c for mask, c in enumerate(pattern, start=1)
                   if mask & required == required and not mask & forbidden)

    b = [1 << j for j in range(4)]
    r = count(b[0] | b[1])
    if p == 2:
        return (r,)
    s = (count(b[0] | b[2]), count(b[1] | b[2], b[0]))
    if p == 3:
        return (r,) + s
    m = (count(b[0] | b[3]), count(b[1] | b[3], b[0]), count(b[2] | b[3], b[0] | b[1]))
    return (r,) + s + m


def _patterns(n: int, p: int) -> dict[tuple[int, ...], int]:
    size = (1 << p) - 1
    start = [0] * size
    start[0] = n  # mask 0b1: variables of the first kernel only
    states = {tuple(start): 1}
    for j in range(1, p):
        bit = 1 << j
        nxt: dict[tuple[int, ...], int] = defaultdict(int)
        for state, mult in states.items():
            present = [(mask, c) for mask, c in enumerate(state, start=1) if c]
            ranges = [range(min(c, n) + 1) for _, c in present]
            for pick in itertools.product(*ranges):
                reused = sum(pick)
                if reused > n:
                    continue
                ways = _falling(n, reused)
                new = list(state)
                for (mask, c), k in zip(present, pick):
                    if k:
                        ways *= math.comb(c, k)
                        new[mask - 1] -= k
                        new[(mask | bit) - 1] += k
                new[bit - 1] += n - reused
                nxt[tuple(new)] += mult * ways
        states = nxt
    return dict(states)


def enumerate_classes(n: int, p: int) -> MomentDecomposition:
    """Classes of glueing-map chains for the p-th moment of an order-n U-statistic."""
    _check_np(n, p)
    by_sig: dict[tuple[int, ...], list] = defaultdict(list)
    for pattern, mult in _patterns(n, p).items():
        by_sig[signature_of_pattern(pattern, p)].append((pattern, mult))
    norm = math.factorial(n) ** p
    terms = []
    for sig in sorted(by_sig):
        pats = tuple(sorted(by_sig[sig]))
        arity = sum(pats[0][0])
        size = sum(m for _, m in pats)
        terms.append(Term(IndexSignature(n, sig), Fraction(size, norm), arity, pats))
    return MomentDecomposition(n, p, tuple(terms))


def _partial_injections(n: int, targets: list[int]):
    """Yield every injective partial map from n sources into ``targets``.

    A map is a tuple whose entry is a target label or ``None`` (fresh).
    """
    def rec(i, used):
        if i == n:
            yield ()
            return
        for rest in rec(i + 1, used):
            yield (None,) + rest
        for tgt in targets:
            if tgt not in used:
                for rest in rec(i + 1, used | {tgt}):
                    yield (tgt,) + rest
    yield from rec(0, frozenset())


def enumerate_maps_bruteforce(n: int, p: int, relabel=None) -> dict[tuple[int, ...], int]:
    """Class sizes by walking every map chain explicitly.

    Independent of the pattern recursion; exponential, intended for small
    ``n * p``.  ``relabel`` optionally permutes the variable labels of each
    kernel before the sharing counts are read off.
    """
    _check_np(n, p)
    sizes: dict[tuple[int, ...], int] = defaultdict(int)
    groups0 = [list(range(n))]  # fresh variables contributed by each kernel

    def walk(j, groups, sig):
        if j == p:
            sizes[tuple(sig)] += 1
            return
        known = [v for g in groups for v in g]
        nxt_label = len(known)
        for psi in _partial_injections(n, known):
            vars_j = []
            fresh = []
            for slot, tgt in enumerate(psi):
                if tgt is None:
                    fresh.append(nxt_label)
                    vars_j.append(nxt_label)
                    nxt_label += 1
                else:
                    vars_j.append(tgt)
            if relabel is not None:
                vars_j = [vars_j[i] for i in relabel[j]]
            hits = set(v for v in vars_j if v not in fresh)
            counts = [len(hits & set(g)) for g in groups]
            walk(j + 1, groups + [fresh], sig + counts)
            nxt_label = len(known)

    walk(1, groups0, [])
    return dict(sizes)


def count_map_tuples(n: int, p: int) -> int:
    """Total number of map chains, counted through the number of distinct variables only."""
    _check_np(n, p)
    level = {n: 1}
    for _ in range(1, p):
        nxt: dict[int, int] = defaultdict(int)
        for known, mult in level.items():
            for c in range(min(n, known) + 1):
                nxt[known + n - c] += mult * math.comb(n, c) * _falling(known, c)
        level = nxt
    return sum(level.values())


def second_moment_constants(n: int) -> dict[int, Fraction]:
    """``{r: C(n, r)}`` for the second moment."""
    return {t.signature.shared[0]: t.constant for t in enumerate_classes(n, 2).terms}


def max_constant_per_arity(decomp: MomentDecomposition, min_arity: int = 0) -> Fraction:
    """Largest total class constant over terms sharing one integral arity."""
    per_q: dict[int, Fraction] = defaultdict(Fraction)
    for t in decomp.terms:
        if t.arity >= min_arity:
            per_q[t.arity] += t.constant
    return max(per_q.values()) if per_q else Fraction(0)


def pattern_kernels(pattern: tuple[int, ...], p: int) -> list[list[int]]:
    """Variable index lists of the p kernels for an expanded pattern."""
    masks = [mask for mask, c in enumerate(pattern, start=1) for _ in range(c)]
    return [[v for v, mask in enumerate(masks) if mask >> j & 1] for j in range(p)]


def discrete_moment(decomp: MomentDecomposition, weights, adjacency) -> float:
    """Evaluate the decomposition against a purely atomic intensity measure.

    ``weights[a]`` is the mass of atom ``a`` and ``adjacency[a, b]`` the
    pairwise kernel factor; the kernel of a tuple is the product of factors
    over its pairs (atoms coincide with themselves, so the diagonal matters).
    """
    w = np.asarray(weights, dtype=np.float64)
    adj = np.asarray(adjacency, dtype=np.float64)
    n_atoms = len(w)
    total = 0.0
    for term in decomp.terms:
        for pattern, mult in term.patterns:
            kernels = pattern_kernels(pattern, decomp.p)
            arity = sum(pattern)
            pairs = sorted({(a, b) for ker in kernels for a, b in itertools.combinations(ker, 2)})
            assign = np.array(list(itertools.product(range(n_atoms), repeat=arity)), dtype=np.int64)
            val = np.prod(w[assign], axis=1)
            for a, b in pairs:
                val = val * adj[assign[:, a], assign[:, b]]
            total += float(Fraction(mult, math.factorial(decomp.n) ** decomp.p)) * float(val.sum())
    return total


def _components(kernels: list[list[int]], arity: int) -> list[list[tuple[int, int]]]:
    """Spanning forest as (child, parent) lists in breadth-first order; roots have parent -1."""
    nbrs = [set() for _ in range(arity)]
    for ker in kernels:
        for a in ker:
            nbrs[a].update(v for v in ker if v != a)
    seen = [False] * arity
    comps = []
    for root in range(arity):
        if seen[root]:
            continue
        seen[root] = True
        order = [(root, -1)]
        frontier = [root]
        while frontier:
            nxt = []
            for u in frontier:
                for v in sorted(nbrs[u]):
                    if not seen[v]:
                        seen[v] = True
                        order.append((v, u))
                        nxt.append(v)
            frontier = nxt
        comps.append(order)
    return comps


def _pattern_integral(pattern, p, d, t, delta, samples, rng) -> Estimate:
    """Monte Carlo of the product of Rips kernels over ``W^arity`` against ``t`` Lebesgue.

    Each connected group of variables is anchored at a uniform point of W and
    every further variable is drawn uniformly from the delta-box around its
    tree parent, so samples land on the support of the integrand.
    """
    kernels = pattern_kernels(pattern, p)
    arity = sum(pattern)
    comps = _components(kernels, arity)
    scale_log = arity * math.log(t) + d * (arity - len(comps)) * math.log(2 * delta)
    ok = np.ones(samples, dtype=bool)
    pts = np.empty((arity, samples, d))
    for comp in comps:
        for v, parent in comp:
            if parent < 0:
                pts[v] = rng.random((samples, d)) - 0.5
            else:
                pts[v] = pts[parent] + delta * (2.0 * rng.random((samples, d)) - 1.0)
                ok &= np.all(np.abs(pts[v]) <= 0.5, axis=1)
    for a, b in sorted({(a, b) for ker in kernels for a, b in itertools.combinations(ker, 2)}):
        ok &= np.max(np.abs(pts[a] - pts[b]), axis=1) <= delta
    frac = ok.mean()
    scale = math.exp(scale_log)
    return Estimate(scale * frac, scale * math.sqrt(frac * (1 - frac) / samples))


def moment_estimate(decomp: MomentDecomposition, params, samples: int = 10**6,
                    seed: int = 0) -> Estimate:
    """Estimate ``E[F_k^p]`` for the Rips count with ``n = k + 1`` from the decomposition."""
    from .geometry import make_rng

    if decomp.n != params.k + 1:
        raise ParameterError(f"decomposition order {decomp.n} does not match k + 1 = {params.k + 1}")
    norm = math.factorial(decomp.n) ** decomp.p
    value = 0.0
    var = 0.0
    idx = 0
    for term in decomp.terms:
        for pattern, mult in term.patterns:
            est = _pattern_integral(pattern, decomp.p, params.d, params.t, params.delta, samples,
                                    make_rng(seed, idx))
            idx += 1
            coef = mult / norm
            value += coef * est.value
            var += (coef * est.stderr) ** 2
    if not math.isfinite(value):
        raise ParameterError("moment estimate is not finite")
    return Estimate(value, math.sqrt(var))


def variance_terms(decomp: MomentDecomposition, params, samples: int = 10**6,
                   seed: int = 0) -> list[Estimate]:
    """The r = 1..n terms of the second-moment decomposition; they sum to the variance."""
    from .geometry import make_rng

    if decomp.p != 2:
        raise ParameterError("variance terms need the p = 2 decomposition")
    out = []
    for term in decomp.terms:
        r = term.signature.shared[0]
        if r == 0:
            continue
        ((pattern, _),) = term.patterns
        est = _pattern_integral(pattern, 2, params.d, params.t, params.delta, samples,
                                make_rng(seed, r))
        c = float(term.constant)
        out.append(Estimate(c * est.value, c * est.stderr))
    return out


def constants_table(n_max: int) -> list[tuple[int, int, str, int, int]]:
    """Rows ``(p, n, signature, numerator, denominator)`` for p = 2, 3, 4 and n <= n_max."""
    if not 1 <= n_max <= 5:
        raise ParameterError(f"n_max must lie in 1..5, got {n_max}")
    rows = []
    for p in (2, 3, 4):
        for n in range(1, n_max + 1):
            for term in enumerate_classes(n, p).terms:
                c = term.constant
                rows.append((p, n, term.signature.label(), c.numerator, c.denominator))
    return rows


def constants_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "n", "signature", "numerator", "denominator"])
    w.writerows(rows)
    return buf.getvalue()
