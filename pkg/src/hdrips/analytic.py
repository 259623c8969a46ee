"""Closed-form quantities for k-simplex counts of the L-infinity Rips complex.

Everything of the form ``t (t delta^d)^k (k+1)^d`` is accumulated as a sum
of logarithms and exponentiated once, since these products leave double
range long before d = 100.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import decomp
from .errors import (AnalyticOverflowError, InconclusivePhaseError, OutsideAnalyticRangeWarning,
                     ParameterError)

__all__ = [
    "RipsParams",
    "AnalyticBounds",
    "Phase",
    "PhaseLabel",
    "Regime",
    "RateDiagnostics",
    "Schedule",
    "integral_IE",
    "integral_IV",
    "expectation_bounds",
    "expectation_expression",
    "variance_bounds",
    "variance_excess",
    "schedule_intensity",
    "check_radius_decay",
    "classify_phase",
    "derivative_moment_bound",
    "derivative_constant",
    "dom_constant",
    "rate_diagnostics",
    "analytic_rows",
    "analytic_csv",
]

_LOG_MAX = math.log(np.finfo(np.float64).max)
DELTA_MAX = 0.25


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


@dataclass(frozen=True)
class RipsParams:
    """Dimension, intensity, radius and simplex order of one model instance.

    Radii in [1/4, 1) are accepted with a warning because counting is valid
    there; the analytic routines call :meth:`require_analytic_range`.
    """

    d: int
    t: float
    delta: float
    k: int

    def __post_init__(self):
        if not _is_int(self.d) or self.d < 1:
            raise ParameterError(f"d must be an integer >= 1, got {self.d!r}")
        if not _is_int(self.k) or self.k < 1:
            raise ParameterError(f"k must be an integer >= 1, got {self.k!r}")
        if not (math.isfinite(self.t) and self.t > 0):
            raise ParameterError(f"t must be positive and finite, got {self.t!r}")
        if not (0 < self.delta < 1):
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.delta >= DELTA_MAX:
            warnings.warn(f"delta={self.delta} outside analytic range (0, 1/4)",
                          OutsideAnalyticRangeWarning, stacklevel=3)

    def require_analytic_range(self):
        if self.delta >= DELTA_MAX:
            raise ParameterError(f"analytic bounds need delta in (0, 1/4), got {self.delta}")

    @property
    def log_scale(self) -> float:
        """log of t * delta^d, the expected number of points in a delta-cell."""
        return math.log(self.t) + self.d * math.log(self.delta)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AnalyticBounds:
    lower: float
    upper: float
    inner_volume: float
    log_upper: float
    integrals: tuple[float, ...] = ()

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


def _exp_checked(log_value: float, what: str) -> float:
    if log_value > _LOG_MAX:
        raise AnalyticOverflowError(f"{what} overflows double precision (log value {log_value:.6g})")
    return math.exp(log_value)


def _check_dk(d, k):
    if not _is_int(d) or d < 1:
        raise ParameterError(f"d must be an integer >= 1, got {d!r}")
    if not _is_int(k) or k < 1:
        raise ParameterError(f"k must be an integer >= 1, got {k!r}")


def integral_IE(d: int, k: int) -> float:
    """``(k+1)^d`` as the nearest double (exact whenever representable)."""
    _check_dk(d, k)
    if d * math.log(k + 1) > _LOG_MAX:
        raise AnalyticOverflowError(f"I_E({d}, {k}) overflows double precision")
    return float((k + 1) ** d)


def _iv_base(k: int, r: int) -> Fraction:
    return Fraction(2 * (k + 2) * (k - r), r + 2) + r + 1


def integral_IV(d: int, k: int, r: int) -> float:
    """``(2(k+2)(k-r)/(r+2) + r + 1)^d``; r counts shared non-anchor variables."""
    _check_dk(d, k)
    if not _is_int(r) or not 0 <= r <= k:
        raise ParameterError(f"r must be an integer in [0, {k}], got {r!r}")
    base = _iv_base(k, r)
    if d * math.log(base) > _LOG_MAX:
        raise AnalyticOverflowError(f"I_V({d}, {k}, {r}) overflows double precision")
    if d <= 4096:
        return float(base ** d)
    return math.exp(d * math.log(base))


def expectation_expression(d: int, t: float, delta: float, k: int) -> float:
    """log of ``t (t delta^d)^k (k+1)^d / (k+1)!``."""
    return (math.log(t) + k * (math.log(t) + d * math.log(delta)) + d * math.log(k + 1)
            - math.lgamma(k + 2))


def expectation_bounds(p: RipsParams) -> AnalyticBounds:
    p.require_analytic_range()
    log_upper = expectation_expression(p.d, p.t, p.delta, p.k)
    upper = _exp_checked(log_upper, "expectation bound")
    inner = (1.0 - 2.0 * p.delta) ** p.d
    return AnalyticBounds(inner * upper, upper, inner, log_upper, (integral_IE(1, p.k) ** p.d,))


@lru_cache(maxsize=None)
def _second_constants(n: int) -> dict[int, Fraction]:
    return decomp.second_moment_constants(n)


def _excess_logs(p: RipsParams, constants) -> list[float]:
    k = p.k
    logs = []
    for r in range(1, k + 1):
        c = constants[r]
        logs.append(math.log(c) + math.log(p.t) + (2 * k + 1 - r) * p.log_scale
                    + p.d * math.log(_iv_base(k, r - 1)))
    return logs


def variance_excess(p: RipsParams, constants=None) -> float:
    """The sum over r = 1..k added to the expectation in both variance bounds."""
    if constants is None:
        constants = _second_constants(p.k + 1)
    logs = _excess_logs(p, constants)
    top = max(logs)
    return _exp_checked(top, "variance bound") * math.fsum(math.exp(v - top) for v in logs)


def variance_bounds(p: RipsParams, constants=None) -> AnalyticBounds:
    """Variance sandwich with constants of the order-(k+1) second-moment decomposition.

    ``constants`` maps r to the class constant; by default it comes from
    :func:`hdrips.decomp.second_moment_constants`.
    """
    e = expectation_bounds(p)
    if constants is None:
        constants = _second_constants(p.k + 1)
    excess = variance_excess(p, constants)
    upper = e.upper + excess
    lower = e.lower + e.inner_volume * excess
    integrals = tuple(float(_iv_base(p.k, r - 1)) ** p.d for r in range(1, p.k + 1))
    return AnalyticBounds(lower, upper, e.inner_volume, math.log(upper), integrals)


# ---------------------------------------------------------------------------
# phases and schedules


class Phase(enum.Enum):
    GAUSSIAN = "GAUSSIAN"
    POISSON = "POISSON"
    VANISHING = "VANISHING"


@dataclass(frozen=True)
class PhaseLabel:
    phase: Phase
    theta: float | None = None

    def __str__(self):
        if self.phase is Phase.POISSON:
            return f"POISSON({self.theta:.6g})"
        return self.phase.value


def _int_root(x: int, n: int) -> int | None:
    if x < 0:
        return None
    lo, hi = 0, 1 << (x.bit_length() // n + 1)
    while lo < hi:
        mid = (lo + hi) // 2
        if mid ** n < x:
            lo = mid + 1
        else:
            hi = mid
    return lo if lo ** n == x else None


def schedule_intensity(theta: float, k: int, d: int, delta: float) -> float:
    """Intensity making ``t (t delta^d)^k (k+1)^d / (k+1)! = theta``.

    When theta and delta have short decimal forms and the root is rational the
    result is exact; otherwise it is computed in log space.
    """
    _check_dk(d, k)
    if not (math.isfinite(theta) and theta > 0):
        raise ParameterError(f"theta must be positive, got {theta!r}")
    if not (0 < delta < DELTA_MAX):
        raise ParameterError(f"delta must lie in (0, 1/4), got {delta!r}")
    log_t = (math.log(theta) + math.lgamma(k + 2) - d * k * math.log(delta)
             - d * math.log(k + 1)) / (k + 1)
    if log_t > _LOG_MAX:
        raise AnalyticOverflowError(f"intensity for d={d} overflows double precision")
    if d * k * len(repr(delta)) < 4000:
        base = (Fraction(repr(float(theta))) * math.factorial(k + 1)
                / (Fraction(repr(float(delta))) ** (d * k) * (k + 1) ** d))
        num, den = _int_root(base.numerator, k + 1), _int_root(base.denominator, k + 1)
        if num is not None and den is not None:
            return num / den
    return math.exp(log_t)


@dataclass(frozen=True)
class Schedule:
    """Radius ``c d^-alpha`` with an intensity rule.

    ``kind="poisson"`` sets ``t_d = schedule_intensity(theta, k, d, delta_d) * d^beta``
    (beta > 0 pushes towards the Gaussian phase, beta < 0 towards vanishing);
    ``kind="constant"`` keeps ``t_d = t``.
    """

    kind: str = "poisson"
    c: float = 1.0
    alpha: float = 2.0
    theta: float = 1.0
    beta: float = 0.0
    t: float | None = None

    def __post_init__(self):
        if self.kind not in ("poisson", "constant"):
            raise ParameterError(f"unknown schedule kind {self.kind!r}")
        if not (self.c > 0 and math.isfinite(self.alpha)):
            raise ParameterError("schedule needs c > 0 and a finite alpha")
        if self.kind == "poisson" and not self.theta > 0:
            raise ParameterError("poisson schedule needs theta > 0")
        if self.kind == "constant" and not (self.t is not None and self.t > 0):
            raise ParameterError("constant schedule needs t > 0")

    def delta(self, d: int) -> float:
        return self.c * float(d) ** (-self.alpha)

    def intensity(self, d: int, k: int) -> float:
        if self.kind == "constant":
            return float(self.t)
        return schedule_intensity(self.theta, k, d, self.delta(d)) * float(d) ** self.beta

    def params(self, d: int, k: int) -> RipsParams:
        return RipsParams(d, self.intensity(d, k), self.delta(d), k)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Schedule":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ParameterError(f"unknown schedule fields {sorted(extra)}")
        return cls(**data)


def _tail(values, frac=0.2):
    n = max(2, int(math.ceil(frac * len(values))))
    return values[-n:]


def check_radius_decay(schedule: Schedule, d_max: int) -> tuple[str, str]:
    """Numeric check that ``d * delta_d -> 0``.

    Returns ``("ok" | "warn" | "reject", message)``.  A tail of ``d * delta_d``
    that is flat signals a finite nonzero limit (warn); an increasing one is
    rejected.
    """
    ds = np.arange(1, d_max + 1)
    g = ds * np.array([schedule.delta(int(d)) for d in ds])
    tail = _tail(g)
    decreasing = bool(np.all(np.diff(tail) < 0))
    if decreasing and g[-1] < 0.1:
        return "ok", ""
    if decreasing:
        return "warn", f"d*delta_d = {g[-1]:.3g} at d={d_max} is decreasing but not yet below 0.1"
    if tail.max() / tail.min() < 1.01:
        return "warn", (f"d*delta_d tends to {tail[-1]:.3g}, not 0: radius must decrease "
                        "faster than 1/d")
    return "reject", "d*delta_d grows, radius must decrease faster than 1/d"


def classify_phase(schedule: Schedule, k: int, d_max: int) -> PhaseLabel:
    """Phase of a schedule from the tail of the expectation expression over d = 1..d_max.

    Dimensions with ``delta_d >= 1/4`` are skipped.  A tail (last 20% of the
    evaluated range) whose max/min ratio is below 1.01 is read as a finite
    limit and theta is the tail mean; otherwise a strictly monotone tail
    decides between divergence and decay.
    """
    _check_dk(d_max, k)
    status, msg = check_radius_decay(schedule, d_max)
    if status == "reject":
        raise ParameterError(msg)
    ds = [d for d in range(1, d_max + 1) if schedule.delta(d) < DELTA_MAX]
    if len(ds) < 5:
        raise InconclusivePhaseError("fewer than five admissible dimensions")
    logs = np.array([expectation_expression(d, schedule.intensity(d, k), schedule.delta(d), k)
                     for d in ds])
    tail = _tail(logs)
    if tail.max() - tail.min() < math.log(1.01):
        label = PhaseLabel(Phase.POISSON, float(np.mean(np.exp(tail))))
    elif np.all(np.diff(tail) > 0):
        label = PhaseLabel(Phase.GAUSSIAN)
    elif np.all(np.diff(tail) < 0):
        label = PhaseLabel(Phase.VANISHING)
    else:
        raise InconclusivePhaseError("expectation expression has a non-monotone tail")
    if status == "warn":
        if label.phase is not Phase.GAUSSIAN and "not 0" in msg:
            raise ParameterError(msg + " (only tolerated in the Gaussian phase)")
        warnings.warn(msg, UserWarning, stacklevel=2)
    return label


# ---------------------------------------------------------------------------
# difference-operator bounds


@lru_cache(maxsize=None)
def derivative_constant(k: int, p: int, min_arity: int = 0) -> Fraction:
    """Largest per-arity sum of class constants of the p-th moment of an order-k U-statistic."""
    return decomp.max_constant_per_arity(decomp.enumerate_classes(k, p), min_arity)


def _log_sum(logs) -> float:
    top = max(logs)
    return top + math.log(math.fsum(math.exp(v - top) for v in logs))


def _skeleton(log_scale: float, d: int, q_lo: int, q_hi: int, order: int, lead: int,
              base: int) -> float:
    """log of sum_{q} (t delta^d)^q (lead ((q - base)/order + 1)^order)^d."""
    return _log_sum([q * log_scale + d * (math.log(lead) + order * math.log((q - base) / order + 1))
                     for q in range(q_lo, q_hi + 1)])


def derivative_moment_bound(p: RipsParams, order: int, which: str = "D1", x1=None, x2=None) -> float:
    """Upper bound on a moment of the add-one cost of F_k at a fixed point.

    ``which="D1"``: ``E[(D_x F)^order]`` for order 2, 3, 4.
    ``which="D1D1m1"``: ``E[(D_x F (D_x F - 1))^2]``; order must be 4.
    ``which="D2"``: ``E[(D_{x1,x2} F)^4]``; order must be 4, and ``x1``, ``x2``
    (optional) switch the bound off when farther apart than delta.

    Constants are the enumerated per-arity maxima of the decomposition of the
    relevant U-statistic, so the result is a bound and never an estimate.
    """
    p.require_analytic_range()
    k, d, ls = p.k, p.d, p.log_scale
    if order not in (2, 3, 4):
        raise ParameterError(f"order must be 2, 3 or 4, got {order!r}")
    if which == "D1":
        c = derivative_constant(k, order)
        log_b = _skeleton(ls, d, k, order * k, order - 1, k + 1, k)
    elif which == "D1D1m1":
        if order != 4:
            raise ParameterError("D1D1m1 is a fourth-degree moment; use order=4")
        c = derivative_constant(k, 2, k + 1) + derivative_constant(k, 4, k + 1)
        log_b = _skeleton(ls, d, k + 1, 4 * k, 3, k + 1, k)
    elif which == "D2":
        if order != 4:
            raise ParameterError("D2 bound is stated for the fourth moment; use order=4")
        if x1 is not None and x2 is not None:
            gap = np.max(np.abs(np.asarray(x1, float) - np.asarray(x2, float)))
            if gap > p.delta:
                return 0.0
        if k == 1:
            return 1.0
        c = derivative_constant(k - 1, 4)
        log_b = _skeleton(ls, d, k - 1, 4 * (k - 1), 3, k, k - 1)
    else:
        raise ParameterError(f"unknown derivative moment {which!r}")
    return _exp_checked(math.log(c) + log_b, "derivative moment bound")


def dom_constant(k: int) -> Fraction:
    """``max_r C(k, r-1) / C(k+1, r)`` over r = 1..k+1."""
    _check_dk(1, k)
    lo = _second_constants(k)
    hi = _second_constants(k + 1)
    return max(lo[r - 1] / hi[r] for r in range(1, k + 2))


# ---------------------------------------------------------------------------
# rate diagnostics


class Regime(enum.Enum):
    ZERO = "0"
    CONSTANT = "c"
    INFINITE = "inf"


@dataclass(frozen=True)
class RateDiagnostics:
    """Order expressions (constants set to 1) of the error terms and the resulting rate."""

    gamma1_order: float
    gamma2_order: float
    gamma3_order: float
    rate_order: float
    regime: Regime
    phase: Phase
    log_values: dict = field(default_factory=dict, compare=False)


def _poisson_scale(p: RipsParams, theta: float) -> float:
    """log of t delta^d implied by ``t (t delta^d)^k (k+1)^d = (k+1)! theta``."""
    return (math.lgamma(p.k + 2) + math.log(theta) - math.log(p.t)
            - p.d * math.log(p.k + 1)) / p.k


def rate_diagnostics(p: RipsParams, regime, phase=Phase.GAUSSIAN, theta: float | None = None
                     ) -> RateDiagnostics:
    """Orders of gamma_1, gamma_2, gamma_3 and of the distance bound.

    For the Gaussian phase the three regimes of ``t delta^d`` (to 0, to a
    constant, to infinity) give different expressions.  In the Poisson phase
    ``t delta^d`` is eliminated through the limit relation with ``theta``
    (default: the current expectation expression), which is how the rate in
    t alone arises.
    """
    regime = Regime(regime) if not isinstance(regime, Regime) else regime
    phase = Phase(phase) if not isinstance(phase, Phase) else phase
    k, d, t = p.k, p.d, p.t
    lt = math.log(t)
    ls = p.log_scale
    l2, lk, lk1 = math.log(2), math.log(k), math.log(k + 1)
    lq = math.log1p(1 / (k * k + 2 * k))
    if phase is Phase.POISSON:
        if regime is not Regime.ZERO:
            raise ParameterError("the Poisson phase forces t delta^d -> 0")
        if theta is None:
            theta = math.exp(expectation_expression(d, t, p.delta, k))
        ls = _poisson_scale(p, theta)
        g1 = 2 * d * l2 + 1.5 * ls + 3 * d * lk1
        g2 = 2 * d * l2 + ls + 3 * d * lk + d * (lk - lk1)
        g3 = 0.5 * ls + 2 * d * lk1
        if k <= 3:
            rate = -lt / (2 * k) + d * (3 * k - 1) / (2 * k) * lk1 + d * l2
        else:
            rate = -lt / (2 * k) + d * (4 * k - 1) / (2 * k) * lk1
    elif phase is Phase.GAUSSIAN:
        if regime is Regime.ZERO:
            g1 = 2 * d * l2 + 2 * d * lk1 - lt + (1.5 - k) * ls
            g2 = 2 * d * l2 + 2 * d * lk + 2 * d * (lk - lk1) - lt + (1 - k) * ls
            g3 = 1.5 * d * lk1 - 0.5 * lt - 0.5 * k * ls
            le = expectation_expression(d, t, p.delta, k)
            rate = -0.5 * le + (1.5 * d * lk1 + d * l2 if k <= 3 else 2 * d * lk1)
        else:
            g1 = 2 * d * l2 - lt + 2 * d * lq
            g2 = 2 * d * l2 - lt + 2 * d * (2 * lk - math.log(k * k + 2 * k))
            if regime is Regime.INFINITE:
                g2 -= 2 * ls
            g3 = -0.5 * lt + 1.5 * d * lq
            rate = -0.5 * lt + d * lq + d * l2
    else:
        raise ParameterError("rate diagnostics exist for the Gaussian and Poisson phases only")
    logs = {"gamma1": g1, "gamma2": g2, "gamma3": g3, "rate": rate}
    vals = {key: math.exp(min(v, _LOG_MAX)) for key, v in logs.items()}
    return RateDiagnostics(vals["gamma1"], vals["gamma2"], vals["gamma3"], vals["rate"],
                           regime, phase, logs)


# ---------------------------------------------------------------------------
# tables

ANALYTIC_COLUMNS = ("d", "k", "t", "delta", "E_lower", "E_upper", "V_lower", "V_upper",
                    "phase", "theta_hat")


def analytic_rows(schedule: Schedule, k: int, d_values, phase: PhaseLabel | None = None) -> list[dict]:
    """Bounds along a schedule; the phase label is classified over 1..max(d) unless given."""
    d_values = list(d_values)
    if phase is None:
        try:
            phase = classify_phase(schedule, k, max(d_values))
            label, theta_hat = phase.phase.value, phase.theta
        except InconclusivePhaseError:
            label, theta_hat = "INCONCLUSIVE", None
    else:
        label, theta_hat = phase.phase.value, phase.theta
    rows = []
    for d in d_values:
        prm = schedule.params(d, k)
        e = expectation_bounds(prm)
        v = variance_bounds(prm)
        rows.append({"d": d, "k": k, "t": prm.t, "delta": prm.delta, "E_lower": e.lower,
                     "E_upper": e.upper, "V_lower": v.lower, "V_upper": v.upper,
                     "phase": label, "theta_hat": theta_hat})
    return rows


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return "" if v is None else str(v)


def analytic_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANALYTIC_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in ANALYTIC_COLUMNS])
    return buf.getvalue()
