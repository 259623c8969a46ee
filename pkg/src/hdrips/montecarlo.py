"""Replication harness: empirical laws of F_k against the analytic sandwich and limit laws.

Replication ``i`` of a run with base seed ``s`` always draws its cloud from
the generator keyed by ``(s, i)``, so any subset of replications can be
regenerated on its own and results never depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import poisson

from . import __version__
from .analytic import (Phase, PhaseLabel, RipsParams, Schedule, classify_phase,
                       expectation_bounds, variance_bounds)
from .decomp import Estimate
from .errors import CapacityError, ParameterError
from .geometry import sample_poisson
from .rips import diff1, diff2, f_vector

__all__ = [
    "ExperimentSummary",
    "SweepResult",
    "DiffMoments",
    "simulate_counts",
    "summarize",
    "run_experiment",
    "w1_to_standard_normal",
    "tv_to_poisson",
    "phase_sweep",
    "diff_operator_moments",
    "summary_to_dict",
    "sweep_csv",
    "resolve_threads",
    "POINT_CAP",
]

POINT_CAP = 10**5
W1_MIN_SAMPLES = 100


def resolve_threads(threads: int | None = None) -> int:
    """Worker count from the argument, else ``RIPS_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("RIPS_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ParameterError(f"thread count must be >= 1, got {threads}")
    return threads


@dataclass(frozen=True)
class ExperimentSummary:
    params: RipsParams
    replications: int
    samples: tuple[int, ...]
    empirical_mean: float
    empirical_var: float
    w1_to_normal: float | None
    tv_to_poisson: float | None
    theta_used: float | None
    seed_base: int
    w1_analytic: float | None = None
    phase: str | None = None

    @property
    def zero_fraction(self) -> float:
        return sum(1 for s in self.samples if s == 0) / self.replications

    @property
    def mean_se(self) -> float:
        return math.sqrt(self.empirical_var / self.replications)

    def var_se(self) -> float:
        """Standard error of the unbiased sample variance from the fourth central moment."""
        x = np.asarray(self.samples, dtype=np.float64)
        n = len(x)
        m4 = float(np.mean((x - self.empirical_mean) ** 4))
        s2 = self.empirical_var
        return math.sqrt(max(m4 - s2 * s2 * (n - 3) / (n - 1), 0.0) / n)


def _with_replication(exc: Exception, i: int) -> Exception:
    new = type(exc)(f"replication {i}: {exc}")
    new.replication = i
    return new


def simulate_counts(d: int, t: float, delta: float, k_max: int, R: int, seed: int,
                    threads: int | None = None, cloud_factory=None) -> list[tuple[int, ...]]:
    """f-vectors ``(f_0, ..., f_kmax)`` of R replications, ordered by replication index.

    ``cloud_factory(i)`` replaces the Poisson sampler (test hook).
    """
    if R < 1:
        raise ParameterError(f"replications must be >= 1, got {R}")
    workers = resolve_threads(threads)

    def one(i):
        cloud = cloud_factory(i) if cloud_factory is not None else sample_poisson(d, t, seed, i)
        try:
            return f_vector(cloud, delta, k_max).as_tuple()
        except (CapacityError, ParameterError) as exc:
            raise _with_replication(exc, i) from exc

    if workers == 1:
        return [one(i) for i in range(R)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(R), chunksize=max(1, R // (8 * workers))))


def _mean_var(samples) -> tuple[float, float]:
    n = len(samples)
    mean = math.fsum(samples) / n
    var = math.fsum((s - mean) ** 2 for s in samples) / (n - 1)
    return mean, var


def summarize(params: RipsParams, samples, seed: int, theta: float | None = None,
              phase: str | None = None) -> ExperimentSummary:
    """Assemble a summary from raw counts of F_k."""
    samples = tuple(int(s) for s in samples)
    if len(samples) < 2:
        raise ParameterError("need at least two replications")
    mean, var = _mean_var(samples)
    w1 = w1_mid = None
    if var > 0 and len(samples) >= W1_MIN_SAMPLES:
        x = np.asarray(samples, dtype=np.float64)
        w1 = w1_to_standard_normal((x - mean) / math.sqrt(var))
        if params.delta < 0.25:
            e = expectation_bounds(params).midpoint
            v = variance_bounds(params).midpoint
            w1_mid = w1_to_standard_normal((x - e) / math.sqrt(v))
    tv = tv_to_poisson(samples, theta) if theta is not None else None
    return ExperimentSummary(params, len(samples), samples, mean, var, w1, tv, theta, int(seed),
                             w1_mid, phase)


def run_experiment(params: RipsParams, R: int, seed: int, theta: float | None = None,
                   threads: int | None = None, cloud_factory=None,
                   phase: str | None = None) -> ExperimentSummary:
    if R < 2:
        raise ParameterError(f"replications must be >= 2, got {R}")
    rows = simulate_counts(params.d, params.t, params.delta, params.k, R, seed, threads,
                           cloud_factory)
    return summarize(params, [r[params.k] for r in rows], seed, theta, phase)


def w1_to_standard_normal(samples) -> float:
    """Mean absolute gap between sorted samples and normal quantiles at (i - 1/2)/n."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = len(x)
    if n < W1_MIN_SAMPLES:
        raise ParameterError(f"need at least {W1_MIN_SAMPLES} samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("samples must be finite")
    q = ndtri((np.arange(1, n + 1) - 0.5) / n)
    return float(np.mean(np.abs(x - q)))


def tv_to_poisson(samples, theta: float) -> float:
    """Total variation between the empirical pmf and Poisson(theta).

    Atoms never observed contribute their Poisson mass, which is collected as
    one minus the mass on the observed support.
    """
    if not (theta > 0 and math.isfinite(theta)):
        raise ParameterError(f"theta must be positive, got {theta!r}")
    x = np.asarray(samples)
    if x.size == 0:
        raise ParameterError("no samples")
    if x.dtype.kind not in "iu":
        xf = x.astype(np.float64)
        if not np.all(xf == np.round(xf)):
            raise ParameterError("samples must be integer-valued")
        x = xf.astype(np.int64)
    if np.any(x < 0):
        raise ParameterError("samples must be nonnegative")
    vals, counts = np.unique(x, return_counts=True)
    freq = counts / x.size
    pmf = poisson.pmf(vals, theta)
    tail = max(0.0, 1.0 - math.fsum(pmf))
    return float(min(1.0, 0.5 * (math.fsum(np.abs(freq - pmf)) + tail)))


@dataclass
class SweepResult:
    phase: PhaseLabel
    summaries: list[ExperimentSummary]
    failures: dict[int, str] = field(default_factory=dict)


def phase_sweep(schedule: Schedule, k: int, d_list, R: int, seed: int,
                phase: PhaseLabel | None = None, threads: int | None = None,
                max_points: float = POINT_CAP) -> SweepResult:
    """Run the schedule at each d; failures are recorded per d and the sweep continues.

    The Poisson phase compares against Poisson(theta) with the schedule's
    theta; Gaussian and vanishing phases report standardized W1 only.
    Dimensions whose intensity exceeds ``max_points`` are marked infeasible.
    """
    d_list = list(d_list)
    if phase is None:
        phase = classify_phase(schedule, k, max(50, max(d_list)))
    theta = None
    if phase.phase is Phase.POISSON:
        theta = schedule.theta if schedule.kind == "poisson" else phase.theta
    out = SweepResult(phase, [])
    for j, d in enumerate(d_list):
        try:
            params = schedule.params(d, k)
            if params.t > max_points:
                raise ParameterError(f"infeasible: t = {params.t:.6g} exceeds the cap of "
                                     f"{max_points:.6g} points per cloud")
            out.summaries.append(run_experiment(params, R, seed + j, theta, threads,
                                                phase=str(phase)))
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            out.failures[d] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass(frozen=True)
class DiffMoments:
    """Monte Carlo moments of add-one costs.

    ``d1[i][q]`` estimates ``E[(D_x F)^q]`` at ``points[i]`` for q = 1..4,
    ``d1d1m1[i]`` estimates ``E[(D_x F (D_x F - 1))^2]`` and ``d2[j]``
    estimates ``E[(D_{x1,x2} F)^4]`` for ``pairs[j]``.
    """

    points: tuple
    pairs: tuple
    d1: tuple[dict[int, Estimate], ...]
    d1d1m1: tuple[Estimate, ...]
    d2: tuple[Estimate, ...]


def _estimate(values: np.ndarray) -> Estimate:
    n = len(values)
    sd = float(np.std(values, ddof=1)) if n > 1 else 0.0
    return Estimate(float(np.mean(values)), sd / math.sqrt(n))


def diff_operator_moments(params: RipsParams, points, R: int, seed: int, pairs=(),
                          cloud_factory=None) -> DiffMoments:
    points = [np.asarray(x, dtype=np.float64) for x in points]
    pairs = [(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)) for a, b in pairs]
    first = np.zeros((R, len(points)), dtype=np.float64)
    second = np.zeros((R, len(pairs)), dtype=np.float64)
    for i in range(R):
        cloud = (cloud_factory(i) if cloud_factory is not None
                 else sample_poisson(params.d, params.t, seed, i))
        for j, x in enumerate(points):
            first[i, j] = diff1(cloud, params.delta, params.k, x)
        for j, (a, b) in enumerate(pairs):
            second[i, j] = diff2(cloud, params.delta, params.k, a, b)
    d1 = tuple({q: _estimate(first[:, j] ** q) for q in range(1, 5)} for j in range(len(points)))
    mixed = tuple(_estimate((first[:, j] * (first[:, j] - 1)) ** 2) for j in range(len(points)))
    d2 = tuple(_estimate(second[:, j] ** 4) for j in range(len(pairs)))
    return DiffMoments(tuple(map(tuple, points)), tuple((tuple(a), tuple(b)) for a, b in pairs),
                       d1, mixed, d2)


def summary_to_dict(s: ExperimentSummary, config: dict | None = None) -> dict:
    return {
        "version": __version__,
        "config": config or {},
        "params": s.params.to_dict(),
        "replications": s.replications,
        "seed_base": s.seed_base,
        "empirical_mean": s.empirical_mean,
        "empirical_var": s.empirical_var,
        "w1_to_normal": s.w1_to_normal,
        "w1_analytic": s.w1_analytic,
        "tv_to_poisson": s.tv_to_poisson,
        "theta_used": s.theta_used,
        "phase": s.phase,
        "zero_fraction": s.zero_fraction,
        "samples": list(s.samples),
    }


SWEEP_COLUMNS = ("d", "t", "delta", "k", "R", "mean", "var", "E_lo", "E_hi", "V_lo", "V_hi",
                 "w1", "tv", "theta")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def sweep_rows(result: SweepResult) -> list[dict]:
    rows = []
    for s in result.summaries:
        p = s.params
        e = expectation_bounds(p)
        v = variance_bounds(p)
        rows.append({"d": p.d, "t": p.t, "delta": p.delta, "k": p.k, "R": s.replications,
                     "mean": s.empirical_mean, "var": s.empirical_var, "E_lo": e.lower,
                     "E_hi": e.upper, "V_lo": v.lower, "V_hi": v.upper, "w1": s.w1_to_normal,
                     "tv": s.tv_to_poisson, "theta": s.theta_used})
    return rows


def sweep_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in sweep_rows(result):
        w.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def sweep_to_dict(result: SweepResult, config: dict | None = None) -> dict:
    return {
        "version": __version__,
        "config": config or {},
        "phase": str(result.phase),
        "summaries": [summary_to_dict(s) for s in result.summaries],
        "failures": {str(d): msg for d, msg in result.failures.items()},
    }


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
