import math

import numpy as np
import pytest
from scipy.stats import poisson

from hdrips.analytic import Phase, PhaseLabel, RipsParams, Schedule
from hdrips.errors import ParameterError
from hdrips.geometry import PointCloud, make_rng, sample_poisson
from hdrips.montecarlo import (SWEEP_COLUMNS, diff_operator_moments, phase_sweep,
                               resolve_threads, run_experiment, simulate_counts, summarize,
                               summary_to_dict, sweep_csv, sweep_to_dict, tv_to_poisson,
                               w1_to_standard_normal)


def test_identical_clouds_give_zero_variance():
    cloud = PointCloud(2, [[0.0, 0.0], [0.05, 0.0], [0.3, 0.3]])
    s = run_experiment(RipsParams(2, 3.0, 0.1, 1), 2, 0, cloud_factory=lambda i: cloud)
    assert s.samples == (1, 1)
    assert s.empirical_var == 0 and s.w1_to_normal is None
    assert s.empirical_mean == 1.0


def test_replication_count_validated():
    with pytest.raises(ParameterError):
        run_experiment(RipsParams(2, 3.0, 0.1, 1), 1, 0)
    with pytest.raises(ParameterError):
        simulate_counts(2, 3.0, 0.1, 1, 0, 0)
    with pytest.raises(ParameterError):
        summarize(RipsParams(2, 3.0, 0.1, 1), [3], 0)


def test_determinism_and_thread_invariance():
    p = RipsParams(3, 200.0, 0.1, 2)
    a = run_experiment(p, 120, 5, threads=1)
    b = run_experiment(p, 120, 5, threads=1)
    c = run_experiment(p, 120, 5, threads=4)
    assert a == b == c
    assert run_experiment(p, 120, 6).samples != a.samples


def test_replications_are_prefix_stable():
    rows = simulate_counts(2, 80.0, 0.1, 2, 30, 9)
    assert simulate_counts(2, 80.0, 0.1, 2, 10, 9) == rows[:10]
    assert all(len(r) == 3 for r in rows)


def test_resolve_threads(monkeypatch):
    monkeypatch.delenv("RIPS_THREADS", raising=False)
    assert resolve_threads() == 1
    monkeypatch.setenv("RIPS_THREADS", "3")
    assert resolve_threads() == 3
    assert resolve_threads(2) == 2
    with pytest.raises(ParameterError):
        resolve_threads(0)


def test_summary_statistics_use_unbiased_variance():
    p = RipsParams(2, 50.0, 0.1, 1)
    s = summarize(p, [1, 2, 3, 4], 0)
    assert s.empirical_mean == 2.5
    assert s.empirical_var == pytest.approx(5 / 3, rel=1e-15)
    assert s.zero_fraction == 0.0
    assert s.w1_to_normal is None


def test_var_se_matches_spread_of_variances():
    rng = make_rng(1)
    p = RipsParams(2, 50.0, 0.1, 1)
    estimates, ses = [], []
    for _ in range(300):
        x = rng.poisson(4.0, size=400)
        s = summarize(p, x, 0)
        estimates.append(s.empirical_var)
        ses.append(s.var_se())
    # empirical spread of the variance estimator vs the average reported se
    assert np.std(estimates) == pytest.approx(np.mean(ses), rel=0.15)


def test_w1_standard_normal_sample():
    x = make_rng(3).standard_normal(100_000)
    assert w1_to_standard_normal(x) < 0.02


def test_w1_of_constant_zero_is_mean_abs_normal():
    assert w1_to_standard_normal(np.zeros(100_000)) == pytest.approx(math.sqrt(2 / math.pi),
                                                                     abs=1e-3)


def test_w1_shift_is_one_lipschitz():
    x = make_rng(4).standard_normal(5000)
    base = w1_to_standard_normal(x)
    for c in (0.01, 0.3, 2.0):
        assert abs(w1_to_standard_normal(x + c) - base) <= c + 1e-12


def test_w1_decreases_with_sample_size():
    rng = make_rng(5)
    means = [np.mean([w1_to_standard_normal(rng.standard_normal(n)) for _ in range(20)])
             for n in (100, 1000, 10_000)]
    assert means[0] > means[1] > means[2]


def test_w1_guards():
    with pytest.raises(ParameterError):
        w1_to_standard_normal(np.zeros(99))
    with pytest.raises(ParameterError):
        w1_to_standard_normal(np.full(200, np.nan))


def test_tv_examples():
    assert tv_to_poisson(np.zeros(1000, dtype=int), math.log(2)) == pytest.approx(0.5, rel=1e-12)
    x = make_rng(6).poisson(3.0, size=200_000)
    assert tv_to_poisson(x, 3.0) < 0.01
    assert tv_to_poisson(x, 9.0) > 0.5


def test_tv_matches_direct_sum():
    x = make_rng(7).poisson(1.5, size=300)
    direct = 0.5 * sum(abs(np.mean(x == j) - poisson.pmf(j, 1.5)) for j in range(200))
    assert tv_to_poisson(x, 1.5) == pytest.approx(direct, abs=1e-12)


def test_tv_range_and_guards():
    rng = make_rng(8)
    for _ in range(50):
        x = rng.integers(0, 20, size=int(rng.integers(1, 200)))
        assert 0.0 <= tv_to_poisson(x, float(rng.uniform(0.1, 30))) <= 1.0
    with pytest.raises(ParameterError):
        tv_to_poisson([0.5, 1.0], 1.0)
    with pytest.raises(ParameterError):
        tv_to_poisson([-1, 1], 1.0)
    with pytest.raises(ParameterError):
        tv_to_poisson([1, 2], 0.0)
    assert tv_to_poisson([1.0, 2.0], 1.0) == tv_to_poisson([1, 2], 1.0)


def test_sweep_records_failures_and_continues():
    res = phase_sweep(Schedule(theta=2.0), 1, [3, 4, 8], R=50, seed=1,
                      phase=PhaseLabel(Phase.POISSON, 2.0))
    assert [s.params.d for s in res.summaries] == [3, 4]
    assert "infeasible" in res.failures[8]
    assert all(s.theta_used == 2.0 and s.tv_to_poisson is not None for s in res.summaries)
    lines = sweep_csv(res).splitlines()
    assert lines[0] == ",".join(SWEEP_COLUMNS) and len(lines) == 3
    blob = sweep_to_dict(res)
    assert blob["phase"] == "POISSON(2)" and set(blob["failures"]) == {"8"}


def test_sweep_seeds_differ_per_dimension():
    res = phase_sweep(Schedule(theta=2.0), 1, [3, 3], R=50, seed=1,
                      phase=PhaseLabel(Phase.POISSON, 2.0))
    assert [s.seed_base for s in res.summaries] == [1, 2]
    assert res.summaries[0].samples != res.summaries[1].samples


def test_summary_dict_round_trips_through_json():
    import json
    s = run_experiment(RipsParams(2, 30.0, 0.1, 1), 5, 3)
    blob = json.loads(json.dumps(summary_to_dict(s)))
    assert blob["samples"] == list(s.samples)
    assert blob["empirical_var"] == s.empirical_var


def test_diff_moments_jensen_and_far_points():
    p = RipsParams(2, 150.0, 0.1, 1)
    m = diff_operator_moments(p, [[0.0, 0.0]], 300, 4,
                              pairs=[([0.0, 0.0], [0.05, 0.02]), ([0.0, 0.0], [0.4, 0.4])])
    d1 = m.d1[0]
    assert d1[2].value >= d1[1].value ** 2
    assert d1[4].value >= d1[2].value ** 2
    # D_x F_1 is the number of neighbors, Poisson with mean t (2 delta)^d
    lam = p.t * (2 * p.delta) ** p.d
    assert abs(d1[1].value - lam) <= 4 * d1[1].stderr
    assert m.d2[0].value == 1.0
    assert m.d2[1].value == 0.0 and m.d2[1].stderr == 0.0


def test_diff_moments_match_explicit_loop():
    p = RipsParams(2, 60.0, 0.15, 2)
    x = [0.1, -0.2]
    m = diff_operator_moments(p, [x], 20, 11)
    from hdrips.rips import diff1
    vals = [diff1(sample_poisson(2, 60.0, 11, i), 0.15, 2, x) for i in range(20)]
    assert m.d1[0][3].value == pytest.approx(np.mean(np.array(vals, float) ** 3), rel=1e-15)
