from __future__ import annotations

import math

import numpy as np
import pytest

from branchrep.estimate import (
    EstimationFailure, branching_property_test, estimate_comparison, estimate_mode,
    estimate_pruned, extinction_test, pruning_study, run_samples, running_mean_stable,
)
from branchrep.models import build_scalar_quadratic_ode, build_single_mode
from branchrep.modes import DomainError
from branchrep.solvers import solve_semi_implicit


def test_zero_data_gives_exact_zero():
    rep = estimate_mode(build_scalar_quadratic_ode(0.0), (0,), 1.0, 1000, seed=1)
    assert rep.mean[0] == 0 and rep.se == 0 and rep.stable


def test_level_zero_is_decay():
    rep = estimate_pruned(build_scalar_quadratic_ode(0.5), (0,), 0.7, 0, 20_000, seed=2,
                          keep_samples=True)
    assert set(np.unique(rep.samples[:, 0])) <= {0.0, 0.5}
    assert rep.z_score([0.5 * math.exp(-0.7)]) < 4


def test_deep_pruning_matches_direct():
    s = build_scalar_quadratic_ode(0.5)
    direct = run_samples(s, (0,), 1.0, 2000, seed=5)
    deep = run_samples(s, (0,), 1.0, 2000, seed=5, level=10_000)
    assert np.array_equal(direct[0], deep[0])
    assert np.array_equal(direct[1], deep[1])


def test_thread_count_does_not_change_samples():
    s = build_scalar_quadratic_ode(-0.8)
    a = run_samples(s, (0,), 1.0, 5000, seed=9, threads=1)
    b = run_samples(s, (0,), 1.0, 5000, seed=9, threads=4)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_split_ranges_reproduce_full_run():
    s = build_scalar_quadratic_ode(0.5)
    full = run_samples(s, (0,), 1.0, 300, seed=4)[0]
    tail = run_samples(s, (0,), 1.0, 100, seed=4, start=200)[0]
    assert np.array_equal(full[200:], tail)


def test_all_budget_raises():
    with pytest.raises(EstimationFailure):
        estimate_mode(build_scalar_quadratic_ode(1.5), (0,), 20.0, 50, seed=1, budget=10)


def test_partial_budget_counted():
    rep = estimate_mode(build_scalar_quadratic_ode(0.5), (0,), 3.0, 2000, seed=1, budget=20)
    assert 0 < rep.n_excluded < 2000
    assert rep.trusted is (rep.n_excluded / rep.n_samples <= 1e-3)


def test_logistic_estimate():
    rep = estimate_mode(build_scalar_quadratic_ode(0.5), (0,), 1.0, 50_000, seed=11)
    exact = 0.5 / (0.5 + 0.5 * math.e)
    assert rep.z_score([exact]) < 4


def test_argument_checks():
    s = build_scalar_quadratic_ode(0.5)
    with pytest.raises(DomainError):
        estimate_mode(s, (0,), 1.0, 1, seed=0)
    with pytest.raises(DomainError):
        estimate_pruned(s, (0,), 1.0, -1, 10, seed=0)
    with pytest.raises(DomainError):
        run_samples(s, (0,), -1.0, 10, seed=0)
    with pytest.raises(DomainError):
        pruning_study(s, (0,), 1.0, [2, 1], 10, seed=0)


def test_pruning_study_pairs_levels():
    s = build_scalar_quadratic_ode(-2.0)
    fam = solve_semi_implicit(s, 5, 1.0, 1e-3)
    study = pruning_study(s, (0,), 1.0, [0, 2, 5, 8], 20_000, seed=3, scheme=fam)
    assert [r[0] for r in study.rows] == [0, 2, 5, 8]
    assert study.rows[-1][2] is None
    for n, rep, det in study.rows[:3]:
        assert rep.z_score(det) < 4.5
    assert "MC mean" in study.table()


def test_stability_flag():
    rng = np.random.default_rng(0)
    assert running_mean_stable(rng.normal(size=(100_000, 1)))
    x = rng.normal(size=(100_000, 1))
    x[60_000] = 1e6
    assert not running_mean_stable(x)
    assert running_mean_stable(np.zeros((50, 1)))


def test_comparison_estimate_small_data():
    rep = estimate_comparison(build_scalar_quadratic_ode(0.3), (0,), 1.0, 20_000, seed=8)
    exact = 0.3 / (0.3 + 0.7 * math.e)
    assert rep.stable and rep.z_score([exact]) < 4


def test_branching_inconclusive_without_pairs():
    res = branching_property_test(build_single_mode(q=0.0), (0,), 1.0, 100, seed=1)
    assert res.inconclusive and math.isnan(res.p_value)


def test_branching_window_checked():
    with pytest.raises(DomainError):
        branching_property_test(build_single_mode(q=0.4), (0,), 1.0, 100, seed=1, window=2.0)


def test_extinction_refuses_supercritical():
    with pytest.raises(DomainError):
        extinction_test(build_scalar_quadratic_ode(0.5), [1.0], 100, seed=0)


def test_extinction_pure_death():
    res = extinction_test(build_single_mode(), [0.0, 0.5, 2.0], 20_000, seed=6)
    assert res.fractions[0] == 0
    for h, f, e in zip(res.horizons[1:], res.fractions[1:], res.std_errors[1:]):
        assert abs(f - (1 - math.exp(-h))) < 4 * e
    assert res.n_budget_exceeded == 0
