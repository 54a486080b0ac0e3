from __future__ import annotations

import math

import numpy as np
import pytest

from branchrep.models import build_scalar_quadratic_ode, build_single_mode, hermitian_residual, AbstractSystem
from branchrep.modes import DomainError
from branchrep.solvers import (
    NotConverged, logistic_blowup_time, logistic_reference, solve_comparison, solve_mild_picard,
    solve_semi_implicit,
)


def _decay_system():
    return AbstractSystem("decay", [(1,), (2,), (3,)], 1, [1.0, 4.0, 9.0], [0.0] * 3, [[], [], []],
                          1.0, 1.0, [1.0, 0.5, -2.0], None)


def test_picard_linear_decay():
    s = _decay_system()
    g = solve_mild_picard(s, 1.0, 1e-3)
    assert g.converged and g.iterations <= 2
    exact = np.exp(-np.outer(g.times, s.lam)) * s.chi0[:, 0]
    assert np.max(np.abs(g.values[:, :, 0] - exact)) < 1e-10


def test_picard_logistic():
    g = solve_mild_picard(build_scalar_quadratic_ode(0.5), 1.0, 1e-3, tol=1e-10)
    assert abs(g.at(1.0)[0, 0] - 0.268941) < 1e-5


def test_picard_hermitian(burgers_small):
    g = solve_mild_picard(burgers_small, 0.5, 1e-3)
    assert g.converged
    assert max(hermitian_residual(v, burgers_small.modes) for v in g.values) < 1e-10


def test_picard_not_converged_for_large_data():
    with pytest.raises(NotConverged) as info:
        solve_mild_picard(build_scalar_quadratic_ode(3.0), 2.0, 1e-2, max_iter=30)
    assert info.value.residual > 0


def test_bad_arguments():
    s = build_scalar_quadratic_ode(0.5)
    with pytest.raises(DomainError):
        solve_mild_picard(s, 1.0, 0.0)
    with pytest.raises(DomainError):
        solve_mild_picard(s, 1.0, 1e-2, tol=0.0)
    with pytest.raises(DomainError):
        solve_semi_implicit(s, -1, 1.0, 1e-2)


def test_semi_implicit_level_zero_is_decay():
    s = build_scalar_quadratic_ode(0.5)
    fam = solve_semi_implicit(s, 0, 1.0, 1e-2)
    assert len(fam.levels) == 1
    assert np.allclose(fam.levels[0].values[:, 0, 0], 0.5 * np.exp(-fam.levels[0].times), atol=0, rtol=1e-15)


def test_semi_implicit_negative_data_converges():
    fam = solve_semi_implicit(build_scalar_quadratic_ode(-2.0), 20, 1.0, 1e-3)
    exact = -2 / (3 * math.e - 2)
    errs = [abs(lv.at(1.0)[0, 0] - exact) for lv in fam.levels]
    assert errs[20] < 1e-4
    assert all(b < a for a, b in zip(errs[:8], errs[1:9]))


def test_semi_implicit_agrees_with_picard(burgers_small):
    g = solve_mild_picard(burgers_small, 0.5, 1e-3)
    fam = solve_semi_implicit(burgers_small, 15, 0.5, 1e-3)
    assert np.max(np.abs(fam.levels[15].at(0.5) - g.at(0.5))) < 1e-6


def test_stiff_step_is_tightened():
    s = build_single_mode(lam=1000.0)
    g = solve_mild_picard(s, 0.1, 1e-2)
    assert g.dt * 1000.0 <= 0.5 + 1e-12


def _order(values):
    a, b, c = values
    return math.log2(abs(a - b) / abs(b - c))


def test_refinement_orders():
    s = build_scalar_quadratic_ode(0.5)
    dts = [0.04, 0.02, 0.01]
    picard = [solve_mild_picard(s, 1.0, dt).at(1.0)[0, 0].real for dt in dts]
    assert abs(_order(picard) - 2) < 0.5
    semi = [solve_semi_implicit(s, 3, 1.0, dt).levels[3].at(1.0)[0, 0].real
            for dt in [0.05, 0.025, 0.0125]]
    assert abs(_order(semi) - 4) < 0.5
    comp = [solve_comparison(s, 1.0, dt).at(1.0)[0, 0] for dt in [0.2, 0.1, 0.05]]
    assert abs(_order(comp) - 4) < 0.5


def test_comparison_examples():
    g = solve_comparison(build_scalar_quadratic_ode(1.5), 3.0, 1e-3)
    assert abs(g.blowup_time - math.log(3)) < 0.05 * math.log(3)
    assert np.all(np.isinf(g.values[g.times > g.blowup_time + 1e-3]))
    one = solve_comparison(build_scalar_quadratic_ode(1.0), 3.0, 1e-2)
    assert one.blowup_time is None and np.allclose(one.values, 1.0)
    zero = solve_comparison(build_scalar_quadratic_ode(0.0), 3.0, 1e-2)
    assert np.all(zero.values == 0)


def test_comparison_dominates_and_nonnegative(burgers_small):
    g = solve_mild_picard(burgers_small, 0.5, 1e-3)
    c = solve_comparison(burgers_small, 0.5, 1e-3)
    assert np.all(c.values >= 0)
    assert np.all(c.values[:, :, 0] >= np.abs(g.values[:, :, 0]) - 1e-12)


def test_logistic_reference():
    assert logistic_reference(1.0, 5.0) == 1.0
    assert logistic_reference(0.5, 1.0) == pytest.approx(0.268941, abs=1e-6)
    with pytest.raises(DomainError):
        logistic_reference(1.5, math.log(3))
    assert logistic_blowup_time(1.5) == pytest.approx(math.log(3))
    assert logistic_blowup_time(0.5) == math.inf
