from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest

from branchrep.cli import main
from branchrep.config import build_system, load_config
from branchrep.estimate import (
    branching_property_test, estimate_comparison, estimate_mode, estimate_pruned,
    extinction_test, run_samples,
)
from branchrep.models import (
    AbstractSystem, build_scalar_quadratic_ode, build_single_mode, hermitian_residual, validate,
)
from branchrep.modes import bound_sweep
from branchrep.solvers import solve_comparison, solve_mild_picard, solve_semi_implicit

ROOT = Path(__file__).resolve().parents[1]
BURGERS_CFG = ROOT / "configs" / "burgers_small.yaml"
Z = 4.0


@pytest.fixture
def verdict(record_property):
    def record(n, ok, detail):
        record_property("criterion", f"criterion {n}")
        record_property("detail", detail)
        print(f"{'PASS' if ok else 'FAIL'}  criterion {n}: {detail}")
        assert ok, detail
    return record


@pytest.fixture(scope="module")
def burgers():
    return build_system(load_config(BURGERS_CFG))


def test_linear_decay_exactness(verdict):
    start = time.perf_counter()
    chi0 = np.array([1.0, 0.5 - 0.25j, -2.0])
    system = AbstractSystem("decay", [(1,), (2,), (3,)], 1, [1.0, 4.0, 9.0], [0.0] * 3,
                            [[], [], []], 1.0, 1.0, chi0, None)
    worst = 0.0
    for t in (0.25, 1.0):
        for i, k in enumerate(system.modes):
            rep = estimate_mode(system, k, t, 10**5, seed=101)
            exact = np.exp(-system.lam[i] * t) * chi0[i]
            worst = max(worst, rep.z_score([exact]))
    elapsed = time.perf_counter() - start
    verdict(1, worst < Z and elapsed < 5, f"max |z| = {worst:.2f}, {elapsed:.1f} s")


def test_scalar_ode_representation(verdict):
    start = time.perf_counter()
    rep = estimate_mode(build_scalar_quadratic_ode(0.5), (0,), 1.0, 10**5, seed=202)
    z = rep.z_score([0.268941])
    elapsed = time.perf_counter() - start
    verdict(2, z < Z and elapsed < 10,
            f"mean {rep.mean[0].real:.5f} vs 0.268941, |z| = {z:.2f}, {elapsed:.1f} s")


def test_non_integrability_witness(verdict):
    system = build_scalar_quadratic_ode(1.5)
    comp = solve_comparison(system, 2.0, 1e-3)
    rel = abs(comp.blowup_time - math.log(3)) / math.log(3)
    rep = estimate_comparison(system, (0,), 2.0, 10**5, seed=7)
    flagged = (not rep.stable) or rep.n_excluded > 0
    verdict(3, rel < 0.05 and flagged,
            f"blow-up {comp.blowup_time:.4f} (rel err {rel:.2%}), stable={rep.stable}, "
            f"excluded={rep.n_excluded}")


def test_pruned_convergence_ode(verdict):
    start = time.perf_counter()
    system = build_scalar_quadratic_ode(-2.0)
    exact = -2.0 / (3.0 * math.e - 2.0)
    fam = solve_semi_implicit(system, 20, 1.0, 1e-3)
    vals = [lv.at(1.0)[0, 0].real for lv in fam.levels]
    errs = [abs(v - exact) for v in vals]
    monotone = all(b < a for a, b in zip(errs, errs[1:]) if a > 1e-9)
    zs = {n: estimate_pruned(system, (0,), 1.0, n, 10**5, seed=3).z_score([vals[n]])
          for n in (0, 2, 5, 10, 20)}
    elapsed = time.perf_counter() - start
    ok = monotone and errs[20] < 1e-4 and max(zs.values()) < Z and elapsed < 30
    verdict(4, ok, f"|u_20 - exact| = {errs[20]:.2e}, monotone={monotone}, "
                   f"max |z| = {max(zs.values()):.2f}, {elapsed:.1f} s")


def test_burgers_mc_vs_oracle(verdict, burgers):
    start = time.perf_counter()
    picard = solve_mild_picard(burgers, 0.5, 1e-3, tol=1e-10)
    herm = max(hermitian_residual(v, burgers.modes) for v in picard.values)
    ref = picard.at(0.5)
    zs = [estimate_mode(burgers, k, 0.5, 10**5, seed=20240601).z_score(ref[i])
          for i, k in enumerate(burgers.modes)]
    elapsed = time.perf_counter() - start
    ok = picard.converged and max(zs) < Z and herm < 1e-10 and elapsed < 60
    verdict(5, ok, f"picard converged={picard.converged}, max |z| = {max(zs):.2f} over "
                   f"{len(zs)} modes, hermitian residual {herm:.1e}, {elapsed:.1f} s")


def test_semi_implicit_burgers_convergence(verdict, burgers):
    start = time.perf_counter()
    dt = 1e-3
    picard = solve_mild_picard(burgers, 0.5, dt, tol=1e-12).at(0.5)
    finer = solve_mild_picard(burgers, 0.5, dt / 2, tol=1e-12).at(0.5)
    floor = 4.0 / 3.0 * np.max(np.abs(picard - finer))
    fam = solve_semi_implicit(burgers, 15, 0.5, dt)
    gaps = [float(np.max(np.abs(lv.at(0.5) - picard))) for lv in fam.levels]
    steps = list(zip(gaps[1:15], gaps[2:16]))
    ok_steps = all(b < a if a > 2 * floor else b <= a + floor for a, b in steps)
    elapsed = time.perf_counter() - start
    ok = ok_steps and gaps[15] < 1e-6 and elapsed < 30
    verdict(6, ok, f"gaps n=1..15 {gaps[1]:.1e} .. {gaps[15]:.1e}, picard error {floor:.1e}, "
                   f"decreasing above it={ok_steps}, {elapsed:.1f} s")


def test_comparison_dominance(verdict, burgers):
    picard = solve_mild_picard(burgers, 0.5, 1e-3, tol=1e-10)
    comp = solve_comparison(burgers, 0.5, 1e-3)
    grid_gap = float(np.min(comp.values[:, :, 0] - np.abs(picard.values).max(axis=2)))
    violations = 0
    for k in burgers.modes:
        direct = run_samples(burgers, k, 0.5, 10**4, seed=77)
        bound = run_samples(burgers, k, 0.5, 10**4, seed=77, comparison=True)
        assert np.array_equal(direct[1], bound[1])
        violations += int(np.sum(bound[0][:, 0].real < np.abs(direct[0][:, 0]) - 1e-12))
    ok = grid_gap >= -1e-12 and violations == 0
    verdict(7, ok, f"min grid margin {grid_gap:.1e}, per-sample violations {violations} "
                   f"over {10**4 * len(burgers.modes)} trees")


def test_branching_property(verdict, burgers):
    cases = [(build_scalar_quadratic_ode(0.5), (0,)), (burgers, (1,))]
    good = [branching_property_test(s, k, 1.0, 10**4, seed=5) for s, k in cases]
    bad = [branching_property_test(s, k, 1.0, 10**4, seed=5, shared_stream=True) for s, k in cases]
    ok = all(r.p_value > 1e-3 and r.n_conditioned == 10**4 for r in good) and \
        all(r.p_value < 1e-3 for r in bad)
    verdict(8, ok, "p = " + ", ".join(f"{r.p_value:.3g}" for r in good)
            + "; shared stream p = " + ", ".join(f"{r.p_value:.3g}" for r in bad))


def test_extinction(verdict):
    system = build_single_mode(q=0.2)
    assert validate(system).simple_criterion
    res = extinction_test(system, [1, 2, 4], 10**4, seed=9, budget=10**6)
    mono = bool(np.all(np.diff(res.fractions) >= 0))
    ok = mono and res.n_budget_exceeded == 0
    verdict(9, ok, "fractions " + ", ".join(f"{f:.3f}" for f in res.fractions)
            + f", budget exceeded {res.n_budget_exceeded}")


def test_convolution_lemma_sweep(verdict):
    start = time.perf_counter()
    parts, ok = [], True
    for d in (1, 2):
        rows = bound_sweep(2.0, 2.0, d, 400, range(1, 51))
        const = max(r[3] for r in rows)
        doubled = max(r[3] for r in bound_sweep(2.0, 2.0, d, 800, range(1, 51)))
        drift = abs(doubled - const) / const
        ok &= math.isfinite(const) and drift < 0.02
        parts.append(f"d={d}: C={const:.4f} (doubling drift {drift:.1e})")
    elapsed = time.perf_counter() - start
    verdict(10, ok and elapsed < 20, "; ".join(parts) + f", {elapsed:.1f} s")


def test_reproducibility(verdict, tmp_path):
    bodies = {}
    for threads in (1, 8):
        out = tmp_path / f"t{threads}"
        code = main(["compare", "--config", str(BURGERS_CFG), "--threads", str(threads),
                     "--out", str(out)])
        assert code == 0
        bodies[threads] = {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}
    same = bool(bodies[1]) and bodies[1] == bodies[8]
    verdict(11, same, f"{len(bodies[1])} CSV file(s) byte-identical at threads 1 and 8: {same}")
