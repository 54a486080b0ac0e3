"""Monte Carlo expectations of tree evaluations and tests on the tree law."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernel
from .evaluate import EvaluationData, evaluate, evaluate_comparison, evaluate_pruned
from .models import AbstractSystem, validate
from .modes import DomainError
from .rng import RandomSource
from .solvers import SchemeFamily
from .trees import (
    BRANCH, DEFAULT_NODE_BUDGET, BudgetExceeded, count_born, sample_event,
    simulate_tree, subtree,
)

Z99 = float(stats.norm.ppf(0.995))
UNTRUSTED_FRACTION = 1e-3
THREADS_ENV = "BRANCHREP_THREADS"


class EstimationFailure(RuntimeError):
    pass


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class EstimateReport:
    mode: tuple
    t: float
    level: int  # -1 for the direct representation
    mean: np.ndarray
    std_error: np.ndarray  # per component: max of real and imaginary SE
    ci99: np.ndarray
    n_samples: int
    n_excluded: int
    max_abs: float
    stable: bool
    mean_nodes: float
    se_parts: np.ndarray = field(repr=False, default=None)  # (r, 2) SE of re, im
    samples: np.ndarray | None = field(repr=False, default=None)

    @property
    def se(self) -> float:
        return float(np.max(self.std_error)) if self.std_error.size else 0.0

    @property
    def trusted(self) -> bool:
        return self.n_excluded <= UNTRUSTED_FRACTION * self.n_samples

    def z_score(self, reference) -> float:
        """Largest ``|mean - reference| / SE`` over real and imaginary parts of
        every component, with the per-component SE (max of the two parts)."""
        ref = np.asarray(reference, dtype=np.complex128).reshape(self.mean.shape)
        diff = self.mean - ref
        dev = np.maximum(np.abs(diff.real), np.abs(diff.imag))
        z = 0.0
        for j in range(diff.size):
            if self.std_error[j] > 0:
                z = max(z, float(dev[j] / self.std_error[j]))
            elif dev[j] > 1e-14 * max(1.0, abs(ref[j])):
                z = math.inf
        return z


def run_samples(system: AbstractSystem, k, t: float, n_samples: int, seed: int, *,
                level: int = -1, symmetric: bool = False, comparison: bool = False,
                budget: int = DEFAULT_NODE_BUDGET, stream: int = 0, start: int = 0,
                threads: int | None = None, shared: bool = False, tables=None):
    """Per-sample values, node counts and status codes for samples ``start..``.

    Sample ``i`` always uses the same tree, so outputs do not depend on how
    the range is split across threads.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    pos = system.position(k)
    vals = np.zeros((n_samples, system.r), dtype=np.complex128)
    nodes = np.zeros(n_samples, dtype=np.int64)
    status = np.zeros(n_samples, dtype=np.int8)
    if not system.forcing.compilable:
        _python_samples(system, pos, t, seed, stream, start, level, symmetric, comparison,
                        budget, shared, vals, nodes, status)
        return vals, nodes, status
    tabs = system.sampler_tables() if tables is None else tables
    seed64 = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)

    def work(a, b):
        _kernel.sample_block(pos, float(t), seed64, np.uint64(stream), start + a, level,
                             symmetric, comparison, budget, shared, *tabs,
                             vals[a:b], nodes[a:b], status[a:b])

    threads = threads or default_threads()
    if threads <= 1 or n_samples < 2 * threads:
        work(0, n_samples)
    else:
        edges = np.linspace(0, n_samples, threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, edges[:-1], edges[1:]))
    return vals, nodes, status


def _python_samples(system, pos, t, seed, stream, start, level, symmetric, comparison,
                    budget, shared, vals, nodes, status):
    source = RandomSource(seed, stream)
    data = EvaluationData.from_system(system, comparison=comparison)
    k = system.modes[pos]
    for s in range(vals.shape[0]):
        try:
            tree = simulate_tree(system, k, t, source, start + s, budget, shared)
        except BudgetExceeded as exc:
            status[s], nodes[s] = _kernel.BUDGET, exc.count
            continue
        if comparison:
            vals[s, 0] = evaluate_comparison(tree, t, data)
            nodes[s] = len(tree)
        elif level >= 0:
            out = evaluate_pruned(tree, level, t, data, "symmetric" if symmetric else "asymmetric")
            vals[s], nodes[s] = out.value, out.nodes_visited
            status[s] = _kernel.PRUNED if out.pruned_at is not None else _kernel.OK
        else:
            out = evaluate(tree, t, data)
            vals[s], nodes[s] = out.value, out.nodes_visited


def running_mean_stable(x: np.ndarray, threshold: float = 5.0, decades: int = 3,
                        min_prefix: int = 100, min_informative: int = 10) -> bool:
    """Running-mean stability over the trailing decades of the sample sequence.

    For each of the last ``decades`` decades ``[n/10, n]``, ``[n/100, n/10]``, ...
    the running mean must stay within ``threshold`` standard errors of its
    value at the start of the decade, with the SE taken from that prefix.
    Prefixes shorter than ``min_prefix`` or with fewer than
    ``min_informative`` samples off the prefix median carry no usable SE
    and are skipped.  A spike that dominates the mean drags the late SE up
    with it, which is why the early SE is the yardstick.
    """
    n = x.shape[0]
    cols = np.concatenate([x.real, x.imag], axis=1) if np.iscomplexobj(x) else x
    for col in cols.T:
        run = np.cumsum(col) / np.arange(1, n + 1)
        hi = n
        for _ in range(decades):
            lo = hi // 10
            if lo < min_prefix:
                break
            pre = col[:lo]
            if np.count_nonzero(pre != np.median(pre)) >= min_informative:
                se = pre.std(ddof=1) / math.sqrt(lo)
                if np.max(np.abs(run[lo - 1:hi] - run[lo - 1])) > threshold * se:
                    return False
            hi = lo
    return True


def summarize(system, k, t, level, vals, nodes, status, keep_samples=False) -> EstimateReport:
    n = vals.shape[0]
    ok = status != _kernel.BUDGET
    n_eff = int(ok.sum())
    if n_eff == 0:
        raise EstimationFailure(f"all {n} samples exceeded the node budget")
    x = vals[ok]
    mean = x.mean(axis=0)
    if n_eff > 1:
        se_parts = np.stack([x.real.std(axis=0, ddof=1), x.imag.std(axis=0, ddof=1)], axis=1) / math.sqrt(n_eff)
    else:
        se_parts = np.full((system.r, 2), np.inf)
    se = se_parts.max(axis=1)
    return EstimateReport(
        mode=tuple(k), t=float(t), level=level, mean=mean, std_error=se, ci99=Z99 * se,
        n_samples=n, n_excluded=n - n_eff, max_abs=float(np.max(np.abs(x))) if x.size else 0.0,
        stable=running_mean_stable(x), mean_nodes=float(nodes.mean()), se_parts=se_parts,
        samples=vals if keep_samples else None)


def estimate_mode(system, k, t, n_samples, seed, budget=DEFAULT_NODE_BUDGET, threads=None,
                  keep_samples=False) -> EstimateReport:
    """Sample mean of the direct evaluation at mode ``k`` and time ``t``."""
    if n_samples < 2:
        raise DomainError("need at least two samples")
    out = run_samples(system, k, t, n_samples, seed, budget=budget, threads=threads)
    return summarize(system, k, t, -1, *out, keep_samples=keep_samples)


def estimate_pruned(system, k, t, n, n_samples, seed, budget=DEFAULT_NODE_BUDGET,
                    threads=None, pruning="asymmetric", keep_samples=False) -> EstimateReport:
    """Sample mean of the level-``n`` pruned evaluation."""
    if n_samples < 2:
        raise DomainError("need at least two samples")
    if n < 0:
        raise DomainError("prune level must be nonnegative")
    out = run_samples(system, k, t, n_samples, seed, level=int(n),
                      symmetric=pruning == "symmetric", budget=budget, threads=threads)
    return summarize(system, k, t, int(n), *out, keep_samples=keep_samples)


def estimate_comparison(system, k, t, n_samples, seed, budget=DEFAULT_NODE_BUDGET,
                        threads=None, keep_samples=False) -> EstimateReport:
    """Sample mean of the comparison evaluation (nonnegative, heavy tails flagged)."""
    if n_samples < 2:
        raise DomainError("need at least two samples")
    out = run_samples(system, k, t, n_samples, seed, comparison=True, budget=budget,
                      threads=threads)
    return summarize(system, k, t, -1, *out, keep_samples=keep_samples)


@dataclass
class PruneStudy:
    rows: list = field(default_factory=list)  # (n, EstimateReport, deterministic value or None)

    def table(self) -> str:
        lines = [f"{'n':>4} {'MC mean':>24} {'SE':>10} {'det':>24} {'z':>7}"]
        for n, rep, det in self.rows:
            m = rep.mean[0]
            if det is None:
                lines.append(f"{n:>4} {m:>24.10g} {rep.se:>10.3e}")
            else:
                d = np.asarray(det).reshape(-1)[0]
                lines.append(f"{n:>4} {m:>24.10g} {rep.se:>10.3e} {d:>24.10g} {rep.z_score(det):>7.2f}")
        return "\n".join(lines)


def pruning_study(system, k, t, n_list, n_samples, seed, scheme: SchemeFamily | None = None,
                  budget=DEFAULT_NODE_BUDGET, threads=None) -> PruneStudy:
    """Pruned estimates per level, paired with scheme values when given."""
    n_list = list(n_list)
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise DomainError("n_list must be nonempty and strictly increasing")
    study = PruneStudy()
    pos = system.position(k)
    for n in n_list:
        rep = estimate_pruned(system, k, t, n, n_samples, seed, budget, threads)
        det = None
        if scheme is not None and n < len(scheme.levels):
            det = scheme.levels[n].at(t)[pos]
        study.rows.append((n, rep, det))
    return study


# ---------------------------------------------------------------------------
# tests on the tree law

def _bins(counts: np.ndarray, min_count: int = 10) -> np.ndarray:
    """Upper bin edges over pooled counts so that every bin holds ``min_count``."""
    values, freq = np.unique(counts, return_counts=True)
    edges, acc = [], 0
    for v, f in zip(values, freq):
        acc += f
        if acc >= min_count:
            edges.append(v)
            acc = 0
    if not edges:
        return np.array([values[-1]])
    if acc:
        edges[-1] = values[-1]
    return np.array(edges)


def _chi2_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    edges = _bins(np.concatenate([a, b]), 20)
    if len(edges) < 2:
        return 1.0
    table = np.stack([np.bincount(np.searchsorted(edges, x), minlength=len(edges)) for x in (a, b)])
    return float(stats.chi2_contingency(table, correction=False)[1])


def _chi2_independence(a: np.ndarray, b: np.ndarray, max_bins: int = 6) -> float:
    edges = _bins(np.concatenate([a, b]), max(20, len(a) // max_bins))
    if len(edges) < 2:
        return 1.0
    ia, ib = np.searchsorted(edges, a), np.searchsorted(edges, b)
    table = np.zeros((len(edges), len(edges)))
    np.add.at(table, (ia, ib), 1)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if min(table.shape) < 2:
        return 1.0
    return float(stats.chi2_contingency(table, correction=False)[1])


@dataclass
class BranchingTestResult:
    p_value: float
    p_same_law: float
    p_independent: float
    n_conditioned: int
    pair: tuple | None
    inconclusive: bool = False


def branching_property_test(system, k, horizon, n_samples, seed, window=None,
                            shared_stream=False, max_roots=None) -> BranchingTestResult:
    """Chi-square checks of the one-step branching property at mode ``k``.

    Roots are sampled until ``n_samples`` of them branch, before
    ``horizon - window``, into the most likely pair ``(l, m)``.  Births in
    the first ``window`` time units of subtree 1 are compared with fresh
    trees rooted at ``l`` (same law), and against subtree 2 (independence).
    Counting over a fixed window removes the dependence on the branch time.
    """
    pos = system.position(k)
    a, b = system.pair_ptr[pos], system.pair_ptr[pos + 1]
    if b == a:
        return BranchingTestResult(math.nan, math.nan, math.nan, 0, None, True)
    pair = int(a + np.argmax(system.pair_q[a:b]))
    l, m = system.modes[system.pair_l[pair]], system.modes[system.pair_m[pair]]
    window = horizon / 2 if window is None else window
    if not 0 < window <= horizon:
        raise DomainError("window must lie in (0, horizon]")
    roots = RandomSource(seed, 0)
    fresh = RandomSource(seed, 1)
    max_roots = max_roots or 1000 * n_samples
    sub1, sub2, ref = [], [], []
    i = 0
    while len(sub1) < n_samples and i < max_roots:
        key = roots.key(i)
        i += 1
        hold, event = sample_event(system, pos, key)
        if event.kind != BRANCH or event.pair != pair or hold > horizon - window:
            continue
        tree = simulate_tree(system, k, horizon, key, shared_stream=shared_stream)
        sub1.append(count_born(subtree(tree, 1), window))
        sub2.append(count_born(subtree(tree, 2), window))
        ref.append(count_born(simulate_tree(system, l, window, fresh, len(ref)), window))
    if len(sub1) < max(50, n_samples // 10):
        return BranchingTestResult(math.nan, math.nan, math.nan, len(sub1), (l, m), True)
    sub1, sub2, ref = map(np.asarray, (sub1, sub2, ref))
    p_same = _chi2_two_sample(sub1, ref)
    p_ind = _chi2_independence(sub1, sub2)
    return BranchingTestResult(min(p_same, p_ind), p_same, p_ind, len(sub1), (l, m))


@dataclass
class ExtinctionResult:
    horizons: list
    fractions: np.ndarray
    std_errors: np.ndarray
    n_samples: int
    n_budget_exceeded: int


def extinction_test(system, horizons, n_samples, seed, k=None, budget=DEFAULT_NODE_BUDGET,
                    threads=None) -> ExtinctionResult:
    """Fraction of trees rooted at ``k`` (default: the first mode) whose every branch dies before each horizon.

    Extinction is read off the comparison evaluation with zero initial
    data, unit forcing and unit constants: that value is 1 exactly when no
    particle survives to the horizon and 0 otherwise.
    """
    diag = validate(system, probes=10)
    if not diag.simple_criterion:
        raise DomainError("extinction test needs q_k <= d_k and p_k < 1 on every mode")
    k = system.modes[0] if k is None else k
    tabs = list(system.sampler_tables())
    tabs[8] = np.zeros_like(system.chi0)
    tabs[9] = np.ones_like(system.chi0)
    tabs[10], tabs[11], tabs[12], tabs[13] = 0, 0.0, 1.0, 1.0
    fractions, errors, exceeded = [], [], 0
    for h in horizons:
        if h == 0:
            fractions.append(0.0)
            errors.append(0.0)
            continue
        vals, _, status = run_samples(system, k, h, n_samples, seed, comparison=True,
                                      budget=budget, threads=threads, tables=tuple(tabs))
        exceeded += int((status == _kernel.BUDGET).sum())
        frac = float(vals[:, 0].real.mean())
        fractions.append(frac)
        errors.append(math.sqrt(max(frac * (1 - frac), 0.0) / n_samples))
    return ExtinctionResult(list(horizons), np.asarray(fractions), np.asarray(errors),
                            n_samples, exceeded)
