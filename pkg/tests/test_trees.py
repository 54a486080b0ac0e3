from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from branchrep.models import build_scalar_quadratic_ode, build_single_mode
from branchrep.modes import DomainError
from branchrep.rng import RandomSource, child_key, clock, event_uniform
from branchrep.trees import (
    BEYOND, BRANCH, DEATH, FLIP, BudgetExceeded, RealizedNode, RealizedTree, Event, count_born,
    sample_event, simulate_tree, subtree,
)


def test_keys_reproducible_and_distinct():
    a, b = RandomSource(5, 0), RandomSource(5, 1)
    keys = {int(a.key(i)) for i in range(1000)} | {int(b.key(i)) for i in range(1000)}
    assert len(keys) == 2000
    assert a.key(17) == RandomSource(5, 0).key(17)
    k = a.key(3)
    assert len({int(child_key(k, j)) for j in range(3)}) == 3


def test_uniforms_look_uniform():
    src = RandomSource(11)
    u = np.array([event_uniform(src.key(i)) for i in range(20000)])
    e = np.array([clock(src.key(i)) for i in range(20000)])
    assert stats.kstest(u, "uniform").pvalue > 1e-3
    assert stats.kstest(e, "expon").pvalue > 1e-3


def test_sample_event_degenerate_cases():
    src = RandomSource(2)
    decay = build_single_mode()
    ode = build_scalar_quadratic_ode(0.5)
    for i in range(200):
        assert sample_event(decay, 0, src.key(i))[1].kind == DEATH
        ev = sample_event(ode, 0, src.key(i))[1]
        assert ev.kind == BRANCH and ev.l == ev.m == (0,)


def test_event_frequencies_chi_square(burgers_small):
    s = burgers_small
    src = RandomSource(9)
    for k in [(1,), (4,), (8,)]:
        i = s.position(k)
        a, b = s.pair_ptr[i], s.pair_ptr[i + 1]
        probs = np.concatenate([[s.p[i]], s.pair_q[a:b], [s.death[i]]])
        counts = np.zeros(len(probs))
        n = 100_000
        for j in range(n):
            _, ev = sample_event(s, i, src.key(j))
            counts[0 if ev.kind == FLIP else (ev.pair - a + 1 if ev.kind == BRANCH else len(probs) - 1)] += 1
        keep = probs > 0
        exp = probs[keep] * n
        se = np.sqrt(n * probs[keep] * (1 - probs[keep]))
        assert np.all(np.abs(counts[keep] - exp) < 4 * se + 1e-9)
        assert counts[~keep].sum() == 0


def test_horizon_zero_single_beyond_node():
    t = simulate_tree(build_scalar_quadratic_ode(0.5), (0,), 0.0, RandomSource(1))
    assert len(t) == 1 and t.root_node.event.kind == BEYOND


def test_single_clock_death_probability():
    s = build_single_mode(lam=2.0)
    src = RandomSource(4)
    n, horizon = 20000, 0.5
    dead = 0
    for i in range(n):
        tree = simulate_tree(s, (0,), horizon, src, i)
        assert len(tree) == 1
        dead += tree.root_node.event.kind == DEATH
    p = 1 - math.exp(-2.0 * horizon)
    assert abs(dead / n - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_yule_total_born_mean():
    s = build_scalar_quadratic_ode(0.5)
    src = RandomSource(8)
    counts = np.array([len(simulate_tree(s, (0,), 1.0, src, i)) for i in range(20000)])
    mean = 2 * math.e - 1
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - mean) < 4 * se


def test_tree_invariants_and_reproducibility(burgers_small):
    src = RandomSource(3)
    for i in range(200):
        tree = simulate_tree(burgers_small, (1,), 0.7, src, i)
        again = simulate_tree(burgers_small, (1,), 0.7, src, i)
        assert tree.dump() == again.dump()
        for label, node in tree.nodes.items():
            assert node.birth < node.death and node.birth < 0.7
            assert (node.event.kind == BEYOND) == (node.death >= 0.7)
            if label:
                parent = tree.nodes[label[:-1]]
                assert node.birth == parent.death
                assert parent.event.kind == (FLIP if label[-1] == 0 else BRANCH)


def test_budget_exceeded():
    with pytest.raises(BudgetExceeded) as info:
        simulate_tree(build_scalar_quadratic_ode(0.5), (0,), 5.0, RandomSource(1), 0, node_budget=5)
    assert info.value.count > 5


def _hand_tree():
    root = RealizedNode((), (0,), 0, 0.0, 0.3, Event(BRANCH, 0, (0,), (0,)), 0)
    a = RealizedNode((1,), (0,), 0, 0.3, 2.0, Event(BEYOND), 0)
    b = RealizedNode((2,), (0,), 0, 0.3, 1.5, Event(BEYOND), 0)
    return RealizedTree((0,), 1.0, {(): root, (1,): a, (2,): b})


def test_count_born_examples():
    tree = _hand_tree()
    assert count_born(tree, 0.0) == 1
    assert count_born(tree, 1.0) == 3
    with pytest.raises(DomainError):
        count_born(tree, 1.5)
    single = simulate_tree(build_single_mode(lam=50.0), (0,), 1.0, RandomSource(0))
    assert all(count_born(single, s) == 1 for s in (0.0, 0.5, 1.0))


def test_subtree_examples():
    tree = _hand_tree()
    sub = subtree(tree, 1)
    assert sub.horizon == pytest.approx(0.7) and sub.root_node.birth == 0.0
    with pytest.raises(DomainError):
        subtree(tree, 0)
    flip = build_single_mode(p=1.0)
    t = simulate_tree(flip, (0,), 100.0, RandomSource(1))
    assert t.root_node.event.kind == FLIP
    with pytest.raises(DomainError):
        subtree(t, 1)
