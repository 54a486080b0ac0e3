"""Evaluation functionals along a realized tree.

All evaluators walk the tree with an explicit stack, so deep trees do not
hit the interpreter recursion limit.  Times are absolute within the tree:
a node dying at ``s < t`` contributes ``gamma(t - s)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import AbstractSystem
from .modes import DomainError
from .trees import BEYOND, BRANCH, DEATH, FLIP, RealizedTree

ASYMMETRIC, SYMMETRIC = "asymmetric", "symmetric"


@dataclass(frozen=True)
class EvaluationData:
    chi0: np.ndarray
    gamma: Callable[[int, float], np.ndarray]
    C_f: float
    C_b: float
    bilinear: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    comparison: bool = False
    plain_product: bool = False

    @classmethod
    def from_system(cls, system: AbstractSystem, comparison: bool = False) -> "EvaluationData":
        plain = (system.r == 1 and bool(np.all(system.pair_coef == 1))
                 and bool(np.all(system.pair_vec == 1)))
        if comparison:
            chi0 = np.linalg.norm(system.chi0, axis=1).reshape(-1, 1)
            return cls(chi0, lambda i, s: np.array([np.linalg.norm(system.gamma(i, s))]),
                       system.C_f, system.C_b, lambda pi, x, y: x * y, True, True)
        return cls(system.chi0, system.gamma, system.C_f, system.C_b, system.bilinear,
                   False, plain)


@dataclass(frozen=True)
class EvalOutcome:
    value: np.ndarray
    nodes_visited: int
    pruned_at: int | None = None


def _walk(tree: RealizedTree, t: float, data: EvaluationData, level: int | None,
          pruning: str = ASYMMETRIC) -> EvalOutcome:
    if t > tree.horizon:
        raise DomainError(f"evaluation time {t} exceeds the tree horizon {tree.horizon}")
    dtype = float if data.comparison else complex
    # frame: [label, level, stage, first child value]
    stack = [[(), level, 0, None]]
    ret = None
    visited = 0
    nodes = tree.nodes
    while stack:
        frame = stack[-1]
        label, lev, stage, _ = frame
        node = nodes[label]
        if stage == 0:
            visited += 1
            if node.death >= t:
                ret = np.asarray(data.chi0[node.pos], dtype=dtype)
                stack.pop()
                continue
            if lev is not None and lev == 0:
                r = data.chi0.shape[1]
                return EvalOutcome(np.zeros(r, dtype=dtype), visited, len(label))
            kind = node.event.kind
            if kind == DEATH:
                ret = np.asarray(data.gamma(node.pos, t - node.death), dtype=dtype)
                stack.pop()
            elif kind == FLIP:
                frame[2] = 3
                stack.append([label + (0,), lev, 0, None])
            elif kind == BRANCH:
                frame[2] = 1
                child_lev = None if lev is None else (lev - 1 if pruning == SYMMETRIC else lev)
                stack.append([label + (1,), child_lev, 0, None])
            else:
                raise DomainError(f"node {label} has event {kind} before t")
        elif stage == 1:
            frame[2], frame[3] = 2, ret
            stack.append([label + (2,), None if lev is None else lev - 1, 0, None])
        elif stage == 2:
            ret = data.C_b * data.bilinear(node.event.pair, frame[3], ret)
            stack.pop()
        else:
            ret = data.C_f * ret
            stack.pop()
    return EvalOutcome(ret, visited)


def evaluate(tree: RealizedTree, t: float, data: EvaluationData) -> EvalOutcome:
    """Direct evaluation of the tree at time ``t``."""
    return _walk(tree, t, data, None)


def evaluate_comparison(tree: RealizedTree, t: float, data: EvaluationData) -> float:
    """Evaluation with ``|chi(0)|``, ``|gamma|`` and the plain product; always >= 0."""
    if not data.comparison:
        raise DomainError("comparison evaluation needs comparison data")
    return float(_walk(tree, t, data, None).value[0])


def evaluate_pruned(tree: RealizedTree, n: int, t: float, data: EvaluationData,
                    pruning: str = ASYMMETRIC) -> EvalOutcome:
    """Level-``n`` pruned evaluation.

    Asymmetric pruning hands level ``n`` to child 1 and ``n - 1`` to child 2;
    symmetric pruning hands ``n - 1`` to both.  A level-0 node with an event
    before ``t`` is worth zero, which zeroes the whole tree.
    """
    if n < 0:
        raise DomainError("prune level must be nonnegative")
    if pruning not in (ASYMMETRIC, SYMMETRIC):
        raise DomainError(f"unknown pruning {pruning!r}")
    return _walk(tree, t, data, int(n), pruning)


def evaluate_closed_form(tree: RealizedTree, t: float, data: EvaluationData):
    """Product form ``C_b^B C_f^F prod gamma(t - death) prod chi(0)`` for scalar products."""
    if not data.plain_product:
        raise DomainError("closed form needs r = 1 and plain-product bilinear maps")
    if t > tree.horizon:
        raise DomainError(f"evaluation time {t} exceeds the tree horizon {tree.horizon}")
    value = 1.0 + 0j if not data.comparison else 1.0
    n_branch = n_flip = 0
    for node in tree.nodes.values():
        if node.birth >= t:
            continue
        if node.death >= t:
            value *= data.chi0[node.pos][0]
        elif node.event.kind == DEATH:
            value *= data.gamma(node.pos, t - node.death)[0]
        elif node.event.kind == FLIP:
            n_flip += 1
        elif node.event.kind == BRANCH:
            n_branch += 1
        elif node.event.kind == BEYOND:
            raise DomainError("beyond-horizon node dies before t")
    return data.C_b ** n_branch * data.C_f ** n_flip * value
