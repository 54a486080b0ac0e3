"""Lattice modes, weights and convolution pair enumeration on a truncated box."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

ModeIndex = tuple[int, ...]


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def norm(k: ModeIndex) -> float:
    return math.sqrt(sum(c * c for c in k))


def sup_norm(k: ModeIndex) -> int:
    return max((abs(c) for c in k), default=0)


def is_zero(k: ModeIndex) -> bool:
    return all(c == 0 for c in k)


def add(a: ModeIndex, b: ModeIndex) -> ModeIndex:
    return tuple(x + y for x, y in zip(a, b))


def sub(a: ModeIndex, b: ModeIndex) -> ModeIndex:
    return tuple(x - y for x, y in zip(a, b))


def neg(k: ModeIndex) -> ModeIndex:
    return tuple(-c for c in k)


@dataclass(frozen=True)
class WeightFunction:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"weight exponent must be positive, got {self.alpha}")

    def __call__(self, k: ModeIndex) -> float:
        return weight(k, self)


def weight(k: ModeIndex, w: WeightFunction) -> float:
    """``max(1, |k|**alpha)``."""
    return max(1.0, norm(k) ** w.alpha)


@dataclass(frozen=True)
class TruncationBox:
    """All lattice points of ``Z^d`` with sup-norm at most ``k_max``.

    Modes are stored in lexicographic order; ``index`` maps a mode to its
    position in that order.
    """

    d: int
    k_max: int
    exclude_zero: bool = True
    modes: tuple[ModeIndex, ...] = field(init=False, repr=False, compare=False)
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise DomainError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.k_max < 1:
            raise DomainError(f"k_max must be a positive integer, got {self.k_max}")
        rng = range(-self.k_max, self.k_max + 1)
        modes = tuple(
            k for k in itertools.product(rng, repeat=self.d)
            if not (self.exclude_zero and is_zero(k))
        )
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "index", {k: i for i, k in enumerate(modes)})

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self) -> Iterator[ModeIndex]:
        return iter(self.modes)

    def __contains__(self, k) -> bool:
        return tuple(k) in self.index

    def expected_count(self) -> int:
        return (2 * self.k_max + 1) ** self.d - (1 if self.exclude_zero else 0)


def enumerate_pairs(k: ModeIndex, box: TruncationBox) -> list[tuple[ModeIndex, ModeIndex]]:
    """Ordered pairs ``(l, m)`` with ``l + m = k`` and both inside ``box``.

    Pairs come in lexicographic order of ``l``.
    """
    k = tuple(k)
    if len(k) != box.d:
        raise DomainError(f"mode {k} does not have dimension {box.d}")
    if sup_norm(k) > box.k_max:
        raise DomainError(f"mode {k} lies outside the truncation box")
    pairs = []
    for l in box.modes:
        m = sub(k, l)
        if m in box.index:
            pairs.append((l, m))
    return pairs


def _bound_shape(k_norm: float, alpha: float, gamma: float, d: int) -> float:
    beta = min(alpha, gamma, alpha + gamma - d)
    shape = (1.0 + k_norm) ** (-beta)
    if alpha == d or gamma == d:
        shape *= math.log(1.0 + k_norm)
    return shape


def convolution_sum(alpha: float, gamma: float, k: ModeIndex, k_max: int) -> float:
    """``sum |m|^-alpha |l|^-gamma`` over ``l + m = k``, ``l, m != 0``, sup-norms <= k_max."""
    d = len(k)
    axis = np.arange(-k_max, k_max + 1, dtype=np.float64)
    grids = np.meshgrid(*([axis] * d), indexing="ij", sparse=True)
    l2 = sum(g * g for g in grids)
    m2 = sum((kc - g) ** 2 for kc, g in zip(k, grids))
    inside = np.ones(np.broadcast_shapes(*(g.shape for g in grids)), dtype=bool)
    for kc, g in zip(k, grids):
        inside &= np.abs(kc - g) <= k_max
    ok = inside & (l2 > 0) & (m2 > 0)
    with np.errstate(divide="ignore"):
        terms = np.where(ok, m2 ** (-alpha / 2) * l2 ** (-gamma / 2), 0.0)
    return float(terms.sum())


def convolution_bound_check(
    alpha: float, gamma: float, k: ModeIndex, k_max: int
) -> tuple[float, float, float]:
    """Partial convolution sum against the majorizing shape ``(1+|k|)^-beta``.

    Returns ``(sum, bound_shape, ratio)``; the log factor enters the shape
    when either exponent equals the dimension.
    """
    k = tuple(k)
    d = len(k)
    if not (alpha > 0 and gamma > 0):
        raise DomainError("alpha and gamma must be positive")
    if not alpha + gamma > d:
        raise DomainError(f"need alpha + gamma > d, got {alpha} + {gamma} <= {d}")
    if is_zero(k):
        raise DomainError("the bound is stated for k != 0")
    if sup_norm(k) > k_max:
        raise DomainError(f"mode {k} lies outside the box of radius {k_max}")
    total = convolution_sum(alpha, gamma, k, k_max)
    shape = _bound_shape(norm(k), alpha, gamma, d)
    return total, shape, total / shape


def bound_sweep(
    alpha: float, gamma: float, d: int, k_max: int, k_norms=range(1, 51)
) -> list[tuple[ModeIndex, float, float, float]]:
    """Ratio table along the first lattice axis, ``k = (j, 0, ..)``."""
    rows = []
    for j in k_norms:
        k = (j,) + (0,) * (d - 1)
        rows.append((k, *convolution_bound_check(alpha, gamma, k, k_max)))
    return rows
