"""Realized branching trees rooted at a mode.

Only the surviving part of the labelled family is generated: a node that
dies has no children, a flip has child ``0`` and a branch has children
``1`` and ``2``.  Nodes whose clock rings at or after the horizon are kept
as ``beyond`` leaves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .models import AbstractSystem
from .modes import DomainError, ModeIndex
from .rng import RandomSource, child_key, clock, event_uniform

DEATH, FLIP, BRANCH, BEYOND = "death", "flip", "branch", "beyond"
DEFAULT_NODE_BUDGET = 1_000_000

Label = tuple[int, ...]


class BudgetExceeded(RuntimeError):
    """A tree grew past its node budget before reaching the horizon."""

    def __init__(self, count: int, budget: int):
        super().__init__(f"tree exceeded node budget {budget} ({count} nodes realized)")
        self.count = count
        self.budget = budget


@dataclass(frozen=True)
class Event:
    kind: str
    pair: int = -1
    l: ModeIndex | None = None
    m: ModeIndex | None = None


@dataclass(frozen=True)
class RealizedNode:
    label: Label
    mode: ModeIndex
    pos: int
    birth: float
    death: float
    event: Event
    key: int = field(repr=False)


@dataclass
class RealizedTree:
    root: ModeIndex
    horizon: float
    nodes: dict[Label, RealizedNode]

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[RealizedNode]:
        return iter(self.nodes.values())

    @property
    def root_node(self) -> RealizedNode:
        return self.nodes[()]

    def children(self, label: Label) -> list[RealizedNode]:
        return [self.nodes[label + (i,)] for i in range(3) if label + (i,) in self.nodes]

    def extinct(self) -> bool:
        """True when every branch died before the horizon."""
        return all(n.event.kind != BEYOND for n in self.nodes.values())

    def dump(self) -> str:
        """One line per node: label digits, mode coords, birth, death, event tag."""
        lines = []
        for label in sorted(self.nodes, key=lambda a: (len(a), a)):
            n = self.nodes[label]
            tag = n.event.kind
            if tag == BRANCH:
                tag = f"branch {' '.join(map(str, n.event.l))} | {' '.join(map(str, n.event.m))}"
            digits = "".join(map(str, label)) or "-"
            lines.append(f"{digits} {' '.join(map(str, n.mode))} {n.birth!r} {n.death!r} {tag}")
        return "\n".join(lines)


def sample_event(system: AbstractSystem, pos: int, key) -> tuple[float, Event]:
    """Holding time and event of the node owning ``key`` at mode position ``pos``."""
    key = np.uint64(key)
    hold = clock(key) / system.lam[pos]
    u = event_uniform(key)
    if u < system.p[pos]:
        return hold, Event(FLIP)
    a, b = system.pair_ptr[pos], system.pair_ptr[pos + 1]
    j = int(np.searchsorted(system.cum[a:b], u, side="right"))
    if j < b - a:
        pi = a + j
        return hold, Event(BRANCH, pi, system.modes[system.pair_l[pi]], system.modes[system.pair_m[pi]])
    return hold, Event(DEATH)


def simulate_tree(system: AbstractSystem, k, horizon: float, source: RandomSource | int,
                  sample: int = 0, node_budget: int = DEFAULT_NODE_BUDGET,
                  shared_stream: bool = False) -> RealizedTree:
    """Realize the tree rooted at mode ``k`` up to ``horizon``.

    ``source`` is a :class:`RandomSource` (the tree is its sample ``sample``)
    or an explicit root key.  With ``shared_stream`` both branch children
    reuse the randomness of child 1; this breaks the independence of
    sibling subtrees and exists only to check that tests can detect it.
    """
    if horizon < 0:
        raise DomainError("horizon must be nonnegative")
    if node_budget < 1:
        raise DomainError("node budget must be at least 1")
    pos = system.position(k)
    key = np.uint64(source.key(sample) if isinstance(source, RandomSource) else source)
    nodes: dict[Label, RealizedNode] = {}
    stack = [((), pos, 0.0, key)]
    while stack:
        label, i, birth, nkey = stack.pop()
        if len(nodes) >= node_budget:
            raise BudgetExceeded(len(nodes) + 1, node_budget)
        hold, event = sample_event(system, i, nkey)
        death = birth + hold
        if death >= horizon:
            event = Event(BEYOND)
        nodes[label] = RealizedNode(label, system.modes[i], i, birth, death, event, int(nkey))
        if event.kind == FLIP:
            stack.append((label + (0,), i, death, np.uint64(child_key(nkey, 0))))
        elif event.kind == BRANCH:
            k2 = np.uint64(child_key(nkey, 1 if shared_stream else 2))
            # child 1 is popped first
            stack.append((label + (2,), int(system.pair_m[event.pair]), death, k2))
            stack.append((label + (1,), int(system.pair_l[event.pair]), death, np.uint64(child_key(nkey, 1))))
    return RealizedTree(system.modes[pos], float(horizon), nodes)


def count_born(tree: RealizedTree, s: float) -> int:
    """Number of nodes born at or before ``s``."""
    if s > tree.horizon:
        raise DomainError(f"s={s} exceeds the tree horizon {tree.horizon}")
    return sum(1 for n in tree.nodes.values() if n.birth <= s)


def subtree(tree: RealizedTree, i: int) -> RealizedTree:
    """Descendants of root child ``i``, shifted so that child ``i`` is born at 0."""
    root = tree.root_node
    kind = root.event.kind
    if not ((i == 0 and kind == FLIP) or (i in (1, 2) and kind == BRANCH)):
        raise DomainError(f"root event is {kind}; it has no child {i}")
    s = root.death
    nodes = {}
    for label, n in tree.nodes.items():
        if label and label[0] == i:
            new = label[1:]
            nodes[new] = RealizedNode(new, n.mode, n.pos, n.birth - s, n.death - s, n.event, n.key)
    child = nodes[()]
    return RealizedTree(child.mode, tree.horizon - s, nodes)
