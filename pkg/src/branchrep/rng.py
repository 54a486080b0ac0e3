"""Counter-based random streams keyed by tree labels.

Every node of every sampled tree owns a 64-bit key computed from
``(seed, sample index, label)``.  Its exponential clock and its event
uniform are pure functions of that key, so a tree can be realized in any
traversal order, or only partially, and still agree node for node with
any other realization of the same sample.  No generator state is shared
between samples, which is what makes parallel runs reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_CHILD = np.uint64(0xD1B54A32D192ED03)
_SALT_CLOCK = np.uint64(0x243F6A8885A308D3)
_SALT_EVENT = np.uint64(0x13198A2E03707344)
_SALT_STREAM = np.uint64(0xA4093822299F31D0)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(nogil=True, cache=True)
def mix64(z):
    """splitmix64 finalizer (a bijection of uint64)."""
    z = np.uint64(z)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(nogil=True, cache=True)
def root_key(seed, stream, sample):
    s = mix64(np.uint64(seed) ^ _SALT_STREAM)
    s = mix64(s + np.uint64(stream) * _GOLDEN)
    return mix64(s + np.uint64(sample) * _CHILD + _GOLDEN)


@nb.njit(nogil=True, cache=True)
def child_key(key, digit):
    return mix64(key + np.uint64(digit + 1) * _CHILD)


@nb.njit(nogil=True, cache=True)
def uniform(key, salt):
    """Uniform on [0, 1) with 53 random bits."""
    return float(mix64(key ^ salt) >> np.uint64(11)) * _INV53


@nb.njit(nogil=True, cache=True)
def clock(key):
    """Exponential(1) variable attached to a node."""
    return -np.log1p(-uniform(key, _SALT_CLOCK))


@nb.njit(nogil=True, cache=True)
def event_uniform(key):
    return uniform(key, _SALT_EVENT)


@dataclass(frozen=True)
class RandomSource:
    """A reproducible family of tree streams.

    ``stream`` separates statistically independent families drawn from the
    same seed; sample ``i`` of a family always gets the same root key.
    """

    seed: int
    stream: int = 0

    def key(self, sample: int) -> np.uint64:
        return np.uint64(root_key(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF), np.uint64(self.stream),
                                  np.uint64(sample)))
