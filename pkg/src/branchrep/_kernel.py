"""Compiled sample-and-evaluate loop.

Trees are never materialized here: each sample is realized depth first
and folded into its value on the way back up.  Draws use the same node
keys as :mod:`branchrep.trees`, so a sample evaluated here matches the
evaluation of the corresponding :class:`RealizedTree`.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .rng import child_key, clock, event_uniform, root_key

OK, BUDGET, PRUNED = 0, 1, 2


@nb.njit(nogil=True, cache=True)
def _phi(kind, rate, s):
    if kind == 0:
        return 1.0
    if kind == 1:
        return np.exp(-rate * s)
    return np.cos(rate * s)


@nb.njit(nogil=True, cache=True)
def _grow(arr, cap):
    new = np.empty((cap,) + arr.shape[1:], dtype=arr.dtype)
    new[: arr.shape[0]] = arr
    return new


@nb.njit(nogil=True, cache=True)
def _one_sample(root_pos, t, key, level, symmetric, comparison, budget, shared,
                lam, p, ptr, cum, pl, pm, coef, vec, chi0, gamp, gkind, grate, C_f, C_b,
                out, stacks):
    r = chi0.shape[1]
    st_key, st_pos, st_birth, st_level, st_stage, st_pair, st_death, st_v1 = stacks
    cap = st_key.shape[0]
    ret = np.zeros(r, dtype=np.complex128)
    sp = 0
    st_key[0] = key
    st_pos[0] = root_pos
    st_birth[0] = 0.0
    st_level[0] = level
    st_stage[0] = 0
    sp = 1
    nodes = 0
    while sp > 0:
        f = sp - 1
        stage = st_stage[f]
        if stage == 0:
            nodes += 1
            if nodes > budget:
                return BUDGET, nodes, stacks
            nkey = st_key[f]
            i = st_pos[f]
            death = st_birth[f] + clock(nkey) / lam[i]
            st_death[f] = death
            if death >= t:
                if comparison:
                    acc = 0.0
                    for j in range(r):
                        acc += abs(chi0[i, j]) ** 2
                    ret[:] = 0.0
                    ret[0] = np.sqrt(acc)
                else:
                    ret[:] = chi0[i]
                sp -= 1
                continue
            lev = st_level[f]
            if lev == 0:
                out[:] = 0.0
                return PRUNED, nodes, stacks
            u = event_uniform(nkey)
            a = ptr[i]
            b = ptr[i + 1]
            if u < p[i]:
                kind = 1
            else:
                j = np.searchsorted(cum[a:b], u, side="right")
                if j < b - a:
                    kind = 2
                    st_pair[f] = a + j
                else:
                    kind = 0
            if kind == 0:
                ph = _phi(gkind, grate, t - death)
                if comparison:
                    acc = 0.0
                    for j in range(r):
                        acc += abs(gamp[i, j] * ph) ** 2
                    ret[:] = 0.0
                    ret[0] = np.sqrt(acc)
                else:
                    for j in range(r):
                        ret[j] = gamp[i, j] * ph
                sp -= 1
                continue
            if sp == cap:
                cap *= 2
                st_key = _grow(st_key, cap)
                st_pos = _grow(st_pos, cap)
                st_birth = _grow(st_birth, cap)
                st_level = _grow(st_level, cap)
                st_stage = _grow(st_stage, cap)
                st_pair = _grow(st_pair, cap)
                st_death = _grow(st_death, cap)
                st_v1 = _grow(st_v1, cap)
                stacks = (st_key, st_pos, st_birth, st_level, st_stage, st_pair, st_death, st_v1)
            c = sp
            st_birth[c] = death
            st_stage[c] = 0
            if kind == 1:
                st_stage[f] = 3
                st_key[c] = child_key(nkey, 0)
                st_pos[c] = i
                st_level[c] = lev
            else:
                st_stage[f] = 1
                st_key[c] = child_key(nkey, 1)
                st_pos[c] = pl[st_pair[f]]
                if lev < 0:
                    st_level[c] = -1
                elif symmetric:
                    st_level[c] = lev - 1
                else:
                    st_level[c] = lev
            sp += 1
        elif stage == 1:
            st_v1[f, :] = ret
            st_stage[f] = 2
            if sp == cap:
                cap *= 2
                st_key = _grow(st_key, cap)
                st_pos = _grow(st_pos, cap)
                st_birth = _grow(st_birth, cap)
                st_level = _grow(st_level, cap)
                st_stage = _grow(st_stage, cap)
                st_pair = _grow(st_pair, cap)
                st_death = _grow(st_death, cap)
                st_v1 = _grow(st_v1, cap)
                stacks = (st_key, st_pos, st_birth, st_level, st_stage, st_pair, st_death, st_v1)
            c = sp
            nkey = st_key[f]
            st_key[c] = child_key(nkey, 1 if shared else 2)
            st_pos[c] = pm[st_pair[f]]
            st_birth[c] = st_death[f]
            st_level[c] = -1 if st_level[f] < 0 else st_level[f] - 1
            st_stage[c] = 0
            sp += 1
        elif stage == 2:
            pi = st_pair[f]
            if comparison:
                ret[0] = C_b * (st_v1[f, 0] * ret[0])
            else:
                dot = 0.0 + 0.0j
                for j in range(r):
                    dot += st_v1[f, j] * vec[pi, j]
                s = coef[pi] * dot
                for j in range(r):
                    ret[j] = C_b * (s * ret[j])
            sp -= 1
        else:
            for j in range(r):
                ret[j] = C_f * ret[j]
            sp -= 1
    out[:] = ret
    return OK, nodes, stacks


@nb.njit(nogil=True, cache=True)
def sample_block(root_pos, t, seed, stream, start, level, symmetric, comparison, budget, shared,
                 lam, p, ptr, cum, pl, pm, coef, vec, chi0, gamp, gkind, grate, C_f, C_b,
                 out_val, out_nodes, out_status):
    """Evaluate samples ``start .. start + len(out_status) - 1`` of one stream."""
    r = chi0.shape[1]
    cap = 64
    stacks = (np.empty(cap, np.uint64), np.empty(cap, np.int64), np.empty(cap, np.float64),
              np.empty(cap, np.int64), np.empty(cap, np.int8), np.empty(cap, np.int64),
              np.empty(cap, np.float64), np.empty((cap, r), np.complex128))
    for s in range(out_status.shape[0]):
        key = root_key(np.uint64(seed), np.uint64(stream), np.uint64(start + s))
        status, nodes, stacks = _one_sample(
            root_pos, t, key, level, symmetric, comparison, budget, shared,
            lam, p, ptr, cum, pl, pm, coef, vec, chi0, gamp, gkind, grate, C_f, C_b,
            out_val[s], stacks)
        out_status[s] = status
        out_nodes[s] = nodes
        if status == BUDGET:
            out_val[s, :] = 0.0
