"""Deterministic oracles on the truncated system.

* :func:`solve_mild_picard` iterates the variation-of-constants map on a
  uniform grid with trapezoid quadrature.
* :func:`solve_semi_implicit` integrates the level hierarchy whose modes are
  the expectations of the pruned evaluations.
* :func:`solve_comparison` integrates the nonnegative comparison system and
  reports blow-up as data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import AbstractSystem
from .modes import DomainError

BLOWUP_THRESHOLD = 1e12
STIFF_LIMIT = 0.5  # max lam * dt


class NotConverged(RuntimeError):
    def __init__(self, message, residual, grid=None):
        super().__init__(message)
        self.residual = residual
        self.grid = grid


class SchemeInstability(RuntimeError):
    def __init__(self, level, time):
        super().__init__(f"semi-implicit level {level} left the overflow threshold at t={time:.6g}")
        self.level = level
        self.time = time


@dataclass
class TrajectoryGrid:
    times: np.ndarray
    values: np.ndarray  # (n_times, n_modes, r)
    converged: bool = True
    blowup_time: float | None = None
    dt: float = 0.0
    iterations: int = 0
    residual: float = 0.0

    def at(self, t: float) -> np.ndarray:
        """Values at the grid point closest to ``t``."""
        j = int(round(t / self.dt))
        if not (0 <= j < len(self.times)) or abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"t={t} is not a grid point")
        return self.values[j]

    def sup_norm(self) -> np.ndarray:
        """``max_k |chi_k(t)|`` per grid time."""
        v = self.values
        return np.max(np.abs(v) if v.shape[-1] == 1 else np.linalg.norm(v, axis=-1), axis=1).reshape(-1)


@dataclass
class SchemeFamily:
    levels: list[TrajectoryGrid] = field(default_factory=list)

    def level(self, n: int) -> TrajectoryGrid:
        return self.levels[n]


def _grid(system: AbstractSystem, T: float, dt: float):
    if not dt > 0:
        raise DomainError("dt must be positive")
    if not T >= 0:
        raise DomainError("T must be nonnegative")
    lam_max = float(system.lam.max())
    dt = min(dt, STIFF_LIMIT / lam_max)
    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    dt = T / steps if T > 0 else dt
    return np.arange(steps + 1) * dt, dt


def _forcing_grid(system: AbstractSystem, times: np.ndarray) -> np.ndarray:
    """``d_k gamma_k(t_j)`` with shape ``(n_times, n_modes, r)``."""
    f = system.forcing
    if f.is_zero():
        return np.zeros((len(times), system.n_modes, system.r), dtype=np.complex128)
    if f.compilable:
        return system.death[None, :, None] * f.amplitude[None] * np.asarray(f.phi(times))[:, None, None]
    return np.stack([system.death[:, None] * f.all_at(t) for t in times])


def _batched_nonlinear(system: AbstractSystem, x: np.ndarray, y: np.ndarray | None = None):
    """Nonlinearity for a whole trajectory ``(n_times, n_modes, r)``."""
    y = x if y is None else y
    dots = np.einsum("jpr,pr->jp", x[:, system.pair_l], system.pair_vec)
    contrib = (system._weight_coef[None] * dots)[..., None] * y[:, system.pair_m]
    J, P, r = contrib.shape
    flat = contrib.transpose(1, 0, 2).reshape(P, J * r)
    out = system._gather @ flat
    return np.asarray(out).reshape(system.n_modes, J, r).transpose(1, 0, 2)


def solve_mild_picard(system: AbstractSystem, T: float, dt: float, tol: float = 1e-10,
                      max_iter: int = 200, blowup_threshold: float = BLOWUP_THRESHOLD) -> TrajectoryGrid:
    """Fixed point of the mild form by Picard iteration in the grid sup-norm.

    The convolution ``int lam e^{-lam (t-s)} G(s) ds`` uses the composite
    trapezoid rule, evaluated by the one-step recursion it satisfies.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    times, dt = _grid(system, T, dt)
    lam = system.lam[None, :, None]
    decay = np.exp(-system.lam * dt)[:, None]
    half = (system.lam * dt / 2)[:, None]
    free = np.exp(-lam * times[:, None, None]) * system.chi0[None]
    forcing = _forcing_grid(system, times)
    flip = (system.C_f * system.p)[None, :, None]
    chi = np.broadcast_to(system.chi0, (len(times),) + system.chi0.shape).copy()
    residual = math.inf
    for it in range(1, max_iter + 1):
        G = flip * chi + forcing
        if len(system.pair_q):
            G = G + _batched_nonlinear(system, chi)
        new = np.empty_like(chi)
        new[0] = system.chi0
        acc = np.zeros_like(system.chi0)
        for j in range(1, len(times)):
            acc = decay * acc + half * (decay * G[j - 1] + G[j])
            new[j] = free[j] + acc
        if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > blowup_threshold:
            raise NotConverged(f"Picard iterate left the threshold at iteration {it}", math.inf,
                               TrajectoryGrid(times, chi, False, None, dt, it, residual))
        residual = float(np.max(np.abs(new - chi)))
        chi = new
        if residual < tol:
            return TrajectoryGrid(times, chi, True, None, dt, it, residual)
    raise NotConverged(f"Picard iteration did not contract within {max_iter} iterations "
                       f"(last change {residual:.3e})", residual,
                       TrajectoryGrid(times, chi, False, None, dt, max_iter, residual))


def _midpoints(v: np.ndarray) -> np.ndarray:
    """Cubic interpolation of a grid function at interval midpoints."""
    J = v.shape[0] - 1
    if J < 3:
        return 0.5 * (v[:-1] + v[1:])
    mid = np.empty_like(v[:-1])
    mid[1:J - 1] = (-v[0:J - 2] + 9 * v[1:J - 1] + 9 * v[2:J] - v[3:J + 1]) / 16
    mid[0] = (5 * v[0] + 15 * v[1] - 5 * v[2] + v[3]) / 16
    mid[J - 1] = (v[J - 3] - 5 * v[J - 2] + 15 * v[J - 1] + 5 * v[J]) / 16
    return mid


def _rk4_linear_level(system, times, dt, prev, forcing, forcing_mid, symmetric, level,
                      overflow):
    """One level: ``chi' = lam[-chi + C_f p chi + N(chi, prev) + d gamma]``."""
    lam = system.lam[:, None]
    flip = (system.C_f * system.p)[:, None]
    prev_mid = _midpoints(prev)
    has_pairs = len(system.pair_q) > 0
    if symmetric and has_pairs:
        N_grid = _batched_nonlinear(system, prev)
        N_mid = _batched_nonlinear(system, prev_mid)

    def rhs(x, y, drive, N=None):
        g = -x + flip * x + drive
        if has_pairs:
            g = g + (N if symmetric else system.nonlinear(x, y))
        return lam * g

    out = np.empty_like(prev)
    x = system.chi0.copy()
    out[0] = x
    for j in range(len(times) - 1):
        if symmetric and has_pairs:
            a, m, b = N_grid[j], N_mid[j], N_grid[j + 1]
        else:
            a = m = b = None
        k1 = rhs(x, prev[j], forcing[j], a)
        k2 = rhs(x + 0.5 * dt * k1, prev_mid[j], forcing_mid[j], m)
        k3 = rhs(x + 0.5 * dt * k2, prev_mid[j], forcing_mid[j], m)
        k4 = rhs(x + dt * k3, prev[j + 1], forcing[j + 1], b)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > overflow:
            raise SchemeInstability(level, times[j + 1])
        out[j + 1] = x
    return out


def solve_semi_implicit(system: AbstractSystem, n_levels: int, T: float, dt: float,
                        pruning: str = "asymmetric",
                        overflow: float = BLOWUP_THRESHOLD) -> SchemeFamily:
    """Levels ``0..n_levels`` of the pruned approximation scheme.

    Level 0 is pure decay.  With asymmetric pruning level ``n`` sees
    ``B(chi^(n)_l, chi^(n-1)_m)`` and is linear in itself; symmetric pruning
    uses ``B(chi^(n-1)_l, chi^(n-1)_m)``.  Each level is stepped with RK4
    against the previous level, which is interpolated cubically at the
    half steps.
    """
    if n_levels < 0:
        raise DomainError("n_levels must be nonnegative")
    if pruning not in ("asymmetric", "symmetric"):
        raise DomainError(f"unknown pruning {pruning!r}")
    times, dt = _grid(system, T, dt)
    level0 = np.exp(-system.lam[None, :, None] * times[:, None, None]) * system.chi0[None]
    family = SchemeFamily([TrajectoryGrid(times, level0, True, None, dt)])
    forcing = _forcing_grid(system, times)
    forcing_mid = _forcing_grid(system, times[:-1] + dt / 2) if len(times) > 1 else forcing[:0]
    prev = level0
    for n in range(1, n_levels + 1):
        vals = _rk4_linear_level(system, times, dt, prev, forcing, forcing_mid,
                                 pruning == "symmetric", n, overflow)
        family.levels.append(TrajectoryGrid(times, vals, True, None, dt))
        prev = vals
    return family


def solve_comparison(system: AbstractSystem, T: float, dt: float,
                     blowup_threshold: float = BLOWUP_THRESHOLD) -> TrajectoryGrid:
    """RK4 for the comparison system with data ``|chi(0)|`` and ``|gamma|``.

    Values are clamped at zero after each step.  Integration stops at the
    first grid point whose sup-norm exceeds ``blowup_threshold`` (or is not
    finite); later grid values are ``inf`` and ``blowup_time`` is set.
    """
    times, dt = _grid(system, T, dt)
    lam = system.lam
    flip = system.C_f * system.p
    x = np.linalg.norm(system.chi0, axis=1)
    f = system.forcing

    def drive(t):
        if f.is_zero():
            return np.zeros(system.n_modes)
        return system.death * np.linalg.norm(f.all_at(t), axis=1)

    def rhs(x, t):
        g = -x + flip * x + drive(t)
        if len(system.pair_q):
            g = g + system.comparison_nonlinear(x)
        return lam * g

    out = np.full((len(times), system.n_modes, 1), np.inf)
    out[0, :, 0] = x
    blowup = None
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(len(times) - 1):
            t = times[j]
            k1 = rhs(x, t)
            k2 = rhs(x + 0.5 * dt * k1, t + dt / 2)
            k3 = rhs(x + 0.5 * dt * k2, t + dt / 2)
            k4 = rhs(x + dt * k3, t + dt)
            x = np.maximum(x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), 0.0)
            if not np.all(np.isfinite(x)) or np.max(x) > blowup_threshold:
                blowup = float(times[j + 1])
                break
            out[j + 1, :, 0] = x
    return TrajectoryGrid(times, out, blowup is None, blowup, dt)


def logistic_reference(u0: float, t: float) -> float:
    """Closed-form solution of ``u' = -u + u^2``."""
    denom = u0 + (1 - u0) * math.exp(t)
    if denom <= 0 or abs(denom) < 1e-14:
        raise DomainError(f"u' = -u + u^2 from u0={u0} has blown up before t={t}")
    return u0 / denom


def logistic_blowup_time(u0: float) -> float:
    """Root of the closed-form denominator; infinite when ``u0 <= 1``."""
    if u0 <= 1:
        return math.inf
    return math.log(u0 / (u0 - 1))
