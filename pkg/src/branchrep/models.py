"""Mode-indexed quadratic ODE systems and the PDE models recast into them.

An :class:`AbstractSystem` holds, for every mode ``k``,

    d/dt chi_k = lam_k [ -chi_k + C_f p_k chi_k
                         + C_b sum_{l,m} q_{k,l,m} B_{k,l,m}(chi_l, chi_m)
                         + d_k gamma_k(t) ]

with ``p_k + q_k + d_k = 1``.  Every bilinear map used by the models has the
form ``B(x, y) = coef * (x . vec) * y`` with ``|coef| <= 1`` and
``|vec| <= 1``; the pair tables store ``coef`` and ``vec`` per pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .modes import (
    DomainError, ModeIndex, TruncationBox, WeightFunction, enumerate_pairs,
    is_zero, neg, norm, weight,
)

D_MIN = 0.05
PROFILE_CODES = {"constant": 0, "exp": 1, "cos": 2}


class ConstructionError(ValueError):
    """A model could not be cast with the given constants."""

    def __init__(self, message, mode=None, suggested_C_b=None):
        super().__init__(message)
        self.mode = mode
        self.suggested_C_b = suggested_C_b


@dataclass(frozen=True)
class Forcing:
    """Forcing ``gamma_k(t) = amplitude_k * phi(t)`` or an arbitrary callable.

    ``phi`` is 1 (``constant``), ``exp(-rate t)`` (``exp``) or
    ``cos(rate t)`` (``cos``).  When ``func`` is given it takes
    ``(mode_position, t)`` and returns a length-``r`` vector; such forcing
    cannot run in the compiled sampler.
    """

    amplitude: np.ndarray
    profile: str = "constant"
    rate: float = 0.0
    func: Callable | None = None

    def __post_init__(self):
        if self.profile not in PROFILE_CODES:
            raise DomainError(f"unknown forcing profile {self.profile!r}")

    @classmethod
    def zero(cls, n, r):
        return cls(np.zeros((n, r), dtype=np.complex128))

    @property
    def compilable(self) -> bool:
        return self.func is None

    @property
    def profile_code(self) -> int:
        return PROFILE_CODES[self.profile]

    def phi(self, t):
        if self.profile == "constant":
            return np.ones_like(np.asarray(t, dtype=float)) if np.ndim(t) else 1.0
        if self.profile == "exp":
            return np.exp(-self.rate * np.asarray(t, dtype=float))
        return np.cos(self.rate * np.asarray(t, dtype=float))

    def at(self, i: int, t: float) -> np.ndarray:
        if self.func is not None:
            return np.asarray(self.func(i, t), dtype=np.complex128).reshape(-1)
        return self.amplitude[i] * self.phi(t)

    def all_at(self, t: float) -> np.ndarray:
        if self.func is not None:
            return np.stack([self.at(i, t) for i in range(self.amplitude.shape[0])])
        return self.amplitude * self.phi(t)

    def is_zero(self) -> bool:
        return self.func is None and not np.any(self.amplitude)

    def scaled(self, factors: np.ndarray) -> "Forcing":
        factors = np.asarray(factors, dtype=float)
        if self.func is None:
            return Forcing(self.amplitude * factors[:, None], self.profile, self.rate)
        f = self.func
        return Forcing(self.amplitude * factors[:, None], self.profile, self.rate,
                       func=lambda i, t: factors[i] * np.asarray(f(i, t)))

    def sup_abs(self, horizon: float = 10.0, samples: int = 2001) -> np.ndarray:
        """Per-mode ``sup_t |gamma_k(t)|``; callables are sampled on ``[0, horizon]``."""
        amp = np.linalg.norm(self.amplitude, axis=1)
        if self.func is None:
            if self.profile == "exp" and self.rate < 0:
                return np.where(amp > 0, np.inf, 0.0)
            return amp
        ts = np.linspace(0.0, horizon, samples)
        n = self.amplitude.shape[0]
        return np.array([max(np.linalg.norm(self.at(i, t)) for t in ts) for i in range(n)])


class AbstractSystem:
    """A truncated mode-indexed system ready for sampling and solving.

    Pair tables are flat arrays grouped by parent mode: pairs of mode ``i``
    live in ``pair_ptr[i]:pair_ptr[i+1]`` in lexicographic order of ``l``,
    and ``cum`` holds the cumulative outcome table ``p_i + running q``.
    Instances are treated as immutable once built.
    """

    def __init__(self, name, modes, r, lam, p, pairs, C_f, C_b, chi0, forcing,
                 box=None, weights=None, real_field=False, params=None):
        self.name = name
        self.modes: tuple[ModeIndex, ...] = tuple(tuple(k) for k in modes)
        self.index = {k: i for i, k in enumerate(self.modes)}
        self.box: TruncationBox | None = box
        self.r = int(r)
        n = len(self.modes)
        self.lam = np.asarray(lam, dtype=np.float64).reshape(n)
        self.p = np.asarray(p, dtype=np.float64).reshape(n)
        self.C_f = float(C_f)
        self.C_b = float(C_b)
        self.real_field = real_field
        self.params = dict(params or {})
        self.weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)

        ptr = np.zeros(n + 1, dtype=np.int64)
        ls, ms, qs, coefs, vecs = [], [], [], [], []
        for i in range(n):
            rows = pairs[i] if i < len(pairs) else []
            for l, m, q, coef, vec in rows:
                if q < 0:
                    raise ConstructionError(f"negative branch mass {q} at mode {self.modes[i]}",
                                            mode=self.modes[i])
                if q == 0:
                    continue
                ls.append(l)
                ms.append(m)
                qs.append(q)
                coefs.append(coef)
                vecs.append(np.asarray(vec, dtype=float).reshape(self.r))
            ptr[i + 1] = len(qs)
        self.pair_ptr = ptr
        self.pair_l = np.asarray(ls, dtype=np.int64)
        self.pair_m = np.asarray(ms, dtype=np.int64)
        self.pair_q = np.asarray(qs, dtype=np.float64)
        self.pair_coef = np.asarray(coefs, dtype=np.complex128)
        self.pair_vec = (np.asarray(vecs, dtype=np.float64).reshape(-1, self.r)
                         if vecs else np.zeros((0, self.r)))
        self.pair_k = np.repeat(np.arange(n, dtype=np.int64), np.diff(ptr))

        self.q = np.zeros(n)
        np.add.at(self.q, self.pair_k, self.pair_q)
        self.death = 1.0 - self.p - self.q
        self.cum = np.empty(len(qs))
        for i in range(n):
            a, b = ptr[i], ptr[i + 1]
            self.cum[a:b] = self.p[i] + np.cumsum(self.pair_q[a:b])

        self._weight_coef = self.C_b * self.pair_q * self.pair_coef
        self.chi0 = np.asarray(chi0, dtype=np.complex128).reshape(n, self.r)
        self.forcing: Forcing = forcing if forcing is not None else Forcing.zero(n, self.r)

    # -- basic views ------------------------------------------------------
    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def position(self, k) -> int:
        k = tuple(k)
        if k not in self.index:
            raise DomainError(f"mode {k} is not part of the system")
        return self.index[k]

    def pairs_of(self, i: int) -> range:
        return range(self.pair_ptr[i], self.pair_ptr[i + 1])

    def gamma(self, i: int, t: float) -> np.ndarray:
        return self.forcing.at(i, t)

    def bilinear(self, pair: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.pair_coef[pair] * np.dot(x, self.pair_vec[pair]) * y

    @property
    def _gather(self):
        """Sparse ``modes x pairs`` indicator; sums run in CSR (pair) order."""
        if getattr(self, "_gather_cache", None) is None:
            from scipy.sparse import csr_matrix
            P = len(self.pair_q)
            self._gather_cache = csr_matrix(
                (np.ones(P), np.arange(P), self.pair_ptr.copy()), shape=(self.n_modes, P))
        return self._gather_cache

    def nonlinear(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        """``C_b sum q B(x_l, y_m)`` for every mode, with ``y`` defaulting to ``x``.

        ``x`` and ``y`` have shape ``(n_modes, r)``.
        """
        y = x if y is None else y
        dots = np.einsum("pr,pr->p", x[self.pair_l], self.pair_vec)
        contrib = (self._weight_coef * dots)[:, None] * y[self.pair_m]
        return np.asarray(self._gather @ contrib)

    def comparison_nonlinear(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        """``C_b sum q x_l y_m`` on nonnegative scalars of shape ``(n_modes,)``."""
        y = x if y is None else y
        return self._gather @ (self.C_b * self.pair_q * x[self.pair_l] * y[self.pair_m])

    def sampler_tables(self):
        """Arrays consumed by the compiled sample-and-evaluate kernel."""
        if not self.forcing.compilable:
            raise DomainError("callable forcing cannot be used by the compiled sampler")
        return (self.lam, self.p, self.pair_ptr, self.cum, self.pair_l, self.pair_m,
                self.pair_coef, np.ascontiguousarray(self.pair_vec), self.chi0,
                np.ascontiguousarray(self.forcing.amplitude), self.forcing.profile_code,
                float(self.forcing.rate), self.C_f, self.C_b)

    def __repr__(self):
        return f"AbstractSystem({self.name!r}, modes={self.n_modes}, r={self.r}, pairs={len(self.pair_q)})"


# ---------------------------------------------------------------------------
# data helpers

def _mode_values(spec, modes, r) -> np.ndarray:
    """Mode data given as ``None``, a mapping ``mode -> value`` or a callable."""
    out = np.zeros((len(modes), r), dtype=np.complex128)
    if spec is None:
        return out
    if callable(spec) and not isinstance(spec, Mapping):
        for i, k in enumerate(modes):
            out[i] = np.asarray(spec(k), dtype=np.complex128).reshape(r)
        return out
    index = {k: i for i, k in enumerate(modes)}
    for k, v in spec.items():
        k = tuple(k) if not isinstance(k, int) else (k,)
        if k not in index:
            raise DomainError(f"data given for mode {k} outside the system")
        out[index[k]] = np.asarray(v, dtype=np.complex128).reshape(r)
    return out


@dataclass(frozen=True)
class ForcingSpec:
    """Physical forcing ``f_k(t) = modes[k] * phi(t)``."""

    modes: Mapping = field(default_factory=dict)
    profile: str = "constant"
    rate: float = 0.0


def _physical_forcing(f, modes, r) -> Forcing:
    n = len(modes)
    if f is None:
        return Forcing.zero(n, r)
    if isinstance(f, Forcing):
        return f
    if isinstance(f, ForcingSpec):
        return Forcing(_mode_values(f.modes, modes, r), f.profile, f.rate)
    if isinstance(f, Mapping):
        return Forcing(_mode_values(f, modes, r))
    if callable(f):
        return Forcing(np.zeros((n, r), dtype=np.complex128),
                       func=lambda i, t: f(modes[i], t))
    raise DomainError(f"unsupported forcing specification {type(f).__name__}")


def hermitian_residual(values: np.ndarray, modes: Sequence[ModeIndex]) -> float:
    """``max |v_{-k} - conj(v_k)|`` over modes whose mirror is present."""
    index = {k: i for i, k in enumerate(modes)}
    worst = 0.0
    for i, k in enumerate(modes):
        j = index.get(neg(k))
        if j is not None:
            worst = max(worst, float(np.max(np.abs(values[j] - np.conj(values[i])))))
    return worst


def _finish_probabilities(name, modes, p, Q, C_b):
    """Check ``p + Q/C_b <= 1``; otherwise raise with the minimal fixing ``C_b``."""
    q = Q / C_b
    d = 1.0 - p - q
    bad = np.flatnonzero(d < 0)
    if bad.size:
        i = int(bad[np.argmin(d[bad])])
        room = 1.0 - D_MIN - p
        if np.any((room <= 0) & (Q > 0)) or np.any(p >= 1):
            suggestion = None
            hint = "flip probability leaves no room for branching; increase C_f"
        else:
            suggestion = float(np.max(np.where(Q > 0, Q / np.maximum(room, 1e-300), 0.0)))
            hint = f"C_b >= {suggestion:.6g} restores d_k >= {D_MIN} on every mode"
        raise ConstructionError(
            f"{name}: death probability d_k = {d[i]:.6g} < 0 at mode {modes[i]} "
            f"(p_k = {p[i]:.6g}, q_k = {q[i]:.6g}); {hint}",
            mode=modes[i], suggested_C_b=suggestion)
    return d


def _gamma_from_physical(forcing: Forcing, scale: np.ndarray, d: np.ndarray, modes) -> Forcing:
    """Divide by ``d_k`` after scaling; zero death mass only allowed for zero forcing."""
    amp = np.linalg.norm(forcing.amplitude, axis=1)
    for i in np.flatnonzero(d <= 0):
        if amp[i] > 0 or forcing.func is not None:
            raise ConstructionError(f"forcing on mode {modes[i]} needs d_k > 0", mode=modes[i])
    safe = np.where(d > 0, d, 1.0)
    return forcing.scaled(scale / safe)


def _check_real(name, chi0, forcing, modes):
    res = hermitian_residual(chi0, modes)
    if forcing.func is None:
        res = max(res, hermitian_residual(forcing.amplitude, modes))
    if res > 1e-12:
        raise ConstructionError(f"{name}: data is not Hermitian (residual {res:.3e}) "
                                "although a real field was requested")


# ---------------------------------------------------------------------------
# model builders

def build_burgers(d, alpha, box: TruncationBox, C_f, C_b, lambda0=1.0, u0=None, f=None,
                  real_field=True) -> AbstractSystem:
    """Weighted Fourier form of ``u_t - Lap u + (u . grad) u = f`` on the torus.

    ``chi_k = w_k u_k`` with ``w_k = max(1, |k|^alpha)``.  The zero mode, when
    the box contains it, gets rate ``lambda0`` and flip probability ``1/C_f``.
    """
    if box.d != d:
        raise DomainError(f"box dimension {box.d} does not match d={d}")
    if not alpha > max((d + 1) / 2, d - 1):
        raise DomainError(f"Burgers needs alpha > max((d+1)/2, d-1), got {alpha}")
    if not lambda0 > 0:
        raise DomainError("lambda0 must be positive")
    if not C_b > 0:
        raise DomainError("C_b must be positive")
    modes = box.modes
    n = len(modes)
    w = WeightFunction(alpha)
    weights = np.array([weight(k, w) for k in modes])
    lam = np.array([lambda0 if is_zero(k) else norm(k) ** 2 for k in modes])
    p = np.zeros(n)
    for i, k in enumerate(modes):
        if is_zero(k):
            if not C_f > 1:
                raise ConstructionError("zero mode needs C_f > 1 so that p_0 = 1/C_f < 1", mode=k)
            p[i] = 1.0 / C_f
    pairs, Q = [], np.zeros(n)
    for i, k in enumerate(modes):
        rows = []
        for l, m in enumerate_pairs(k, box):
            if is_zero(m):
                continue
            mn = norm(m)
            mass = mn * weights[i] / (lam[i] * weights[box.index[l]] * weights[box.index[m]])
            rows.append((box.index[l], box.index[m], mass / C_b, -1j, np.asarray(m, float) / mn))
            Q[i] += mass
        pairs.append(rows)
    if d == 1:
        # scalar field: fold the sign of m into the coefficient
        pairs = [[(a, b, q, coef * vec[0], np.ones(1)) for a, b, q, coef, vec in rows]
                 for rows in pairs]
    death = _finish_probabilities("burgers", modes, p, Q, C_b)
    u = _mode_values(u0, modes, d)
    chi0 = u * weights[:, None]
    phys = _physical_forcing(f, modes, d)
    forcing = _gamma_from_physical(phys, weights / lam, death, modes)
    if real_field:
        _check_real("burgers", chi0, forcing, modes)
    return AbstractSystem("burgers", modes, d, lam, p, pairs, C_f, C_b, chi0, forcing,
                          box=box, weights=weights, real_field=real_field,
                          params=dict(d=d, alpha=alpha, lambda0=lambda0))


def _perp_dot(k, l):
    # k . l_perp with l_perp = (l2, -l1)
    return k[0] * l[1] - k[1] * l[0]


def build_ns2d_vorticity(alpha, box: TruncationBox, C_b, xi0=None, f=None,
                         real_field=True) -> AbstractSystem:
    """Weighted vorticity form of 2D Navier-Stokes, ``chi_k = |k|^alpha xi_k``."""
    if box.d != 2 or not box.exclude_zero:
        raise DomainError("vorticity model needs a 2D box without the zero mode")
    if not alpha > 0.5:
        raise DomainError(f"vorticity model needs alpha > 1/2, got {alpha}")
    if not C_b > 0:
        raise DomainError("C_b must be positive")
    modes = box.modes
    n = len(modes)
    kn = np.array([norm(k) for k in modes])
    weights = kn ** alpha
    lam = kn ** 2
    p = np.zeros(n)
    pairs, Q = [], np.zeros(n)
    for i, k in enumerate(modes):
        rows = []
        for l, m in enumerate_pairs(k, box):
            kl = _perp_dot(k, l)
            if kl == 0:
                continue
            mass = kn[i] ** (alpha - 2) * abs(kl) / (norm(l) ** (alpha + 2) * norm(m) ** alpha)
            rows.append((box.index[l], box.index[m], mass / C_b, float(np.sign(kl)), np.ones(1)))
            Q[i] += mass
        pairs.append(rows)
    death = _finish_probabilities("ns2d", modes, p, Q, C_b)
    chi0 = _mode_values(xi0, modes, 1) * weights[:, None]
    phys = _physical_forcing(f, modes, 1)
    forcing = _gamma_from_physical(phys, kn ** (alpha - 2), death, modes)
    if real_field:
        _check_real("ns2d", chi0, forcing, modes)
    return AbstractSystem("ns2d", modes, 1, lam, p, pairs, 1.0, C_b, chi0, forcing,
                          box=box, weights=weights, real_field=real_field,
                          params=dict(d=2, alpha=alpha))


def build_surface_growth(d, alpha, box: TruncationBox, a1, a2, a3, C_f, C_b, u0=None, f=None,
                         real_field=True) -> AbstractSystem:
    """Weighted form of ``u_t = -a1 Lap^2 u - a2 Lap u - a3 Lap |grad u|^2 + f``.

    The flip probability follows ``p_k = (a2/a1) C_f^-1 |k|^(alpha-2)`` as
    printed; modes where this reaches 1 are rejected.
    """
    if d not in (1, 2) or box.d != d:
        raise DomainError("surface growth is posed for d in {1, 2} with a matching box")
    if not box.exclude_zero:
        raise DomainError("surface growth omits the zero mode")
    if not alpha > max(d, 1 + d / 2):
        raise DomainError(f"surface growth needs alpha > max(d, 1+d/2), got {alpha}")
    if min(a1, a2, a3) <= 0 or C_f <= 0 or C_b <= 0:
        raise DomainError("a1, a2, a3, C_f, C_b must be positive")
    modes = box.modes
    n = len(modes)
    kn = np.array([norm(k) for k in modes])
    weights = kn ** alpha
    lam = a1 * kn ** 4
    p = (a2 / a1) / C_f * kn ** (alpha - 2)
    for i in np.flatnonzero(p >= 1):
        raise ConstructionError(f"surface: flip probability p_k = {p[i]:.6g} >= 1 at mode {modes[i]}",
                                mode=modes[i])
    pairs, Q = [], np.zeros(n)
    for i, k in enumerate(modes):
        rows = []
        for l, m in enumerate_pairs(k, box):
            lm = sum(a * b for a, b in zip(l, m))
            if lm == 0:
                continue
            mass = a3 * kn[i] ** (alpha - 2) * abs(lm) / (a1 * norm(l) ** alpha * norm(m) ** alpha)
            rows.append((box.index[l], box.index[m], mass / C_b, float(np.sign(lm)), np.ones(1)))
            Q[i] += mass
        pairs.append(rows)
    death = _finish_probabilities("surface", modes, p, Q, C_b)
    chi0 = _mode_values(u0, modes, 1) * weights[:, None]
    phys = _physical_forcing(f, modes, 1)
    forcing = _gamma_from_physical(phys, kn ** (alpha - 4) / a1, death, modes)
    if real_field:
        _check_real("surface", chi0, forcing, modes)
    return AbstractSystem("surface", modes, 1, lam, p, pairs, C_f, C_b, chi0, forcing,
                          box=box, weights=weights, real_field=real_field,
                          params=dict(d=d, alpha=alpha, a1=a1, a2=a2, a3=a3))


def build_scalar_quadratic_ode(u0: float) -> AbstractSystem:
    """``u' = -u + u^2`` as a single self-branching mode."""
    return AbstractSystem("scalar_ode", [(0,)], 1, [1.0], [0.0],
                          [[(0, 0, 1.0, 1.0, np.ones(1))]], 1.0, 1.0, [u0], None,
                          params=dict(u0=u0))


def build_single_mode(lam=1.0, p=0.0, q=0.0, chi0=1.0, gamma=0.0, C_f=1.0, C_b=1.0,
                      name="single_mode") -> AbstractSystem:
    """One mode that flips, self-branches or dies with the given probabilities.

    Useful for pure decay (``p = q = 0``) and subcritical branching checks.
    """
    if min(p, q) < 0 or p + q > 1 + 1e-15:
        raise ConstructionError(f"invalid probabilities p={p}, q={q}")
    if not lam > 0:
        raise DomainError("rate must be positive")
    pairs = [[(0, 0, q, 1.0, np.ones(1))]] if q > 0 else [[]]
    forcing = Forcing(np.array([[gamma]], dtype=np.complex128))
    return AbstractSystem(name, [(0,)], 1, [lam], [p], pairs, C_f, C_b, [chi0], forcing,
                          params=dict(lam=lam, p=p, q=q))


# ---------------------------------------------------------------------------
# diagnostics

@dataclass
class SystemDiagnostics:
    prob_residual: np.ndarray
    min_death: float
    max_q: float
    max_p: float
    bilinear_max_ratio: float
    bilinear_min_ratio: float
    hermitian_residual: float
    simple_criterion: bool
    flags: list[str]

    @property
    def max_prob_residual(self) -> float:
        return float(np.max(np.abs(self.prob_residual))) if self.prob_residual.size else 0.0

    def summary(self) -> str:
        lines = [
            f"max |p+q+d-1|      {self.max_prob_residual:.3e}",
            f"min d_k            {self.min_death:.6g}",
            f"max q_k            {self.max_q:.6g}",
            f"max p_k            {self.max_p:.6g}",
            f"max |B|/(|x||y|)   {self.bilinear_max_ratio:.12f}",
            f"hermitian residual {self.hermitian_residual:.3e}",
            f"simplecriterion    {str(self.simple_criterion).lower()}",
        ]
        lines += [f"flag: {f}" for f in self.flags]
        return "\n".join(lines)


def validate(system: AbstractSystem, probes: int = 1000, seed: int = 0) -> SystemDiagnostics:
    """Probability, bilinear-bound and extinction-criterion diagnostics.

    Nothing is clamped; offending modes are listed in ``flags``.
    """
    flags = []
    resid = system.p + system.q + system.death - 1.0
    if np.any(system.p >= 1):
        flags.append("p_k >= 1 at modes " + str([system.modes[i] for i in np.flatnonzero(system.p >= 1)]))
    if np.any(system.death < 0):
        flags.append("negative death probability at modes "
                     + str([system.modes[i] for i in np.flatnonzero(system.death < 0)]))
    if np.any(system.lam <= 0):
        flags.append("non-positive rate")
    if system.box is not None:
        for pi in range(len(system.pair_q)):
            k = system.modes[system.pair_k[pi]]
            l, m = system.modes[system.pair_l[pi]], system.modes[system.pair_m[pi]]
            if any(a + b != c for a, b, c in zip(l, m, k)):
                flags.append(f"pair {l}+{m} violates l+m=k at mode {k}")
                break

    rng = np.random.default_rng(seed)
    hi, lo = 0.0, math.inf
    if len(system.pair_q):
        picks = rng.integers(0, len(system.pair_q), size=probes)
        r = system.r
        for pi in picks:
            x = rng.normal(size=r) + 1j * rng.normal(size=r)
            y = rng.normal(size=r) + 1j * rng.normal(size=r)
            x /= np.linalg.norm(x)
            y /= np.linalg.norm(y)
            ratio = float(np.linalg.norm(system.bilinear(pi, x, y)))
            hi, lo = max(hi, ratio), min(lo, ratio)
        if hi > 1 + 1e-12:
            flags.append(f"bilinear bound violated: max ratio {hi:.6g}")
    else:
        lo = 0.0

    herm = 0.0
    if system.real_field:
        herm = hermitian_residual(system.chi0, system.modes)
    simple = bool(np.all(system.q <= system.death) and np.all(system.p < 1))
    return SystemDiagnostics(resid, float(system.death.min()), float(system.q.max()),
                             float(system.p.max()), hi, lo, herm, simple, flags)


def small_data_global_check(system: AbstractSystem, delta: float, horizon: float = 10.0):
    """Mode-wise small-data global existence condition.

    Mode ``k`` passes when ``d_k sup|gamma_k| < delta (1 - C_f p_k) - C_b delta^2 q_k``;
    the overall verdict also needs ``||chi(0)||_inf <= delta``.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    lhs = system.death * system.forcing.sup_abs(horizon)
    rhs = delta * (1 - system.C_f * system.p) - system.C_b * delta ** 2 * system.q
    per_mode = lhs < rhs
    chi_sup = float(np.max(np.linalg.norm(system.chi0, axis=1))) if system.n_modes else 0.0
    return per_mode, bool(per_mode.all() and chi_sup <= delta)
