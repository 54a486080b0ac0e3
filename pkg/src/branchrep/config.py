"""Experiment configuration: YAML schema, validation and system construction.

Every block is checked before anything is computed and unknown keys are
rejected.  The schema is documented in README.md.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .models import (
    AbstractSystem, ConstructionError, ForcingSpec, build_burgers, build_ns2d_vorticity,
    build_scalar_quadratic_ode, build_single_mode, build_surface_growth,
)
from .modes import TruncationBox, norm


class ConfigError(ValueError):
    pass


MODELS = ("burgers", "ns2d", "surface", "scalar_ode", "single_mode")

MODEL_KEYS = {
    "burgers": {"d", "alpha", "k_max", "exclude_zero", "C_f", "C_b", "lambda0", "initial",
                "forcing", "real_field"},
    "ns2d": {"alpha", "k_max", "C_b", "initial", "forcing", "real_field"},
    "surface": {"d", "alpha", "k_max", "a1", "a2", "a3", "C_f", "C_b", "initial", "forcing",
                "real_field"},
    "scalar_ode": {"u0"},
    "single_mode": {"lam", "p", "q", "chi0", "gamma", "C_f", "C_b"},
}

DEFAULTS = {
    "numerics": {"T": 1.0, "dt": 1e-3, "tol": 1e-10, "max_iter": 200, "levels": 15,
                 "pruning": "asymmetric", "blowup_threshold": 1e12, "times": None},
    "mc": {"n_samples": 10_000, "seed": 0, "budget": 1_000_000, "prune_levels": [0, 2, 5, 10, 20],
           "modes": "all", "times": None, "threads": None},
    "output": {"directory": "out", "formats": ["csv"]},
    "checks": {"delta": None, "horizon": 10.0, "branching_horizon": 1.0, "extinction_horizons": [1, 2, 4]},
    "lemma": {"d": 1, "alpha": 2.0, "gamma": 2.0, "k_max": 400, "k_norms": [1, 50]},
}

INITIAL_KEYS = {"profile", "sup_norm", "decay", "phase", "modes"}
FORCING_KEYS = {"profile", "rate", "modes"}


@dataclass
class ExperimentConfig:
    model: dict
    numerics: dict
    mc: dict
    output: dict
    checks: dict
    lemma: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def name(self) -> str:
        return self.model["name"]

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form of the validated config."""
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def canonical(self) -> dict:
        return {"model": self.model, "numerics": self.numerics, "mc": self.mc,
                "output": self.output, "checks": self.checks, "lemma": self.lemma}


def _reject_unknown(block: dict, allowed: set, where: str):
    extra = sorted(set(block) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(map(str, extra))}")


def _number(block, key, where, positive=False, nonneg=False, integer=False):
    v = block.get(key)
    if isinstance(v, str):
        # YAML 1.1 reads exponents without a sign (1e6) as strings
        try:
            v = float(v)
        except ValueError:
            pass
        else:
            if integer and v.is_integer():
                v = int(v)
            block[key] = v
    if integer:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    elif isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key} must be a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key} must be positive")
    if nonneg and v < 0:
        raise ConfigError(f"{where}.{key} must be nonnegative")
    return v


def _complex(v, where):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError:
            pass
    raise ConfigError(f"{where}: cannot read {v!r} as a number or [re, im] pair")


def _mode_list(entries, r, where):
    """``[{k: [..], value: ..}, ...]`` to a mapping ``mode -> vector``."""
    if not isinstance(entries, list):
        raise ConfigError(f"{where}.modes must be a list")
    out = {}
    for j, e in enumerate(entries):
        if not isinstance(e, dict):
            raise ConfigError(f"{where}.modes[{j}] must be a mapping with k and value")
        _reject_unknown(e, {"k", "value"}, f"{where}.modes[{j}]")
        k = e.get("k")
        if isinstance(k, int) and not isinstance(k, bool):
            k = [k]
        if not isinstance(k, list) or not all(isinstance(c, int) for c in k):
            raise ConfigError(f"{where}.modes[{j}].k must be an integer list")
        v = e.get("value")
        vals = v if isinstance(v, list) and r > 1 else [v]
        if len(vals) != r:
            raise ConfigError(f"{where}.modes[{j}].value needs {r} component(s)")
        out[tuple(k)] = [_complex(x, f"{where}.modes[{j}].value") for x in vals]
    return out


def _check_initial(block, where):
    if block is None:
        return {"profile": "zero"}
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a mapping")
    _reject_unknown(block, INITIAL_KEYS, where)
    out = dict(block)
    prof = out.setdefault("profile", "power")
    if prof not in ("zero", "power", "modes"):
        raise ConfigError(f"{where}.profile must be zero, power or modes")
    if prof == "power":
        out.setdefault("decay", 5.0)
        out.setdefault("phase", 1.0)
        _number(out, "decay", where, nonneg=True)
        _number(out, "phase", where)
    if prof == "modes" and "modes" not in out:
        raise ConfigError(f"{where}: profile 'modes' needs a modes list")
    if "sup_norm" in out and out["sup_norm"] is not None:
        _number(out, "sup_norm", where, nonneg=True)
    return out


def _check_forcing(block, where):
    if block is None:
        return None
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a mapping")
    _reject_unknown(block, FORCING_KEYS, where)
    out = dict(block)
    out.setdefault("profile", "constant")
    out.setdefault("rate", 0.0)
    if out["profile"] not in ("constant", "exp", "cos"):
        raise ConfigError(f"{where}.profile must be constant, exp or cos")
    _number(out, "rate", where)
    if "modes" not in out:
        raise ConfigError(f"{where} needs a modes list")
    return out


def _check_model(block):
    if not isinstance(block, dict):
        raise ConfigError("model block is required")
    name = block.get("name")
    if name not in MODELS:
        raise ConfigError(f"model.name must be one of {', '.join(MODELS)}, got {name!r}")
    _reject_unknown(block, MODEL_KEYS[name] | {"name"}, "model")
    m = dict(block)
    w = "model"
    if name == "scalar_ode":
        _number(m, "u0", w)
        return m
    if name == "single_mode":
        for key, default in (("lam", 1.0), ("p", 0.0), ("q", 0.0), ("chi0", 1.0), ("gamma", 0.0),
                             ("C_f", 1.0), ("C_b", 1.0)):
            m.setdefault(key, default)
            _number(m, key, w)
        return m
    m.setdefault("real_field", True)
    m.setdefault("d", 2 if name == "ns2d" else 1)
    _number(m, "d", w, positive=True, integer=True)
    _number(m, "alpha", w, positive=True)
    _number(m, "k_max", w, positive=True, integer=True)
    if name in ("burgers", "surface"):
        m.setdefault("C_f", 2.0)
        _number(m, "C_f", w, positive=True)
    if name == "burgers":
        m.setdefault("lambda0", 1.0)
        m.setdefault("exclude_zero", True)
        _number(m, "lambda0", w, positive=True)
    if name == "surface":
        for key in ("a1", "a2", "a3"):
            _number(m, key, w, positive=True)
    cb = m.get("C_b", "auto")
    if cb != "auto":
        _number(m, "C_b", w, positive=True)
    m["C_b"] = cb
    m["initial"] = _check_initial(m.get("initial"), "model.initial")
    m["forcing"] = _check_forcing(m.get("forcing"), "model.forcing")
    return m


def _check_block(name, block):
    if block is None:
        block = {}
    if not isinstance(block, dict):
        raise ConfigError(f"{name} block must be a mapping")
    _reject_unknown(block, set(DEFAULTS[name]), name)
    out = {**DEFAULTS[name], **block}
    if name == "numerics":
        for key in ("T", "dt", "tol", "blowup_threshold"):
            _number(out, key, name, positive=True)
        for key in ("max_iter", "levels"):
            _number(out, key, name, nonneg=True, integer=True)
        if out["pruning"] not in ("asymmetric", "symmetric"):
            raise ConfigError("numerics.pruning must be asymmetric or symmetric")
        out["times"] = _times(out["times"], out["T"], "numerics.times")
    elif name == "mc":
        _number(out, "n_samples", name, integer=True)
        if out["n_samples"] < 2:
            raise ConfigError("mc.n_samples must be at least 2")
        _number(out, "seed", name, nonneg=True, integer=True)
        _number(out, "budget", name, positive=True, integer=True)
        levels = out["prune_levels"]
        if (not isinstance(levels, list) or not levels
                or not all(isinstance(v, int) and v >= 0 for v in levels)
                or any(b <= a for a, b in zip(levels, levels[1:]))):
            raise ConfigError("mc.prune_levels must be a nonempty increasing list of levels")
        if out["modes"] != "all":
            if not isinstance(out["modes"], list):
                raise ConfigError("mc.modes must be 'all' or a list of modes")
            out["modes"] = [tuple([k] if isinstance(k, int) else k) for k in out["modes"]]
        if out["threads"] is not None:
            _number(out, "threads", name, positive=True, integer=True)
    elif name == "output":
        if not isinstance(out["directory"], str):
            raise ConfigError("output.directory must be a path string")
        if not isinstance(out["formats"], list) or not set(out["formats"]) <= {"csv", "json"}:
            raise ConfigError("output.formats must be a list drawn from csv, json")
    elif name == "checks":
        if out["delta"] is not None:
            _number(out, "delta", name, positive=True)
        _number(out, "horizon", name, positive=True)
        _number(out, "branching_horizon", name, positive=True)
        hs = out["extinction_horizons"]
        if not isinstance(hs, list) or not all(isinstance(h, (int, float)) and h >= 0 for h in hs):
            raise ConfigError("checks.extinction_horizons must be a list of nonnegative times")
    elif name == "lemma":
        _number(out, "d", name, positive=True, integer=True)
        _number(out, "alpha", name, positive=True)
        _number(out, "gamma", name, positive=True)
        _number(out, "k_max", name, positive=True, integer=True)
        kn = out["k_norms"]
        if (not isinstance(kn, list) or len(kn) != 2 or not all(isinstance(v, int) for v in kn)
                or not 1 <= kn[0] <= kn[1] <= out["k_max"]):
            raise ConfigError("lemma.k_norms must be [first, last] with 1 <= first <= last <= k_max")
    return out


def _times(times, T, where):
    if times is None:
        return [float(T)]
    if not isinstance(times, list) or not times:
        raise ConfigError(f"{where} must be a nonempty list")
    out = []
    for t in times:
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not 0 <= t <= T:
            raise ConfigError(f"{where} entries must lie in [0, T]")
        out.append(float(t))
    return out


TOP_KEYS = {"model", "numerics", "mc", "output", "checks", "lemma"}


def parse_config(data: Any) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    _reject_unknown(data, TOP_KEYS, "config")
    model = _check_model(data.get("model"))
    blocks = {name: _check_block(name, data.get(name)) for name in DEFAULTS}
    return ExperimentConfig(model=model, raw=data, **blocks)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return parse_config(data)


# ---------------------------------------------------------------------------
# construction

def _initial_values(spec, modes, r):
    prof = spec["profile"]
    if prof == "zero":
        return None
    if prof == "modes":
        return _mode_list(spec["modes"], r, "model.initial")
    decay, phase = float(spec["decay"]), float(spec["phase"])

    def power(k):
        # Hermitian because the phase is odd in k
        val = np.exp(1j * phase * sum(k)) / max(1.0, norm(k)) ** decay
        return np.full(r, val / math.sqrt(r))

    return power


def _builder(m, cb, u0, f):
    name = m["name"]
    if name == "burgers":
        box = TruncationBox(m["d"], m["k_max"], m["exclude_zero"])
        return build_burgers(m["d"], m["alpha"], box, m["C_f"], cb, m["lambda0"], u0, f,
                             m["real_field"])
    if name == "ns2d":
        if m["d"] != 2:
            raise ConfigError("ns2d needs d = 2")
        return build_ns2d_vorticity(m["alpha"], TruncationBox(2, m["k_max"], True), cb, u0, f,
                                    m["real_field"])
    box = TruncationBox(m["d"], m["k_max"], True)
    return build_surface_growth(m["d"], m["alpha"], box, m["a1"], m["a2"], m["a3"], m["C_f"], cb,
                                u0, f, m["real_field"])


def build_system(cfg: ExperimentConfig) -> AbstractSystem:
    """Construct the model; ``ConstructionError`` passes through unchanged."""
    m = cfg.model
    if m["name"] == "scalar_ode":
        return build_scalar_quadratic_ode(float(m["u0"]))
    if m["name"] == "single_mode":
        return build_single_mode(m["lam"], m["p"], m["q"], m["chi0"], m["gamma"], m["C_f"], m["C_b"])
    r = m["d"] if m["name"] == "burgers" else 1
    cb = _minimal_cb(m) if m["C_b"] == "auto" else m["C_b"]
    f = None
    if m["forcing"] is not None:
        fs = m["forcing"]
        f = ForcingSpec(_mode_list(fs["modes"], r, "model.forcing"), fs["profile"], fs["rate"])
    init = m["initial"]
    u0 = _initial_values(init, None, r)
    system = _builder(m, cb, u0, f)
    target = init.get("sup_norm")
    if target is not None and init["profile"] != "zero":
        current = float(np.max(np.abs(system.chi0)))
        if current == 0:
            raise ConfigError("initial data vanishes on the box; cannot normalize")
        scale = target / current
        if callable(u0):
            base = u0
            u0 = lambda k: base(k) * scale  # noqa: E731
        else:
            u0 = {k: [v * scale for v in vals] for k, vals in u0.items()}
        system = _builder(m, cb, u0, f)
    return system


def _minimal_cb(m) -> float:
    """Smallest C_b keeping every death probability at least 0.05."""
    try:
        _builder(m, 1e-12, None, None)
        return 1.0  # no branch mass at all
    except ConstructionError as exc:
        if exc.suggested_C_b is None:
            raise
        return exc.suggested_C_b * (1 + 1e-12)
