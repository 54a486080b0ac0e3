"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 statistical failure in ``compare``.  Errors are printed to stderr as one
JSON object.  CSV bodies depend only on the config and the seed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, build_system, load_config
from .estimate import (
    THREADS_ENV, EstimationFailure, estimate_comparison, estimate_mode, estimate_pruned,
)
from .models import ConstructionError, validate, small_data_global_check
from .modes import DomainError, bound_sweep
from .solvers import (
    NotConverged, SchemeInstability, solve_comparison, solve_mild_picard, solve_semi_implicit,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_STATISTICAL = 0, 2, 3, 4
Z_LIMIT = 4.0


class StatisticalFailure(RuntimeError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


class Run:
    """Output directory, manifest bookkeeping and deterministic CSV writing."""

    def __init__(self, cfg: ExperimentConfig, command: str, out: Path, seed: int, threads: int):
        self.cfg = cfg
        self.command = command
        self.out = out
        self.seed = seed
        self.threads = threads
        self.files: list[str] = []
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        out.mkdir(parents=True, exist_ok=True)

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        path = self.out / name
        path.write_text(buf.getvalue())
        self.files.append(name)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        self.files.append(name)
        return path

    def manifest(self, status: int) -> Path:
        data = {
            "command": self.command,
            "config_hash": self.cfg.hash(),
            "version": __version__,
            "seed": self.seed,
            "threads": self.threads,
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "exit_code": status,
            "outputs": self.files,
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(data, indent=2) + "\n")
        return path


def _k_header(d):
    return [f"k{j + 1}" for j in range(d)]


def _value_header(prefix, r):
    if r == 1:
        return [f"{prefix}_re", f"{prefix}_im"]
    return [c for j in range(r) for c in (f"{prefix}_re_{j}", f"{prefix}_im_{j}")]


def _value_cells(v):
    return [c for z in np.asarray(v).reshape(-1) for c in (z.real, z.imag)]


def _modes(cfg, system):
    sel = cfg.mc["modes"]
    if sel == "all":
        return list(system.modes)
    for k in sel:
        system.position(k)
    return sel


def _mc_times(cfg):
    return cfg.mc["times"] if cfg.mc["times"] is not None else cfg.numerics["times"]


EST_COLUMNS = ["se", "ci99", "n_samples", "n_excluded", "stable_flag"]


def _estimate_row(system, rep):
    return [system.name, *rep.mode, rep.t, rep.level, *_value_cells(rep.mean), rep.se,
            float(np.max(rep.ci99)), rep.n_samples, rep.n_excluded, rep.stable]


def _estimate_header(system):
    return (["model", *_k_header(len(system.modes[0])), "t", "n_level",
             *_value_header("mean", system.r), *EST_COLUMNS])


# ---------------------------------------------------------------------------
# commands

def cmd_validate(cfg, run: Run) -> int:
    system = build_system(cfg)
    diag = validate(system)
    lines = [f"model              {system.name}", f"modes              {system.n_modes}",
             f"pairs              {len(system.pair_q)}", f"C_b                {system.C_b!r}",
             diag.summary()]
    delta = cfg.checks["delta"]
    if delta is not None:
        per_mode, ok = small_data_global_check(system, delta, cfg.checks["horizon"])
        lines.append(f"globex(delta={delta!r}) {str(ok).lower()} "
                     f"({int(per_mode.sum())}/{len(per_mode)} modes pass)")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    run.write_text("diagnostics.txt", text)
    return EXIT_OK


def _picard(cfg, system):
    n = cfg.numerics
    return solve_mild_picard(system, n["T"], n["dt"], n["tol"], n["max_iter"], n["blowup_threshold"])


def cmd_solve_det(cfg, run: Run) -> int:
    system = build_system(cfg)
    n = cfg.numerics
    picard = _picard(cfg, system)
    family = solve_semi_implicit(system, n["levels"], n["T"], n["dt"], n["pruning"],
                                 n["blowup_threshold"])
    comp = solve_comparison(system, n["T"], n["dt"], n["blowup_threshold"])
    d = len(system.modes[0])
    head = ["model", *_k_header(d), "t", *_value_header("value", system.r)]
    times = n["times"]
    run.write_csv("trajectory.csv", head,
                  ([system.name, *k, t, *_value_cells(picard.at(t)[i])]
                   for t in times for i, k in enumerate(system.modes)))
    run.write_csv("scheme.csv", ["model", *_k_header(d), "t", "level", *_value_header("value", system.r)],
                  ([system.name, *k, t, lev, *_value_cells(family.levels[lev].at(t)[i])]
                   for lev in range(len(family.levels)) for t in times
                   for i, k in enumerate(system.modes)))
    run.write_csv("comparison.csv", ["model", *_k_header(d), "t", "value"],
                  ([system.name, *k, t, float(comp.at(t)[i, 0])]
                   for t in times for i, k in enumerate(system.modes)))
    print(f"picard converged in {picard.iterations} iterations (dt={picard.dt!r}, "
          f"residual {picard.residual:.3e}); comparison blow-up: {comp.blowup_time}")
    return EXIT_OK


def cmd_solve_mc(cfg, run: Run) -> int:
    system = build_system(cfg)
    mc = cfg.mc
    reps = [estimate_mode(system, k, t, mc["n_samples"], run.seed, mc["budget"], run.threads)
            for t in _mc_times(cfg) for k in _modes(cfg, system)]
    run.write_csv("estimates.csv", _estimate_header(system), (_estimate_row(system, r) for r in reps))
    untrusted = sum(not r.trusted for r in reps)
    print(f"{len(reps)} estimates written; {untrusted} untrusted (budget exclusions > 0.1%)")
    return EXIT_OK


def cmd_prune_study(cfg, run: Run) -> int:
    system = build_system(cfg)
    mc, n = cfg.mc, cfg.numerics
    levels = mc["prune_levels"]
    family = solve_semi_implicit(system, levels[-1], n["T"], n["dt"], n["pruning"],
                                 n["blowup_threshold"])
    head = _estimate_header(system) + [*_value_header("det", system.r), "z"]
    rows = []
    for t in _mc_times(cfg):
        for k in _modes(cfg, system):
            i = system.position(k)
            for lev in levels:
                rep = estimate_pruned(system, k, t, lev, mc["n_samples"], run.seed, mc["budget"],
                                      run.threads, n["pruning"])
                det = family.levels[lev].at(t)[i]
                rows.append(_estimate_row(system, rep) + [*_value_cells(det), rep.z_score(det)])
    run.write_csv("prune_study.csv", head, rows)
    print(f"{len(rows)} pruned estimates written")
    return EXIT_OK


def cmd_compare(cfg, run: Run) -> int:
    system = build_system(cfg)
    mc = cfg.mc
    picard = _picard(cfg, system)
    head = _estimate_header(system) + [*_value_header("picard", system.r), "z"]
    rows, worst = [], 0.0
    for t in _mc_times(cfg):
        ref = picard.at(t)
        for k in _modes(cfg, system):
            rep = estimate_mode(system, k, t, mc["n_samples"], run.seed, mc["budget"], run.threads)
            z = rep.z_score(ref[system.position(k)])
            worst = max(worst, z)
            rows.append(_estimate_row(system, rep) + [*_value_cells(ref[system.position(k)]), z])
    run.write_csv("compare.csv", head, rows)
    print(f"{len(rows)} rows; max |z| = {worst:.3f}")
    if not worst < Z_LIMIT:
        raise StatisticalFailure(f"max |z| = {worst:.3f} is not below {Z_LIMIT}")
    return EXIT_OK


def cmd_integrability(cfg, run: Run) -> int:
    system = build_system(cfg)
    mc, n = cfg.mc, cfg.numerics
    comp = solve_comparison(system, n["T"], n["dt"], n["blowup_threshold"])
    head = ["model", *_k_header(len(system.modes[0])), "t", "comparison_det", "blowup_time",
            "mc_mean", "se", "n_samples", "n_excluded", "max_abs", "stable_flag"]
    rows = []
    for t in _mc_times(cfg):
        for k in _modes(cfg, system):
            rep = estimate_comparison(system, k, t, mc["n_samples"], run.seed, mc["budget"],
                                      run.threads)
            det = float(comp.at(t)[system.position(k), 0])
            blow = comp.blowup_time if comp.blowup_time is not None else math.inf
            rows.append([system.name, *k, t, det, blow, rep.mean[0].real, rep.se, rep.n_samples,
                         rep.n_excluded, rep.max_abs, rep.stable])
    run.write_csv("integrability.csv", head, rows)
    print(f"comparison blow-up time: {comp.blowup_time}; "
          f"unstable estimates: {sum(not r[-1] for r in rows)}/{len(rows)}")
    return EXIT_OK


def cmd_lemma_check(cfg, run: Run) -> int:
    lm = cfg.lemma
    lo, hi = lm["k_norms"]
    rows = bound_sweep(lm["alpha"], lm["gamma"], lm["d"], lm["k_max"], range(lo, hi + 1))
    const = max(r[3] for r in rows)
    run.write_csv("lemma.csv", ["d", "alpha", "gamma", "k_max", "k_norm", "sum", "shape", "ratio"],
                  ([lm["d"], lm["alpha"], lm["gamma"], lm["k_max"], k[0], s, b, ratio]
                   for k, s, b, ratio in rows))
    print(f"max ratio (recorded constant) = {const!r}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve-det": cmd_solve_det,
    "solve-mc": cmd_solve_mc,
    "prune-study": cmd_prune_study,
    "compare": cmd_compare,
    "integrability": cmd_integrability,
    "lemma-check": cmd_lemma_check,
}


def _parser():
    ap = argparse.ArgumentParser(prog="branchrep", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="YAML experiment config")
    ap.add_argument("--seed", type=int, default=None, help="overrides mc.seed")
    ap.add_argument("--out", default=None, help="output directory (overrides output.directory)")
    ap.add_argument("--threads", type=int, default=None,
                    help=f"worker threads (default: ${THREADS_ENV} or 1); never changes results")
    return ap


def _error(kind, exc, code) -> int:
    payload = {"error": kind, "message": str(exc), "exit_code": code}
    for attr in ("suggested_C_b", "residual", "level", "time"):
        v = getattr(exc, attr, None)
        if v is not None:
            payload[attr] = v if not isinstance(v, float) or math.isfinite(v) else str(v)
    if getattr(exc, "mode", None) is not None:
        payload["mode"] = list(exc.mode)
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.mc["seed"] = args.seed
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG)
    threads = args.threads or cfg.mc["threads"] or int(os.environ.get(THREADS_ENV, "1") or 1)
    out = Path(args.out or cfg.output["directory"])
    run = Run(cfg, args.command, out, cfg.mc["seed"], threads)
    try:
        code = COMMANDS[args.command](cfg, run)
    except (ConfigError, ConstructionError, DomainError) as exc:
        code = _error("config", exc, EXIT_CONFIG)
    except (NotConverged, SchemeInstability, EstimationFailure) as exc:
        code = _error("numerical", exc, EXIT_NUMERICAL)
    except StatisticalFailure as exc:
        code = _error("statistical", exc, EXIT_STATISTICAL)
    run.manifest(code)
    return code


if __name__ == "__main__":
    sys.exit(main())
