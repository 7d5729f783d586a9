"""Command-line front end.

Usage::

    nsesplit {validate,simulate,moments,diffs,rate,exceedance}
             [--config PATH] [--seed U64] [--workers N] [--out DIR] [--strict]

Exit codes: 0 success, 1 failure, 2 assumption warnings under ``--strict``.
"""
from __future__ import annotations

import argparse
import math
import platform
import sys
import time
from dataclasses import replace
from importlib import metadata
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import harness
from . import spectral as sp
from .checks import invariant_suite
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .noise import derive_seed, sample_path, validate_assumptions
from .reports import emit_plots, write_csv, write_json
from .scheme import SchemeBlowUp, run_scheme

__all__ = ["main", "run_cli", "build_parser"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nsesplit", description="Splitting scheme experiments for the stochastic 2D Navier-Stokes equations.")
    ap.add_argument("experiment", choices=EXPERIMENTS, help="experiment to run")
    ap.add_argument("--config", type=Path, help="JSON experiment config (defaults used when omitted)")
    ap.add_argument("--seed", type=int, help="master seed, overrides the config")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for Monte-Carlo chunks")
    ap.add_argument("--out", type=Path, help="output directory, overrides the config")
    ap.add_argument("--strict", action="store_true", help="treat assumption warnings as errors (exit 2)")
    return ap


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"artifact": pkg, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def _z_fn(z):
    if z == "log":
        return math.log
    c = float(z)
    return lambda n: c


# -- experiments ---------------------------------------------------------------


def _run_validate(cfg: ExperimentConfig, out: Path, workers: int) -> tuple[int, dict]:
    sc = cfg.scheme_config()
    rows = invariant_suite(sc)
    width = max(len(r["check"]) for r in rows)
    for r in rows:
        status = "pass" if r["passed"] else ("FAIL" if r["kind"] == "invariant" else "warn")
        print(f"  {r['check']:<{width}}  {status}  {r['value']:.3e} (tol {r['tolerance']:.1e})")
    write_csv(out / "report.csv", rows)
    failed = [r["check"] for r in rows if r["kind"] == "invariant" and not r["passed"]]
    return (1 if failed else 0), {"rows": rows, "failed": failed}


def _run_simulate(cfg: ExperimentConfig, out: Path, workers: int) -> tuple[int, dict]:
    sc = cfg.scheme_config()
    n = sc.n
    finest = cfg.finest_n or n * sc.m
    path = sample_path(sc.diffusion.n_components, finest, sc.T, derive_seed(cfg.master_seed, 0))
    try:
        traj = run_scheme(sc, path)
    except SchemeBlowUp as e:
        print(f"error: {e}", file=sys.stderr)
        return 1, {"blowup": str(e)}
    z = sp.FourierVelocityField(sc.grid, traj.grid_values)
    um = sp.FourierVelocityField(sc.grid, traj.u_minus)
    diss = np.concatenate([[0.0], np.cumsum(traj.diagnostics["u_dissipation_v"])])
    rows = []
    for k, t in enumerate(traj.times):
        rows.append({
            "k": k, "t": float(t),
            "z_h2": float(sp.h_norm_sq(z)[k]), "z_v2": float(sp.v_norm_sq(z)[k]), "z_x4": float(sp.x_norm4(z)[k]),
            "u_minus_h2": float(sp.h_norm_sq(um)[k]), "int_u_v2": float(diss[k]),
        })
    write_csv(out / "report.csv", rows)
    emit_plots(out / "report.csv", out / "plots", "norms", [n], ["z_h2", "z_v2"], x="t", logscale="y", ylabel="norm")
    if cfg.snapshots:
        (out / "fields").mkdir(exist_ok=True)
        for k in range(n + 1):
            (out / "fields" / f"z_{k:05d}.snap").write_bytes(sp.field_to_bytes(traj.field("grid_values", k)))
    return 0, {"rows": rows, "path_digest": traj.path_digest, "q": traj.q}


def _run_moments(cfg: ExperimentConfig, out: Path, workers: int):
    rep = harness.moment_estimates(cfg.scheme_config(), cfg.n_list, cfg.p, cfg.samples, cfg.master_seed,
                                   finest_n=cfg.finest_n, workers=workers)
    write_csv(out / "report.csv", rep.rows)
    emit_plots(out / "report.csv", out / "plots", "moments", rep.n_list,
               ["sup_E_y_h", "E_int_u", "sup_E_u_v", "E_int_au"], logscale="x")
    for key, u in rep.uniform.items():
        print(f"  {key:<16} max/min {u['max_over_min']:.3f}  kendall tau {u['kendall_tau']:+.3f}")
    return 0, rep


def _run_diffs(cfg: ExperimentConfig, out: Path, workers: int):
    rep = harness.diff_estimates(cfg.scheme_config(), cfg.n_list, cfg.samples, cfg.master_seed, p=max(cfg.p, 1),
                                 finest_n=cfg.finest_n, workers=workers)
    write_csv(out / "report.csv", rep.rows)
    emit_plots(out / "report.csv", out / "plots", "diffs", rep.n_list, ["uy_h", "uy_v", "zu_2p_sup", "zuzy_v"],
               slopes=rep.slopes, ylabel="mean-square difference")
    for key, (s, _, hw) in rep.slopes.items():
        print(f"  slope {key:<10} {s:+.3f} +/- {hw:.3f}")
    return 0, rep


def _run_rate(cfg: ExperimentConfig, out: Path, workers: int, exceedance: bool = False):
    rep = harness.rate_experiment(cfg.scheme_config(), cfg.n_list, cfg.n_ref, cfg.samples, cfg.master_seed,
                                  M=cfg.M, percentile=cfg.percentile, halving_check=cfg.halving_check, workers=workers)
    if exceedance:
        harness.exceedance_curve(rep, _z_fn(cfg.z), "z")
    write_csv(out / "report.csv", rep.rows)
    emit_plots(out / "report.csv", out / "plots", "rate", rep.n_list, ["sup_grid", "int_v"], slopes=rep.slopes,
               ylabel="localized error")
    if exceedance:
        emit_plots(out / "report.csv", out / "plots", "exceedance", rep.n_list, ["exceed_z"], logscale="x",
                   ylabel="P(e_n >= z(n)/sqrt(n))")
    print(f"  M = {rep.M:.6g}, retained fraction {min(rep.column('retained')):.3f} (worst n)")
    for key, (s, _, hw) in rep.slopes.items():
        print(f"  slope {key:<10} {s:+.3f} +/- {hw:.3f}")
    return 0, rep


_RUNNERS = {
    "validate": _run_validate,
    "simulate": _run_simulate,
    "moments": _run_moments,
    "diffs": _run_diffs,
    "rate": _run_rate,
    "exceedance": lambda c, o, w: _run_rate(c, o, w, exceedance=True),
}


def _assumption_order(cfg: ExperimentConfig) -> int:
    # rate experiments need eighth moments of the initial data
    return 4 if cfg.experiment in ("rate", "exceedance") else cfg.p


def run_cli(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run the experiment and write its outputs; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = replace(cfg, experiment=args.experiment)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg = replace(cfg, out=str(args.out))
        if args.workers < 1:
            raise ConfigError("--workers", "must be >= 1")
        sc = cfg.scheme_config()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    checks = validate_assumptions(sc.diffusion, sc.coriolis, sc.eps, _assumption_order(cfg))
    for w in checks.warnings:
        print(f"WARNING: assumption {w}", file=sys.stderr)
    if args.strict and checks.warnings:
        print("error: assumption warnings with --strict", file=sys.stderr)
        return 2

    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        print(f"error: output directory {out} is not writable: {e.strerror}", file=sys.stderr)
        return 1
    manifest = {"config": cfg.to_dict(), "versions": _versions(), "master_seed": cfg.master_seed,
                "assumption_warnings": checks.warnings}
    write_json(out / "manifest.json", manifest)

    print(f"nsesplit {cfg.experiment}: seed {cfg.master_seed}, output {out}")
    start = time.perf_counter()
    try:
        code, report = _RUNNERS[cfg.experiment](cfg, out, args.workers)
    except (ValueError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    write_json(out / "report.json", {"experiment": cfg.experiment, "report": report})
    print(f"done in {time.perf_counter() - start:.1f} s")
    return code


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
