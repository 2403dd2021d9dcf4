"""Command-line front end: ``run``, ``profile`` and ``check``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 verification failure.
"""
import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, checks, config, kernels, profiles
from .results import COLUMNS, ResultTable, format_float
from .twin import (SPINUP_STEPS, STREAM_BACKGROUND, STREAM_OBSERVATION,
                   STREAM_REFERENCE, ConfigError, run_ensemble)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3

SEED_DERIVATION = {
    "generator": "numpy.random.default_rng(numpy.random.SeedSequence([base_seed, index, stream]))",
    "streams": {"reference": STREAM_REFERENCE, "background": STREAM_BACKGROUND,
                "observation": STREAM_OBSERVATION},
    "reference_index": "0 when reference = fixed, else the realization index",
    "spinup_steps": SPINUP_STEPS,
}
COUNTING = (
    "l counts cost evaluations including J(v0); kJ counts Jacobian evaluations "
    "including the one at v0; a run stops before any evaluation that would make "
    "kJ + l exceed tau_e; best cost is the lowest accepted iterate after v0 "
    "(the initial cost when no step was accepted)")


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def build_meta(cfg):
    return {
        "config": cfg.to_dict(),
        "seed_derivation": SEED_DERIVATION,
        "counting": COUNTING,
        "version": __version__,
        "backend": kernels.BACKEND,
        "columns": list(COLUMNS),
    }


def cmd_run(args):
    cfg = config.load(args.config)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.out is not None:
        cfg = replace(cfg, directory=args.out)
    if args.prefix is not None:
        cfg = replace(cfg, prefix=args.prefix)
    table = run_ensemble(cfg.twin, workers=cfg.workers)
    os.makedirs(cfg.directory, exist_ok=True)
    base = os.path.join(cfg.directory, cfg.prefix)
    table.write_csv(base + "_results.csv")
    _write_text(base + "_meta.json", json.dumps(build_meta(cfg), indent=2) + "\n")
    print(f"wrote {base}_results.csv ({len(table)} rows) and {base}_meta.json")
    return EXIT_OK


def profile_table(table, kind, tau_f=None):
    if not table.methods:
        raise ValueError("results file has no method rows")
    if kind == "accuracy":
        return profiles.accuracy_profile(table)
    return profiles.rmse_profile(table, tau_f=1e-3 if tau_f is None else tau_f)


def profile_csv(curve):
    lines = [",".join(["x"] + curve.methods)]
    for i, x in enumerate(curve.x_grid):
        vals = [format_float(x)] + [format_float(curve.fraction_per_method[m][i])
                                    for m in curve.methods]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def cmd_profile(args):
    if args.kind == "accuracy" and args.tau_f is not None:
        raise ConfigError("--tau-f applies to --kind rmse only")
    if args.tau_f is not None and not args.tau_f > 0:
        raise ConfigError("--tau-f must be positive")
    try:
        table = ResultTable.read_csv(args.results)
    except OSError as exc:
        raise ConfigError(f"{args.results}: cannot read results: {exc}") from None
    except (ValueError, csv.Error, KeyError, IndexError) as exc:
        raise ConfigError(f"{args.results}: malformed results file: {exc}") from None
    try:
        curve = profile_table(table, args.kind, args.tau_f)
    except ValueError as exc:
        raise ConfigError(f"{args.results}: {exc}") from None
    out_dir = args.out or os.path.dirname(os.path.abspath(args.results))
    prefix = args.prefix
    if prefix is None:
        stem = os.path.basename(args.results)
        stem = stem[:-len("_results.csv")] if stem.endswith("_results.csv") else os.path.splitext(stem)[0]
        prefix = f"{stem}_{args.kind}"
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, prefix + "_profile.csv")
    _write_text(path, profile_csv(curve))
    if curve.excluded:
        print(f"excluded realizations (no finite cost): {curve.excluded}")
    if curve.degenerate:
        print(f"degenerate realizations (J0 = J_t): {curve.degenerate}")
    print(f"wrote {path} ({len(curve.x_grid)} rows)")
    return EXIT_OK


def cmd_check(args):
    cfg = config.load(args.config)
    results = checks.run_checks(cfg.twin, n_problems=args.problems)
    for res in results:
        print(res.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fourdvar",
        description="Strong-constraint 4D-Var twin experiments with GN, LS and REG solvers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an ensemble and write results + metadata")
    run.add_argument("--config", required=True, help="YAML config or a *_meta.json")
    run.add_argument("--out", help="output directory (overrides output.directory)")
    run.add_argument("--workers", type=int, help="worker processes")
    run.add_argument("--prefix", help="file prefix (overrides output.prefix)")
    run.set_defaults(func=cmd_run)

    prof = sub.add_parser("profile", help="accuracy or RMSE profile from a results CSV")
    prof.add_argument("results", help="path to a *_results.csv")
    prof.add_argument("--kind", choices=("accuracy", "rmse"), default="accuracy")
    prof.add_argument("--tau-f", type=float, dest="tau_f",
                      help="solved tolerance for the RMSE profile (default 1e-3)")
    prof.add_argument("--out", help="output directory (default: next to the results)")
    prof.add_argument("--prefix", help="file prefix (default: <results stem>_<kind>)")
    prof.set_defaults(func=cmd_profile)

    chk = sub.add_parser("check", help="run the numerical verification suite")
    chk.add_argument("--config", required=True)
    chk.add_argument("--problems", type=int, default=5, help="random problems per check")
    chk.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
