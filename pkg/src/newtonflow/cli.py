"""Command-line front end.

Subcommands:
  zoo list                       catalog of registered problems
  run <problem> [flags]          integrate + analyze + persist one run
  verify [--suite]               full certificate suite, summary table
  rates <trajectory.csv> --x-star  rate classification of a stored run
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import fit_rate
from .errors import ConfigError, NewtonFlowError
from .io import load_config_file, merged_registry, parse_kv_text, read_trajectory_csv
from .runner import run_experiment, verify_all
from .zoo import zoo_list


def _fail(exc: Exception, code: int = 3) -> int:
    sys.stderr.write(f"error={type(exc).__name__} detail={exc}\n")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="newtonflow",
        description="Integrate nonsmooth Newton-like descent flows and verify "
                    "their convergence certificates.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_zoo = sub.add_parser("zoo", help="problem registry commands")
    zoo_sub = p_zoo.add_subparsers(dest="zoo_command", required=True)
    p_list = zoo_sub.add_parser("list", help="print the problem catalog")
    p_list.add_argument("--registry", help="extension file with extra problems")

    p_run = sub.add_parser("run", help="run one problem")
    p_run.add_argument("problem")
    p_run.add_argument("--h", dest="step_h", type=float, help="time step")
    p_run.add_argument("--t-end", dest="t_end", type=float, help="horizon")
    p_run.add_argument("--selection", help="min_norm | lexicographic | "
                                           "fixed_index:K | sign_bias:+ | sign_bias:-")
    p_run.add_argument("--mode", choices=["direct", "homotopy"])
    p_run.add_argument("--seed", type=int, help="seed for sampled certificates")
    p_run.add_argument("--out", default="runs", help="output base directory")
    p_run.add_argument("--x0", help="comma-separated start point")
    p_run.add_argument("--config", help="flat key=value config file")
    p_run.add_argument("--registry", help="extension file with extra problems")
    p_run.add_argument("--no-figures", action="store_true")

    p_verify = sub.add_parser("verify", help="run the certificate suite")
    p_verify.add_argument("--suite", default="default")
    p_verify.add_argument("--out", default=None, help="write summaries and run outputs here")
    p_verify.add_argument("--registry", help="extension file with extra problems")
    p_verify.add_argument("--figures", action="store_true")
    p_verify.add_argument("--jobs", type=int, default=4)

    p_rates = sub.add_parser("rates", help="classify the decay rate of a stored trajectory")
    p_rates.add_argument("trajectory", help="trajectory.csv from a previous run")
    p_rates.add_argument("--x-star", required=True, help="comma-separated reference point")
    p_rates.add_argument("--quantity", choices=["distance", "value_gap"],
                         default="distance")
    p_rates.add_argument("--json", dest="as_json", action="store_true")

    args = parser.parse_args(argv)
    try:
        if args.command == "zoo":
            return _cmd_list(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "rates":
            return _cmd_rates(args)
    except ConfigError as exc:
        return _fail(exc, code=2)
    except NewtonFlowError as exc:
        return _fail(exc, code=3)
    except (KeyError, FileNotFoundError, ValueError) as exc:
        return _fail(exc, code=2)
    return 0


def _cmd_list(args) -> int:
    rows = zoo_list(merged_registry(args.registry))
    if not rows:
        print("(empty catalog)")
        return 0
    w = max(len(r["name"]) for r in rows)
    print(f"{'name':<{w}}  dim  regime       operator")
    for r in rows:
        print(f"{r['name']:<{w}}  {r['dimension']:>3}  {r['regime']:<11}  {r['operator']}")
    return 0


def _cmd_run(args) -> int:
    registry = merged_registry(args.registry)
    overrides = {}
    if args.config:
        cfg_kv = parse_kv_text(Path(args.config).read_text())
        overrides.update(cfg_kv)
    for key in ("step_h", "t_end", "selection", "mode", "seed"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    x0 = None
    if args.x0:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    result = run_experiment(
        args.problem, overrides=overrides, x0=x0, out_base=args.out,
        registry=registry, render_figures=not args.no_figures,
    )
    print(f"run written to {result.out_dir}")
    for g in result.gates:
        status = "PASS" if g.passed else ("FAIL" if g.gated else "fail*")
        print(f"  {status:<6} {g.check}: {g.detail}")
    if result.passed:
        print("all gated certificates passed")
        return 0
    failed = [g.check for g in result.gates if g.gated and not g.passed]
    sys.stderr.write(f"error=CertificateFailure detail={','.join(failed)}\n")
    return 1


def _cmd_verify(args) -> int:
    summary = verify_all(
        suite=args.suite, out_base=args.out,
        registry=merged_registry(args.registry),
        render_figures=args.figures, jobs=args.jobs,
    )
    print(summary.table())
    if summary.passed:
        return 0
    reasons = sorted({f"{n}:{e.split(':')[0]}" for n, e in summary.errors})
    detail = ",".join(reasons) if reasons else "gated-certificate-failures"
    sys.stderr.write(f"error=VerificationFailure detail={detail}\n")
    return 1


def _cmd_rates(args) -> int:
    traj = read_trajectory_csv(args.trajectory)
    x_star = np.array([float(v) for v in args.x_star.split(",")])
    fit = fit_rate(traj, x_star, quantity=args.quantity)
    if args.as_json:
        print(json.dumps(fit.as_dict(), indent=2, sort_keys=True))
    else:
        print(f"regime: {fit.regime}")
        for key, val in fit.as_dict().items():
            if key != "regime" and val is not None:
                print(f"  {key}: {val}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
