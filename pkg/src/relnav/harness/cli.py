"""Command line entry point: ``relnav {design,run,mc,sweep,report}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from relnav.errors import RelNavError
from relnav.harness.campaign import SWEEP_AXES, monte_carlo, sweep
from relnav.harness.io import report, write_run
from relnav.harness.pipeline import design_plan, run_pipeline
from relnav.harness.scenario import PROFILES, Scenario
from relnav.input_design import InputPlan


def _scenario(args) -> Scenario:
    sc = Scenario.load(args.scenario) if args.scenario else Scenario()
    if args.seed is not None:
        sc = replace(sc, noise_seed=args.seed)
    if args.profile is not None:
        sc = replace(sc, profile=args.profile)
    return sc


def _plan(args, sc: Scenario) -> InputPlan | None:
    if args.plan and Path(args.plan).exists():
        return InputPlan.load(args.plan)
    return None


def cmd_design(args) -> dict:
    sc = _scenario(args)
    if args.provenance:
        sc = replace(sc, design=replace(sc.design, provenance=args.provenance))
    plan = design_plan(sc)
    path = Path(args.plan) if args.plan else Path(args.out) / "plan.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    plan.save(path)
    return {"plan": str(path), "provenance": plan.provenance, "objective": plan.objective_value}


def cmd_run(args) -> dict:
    sc = _scenario(args)
    res = run_pipeline(sc, _plan(args, sc), closed_loop=False if args.no_stage2 else None)
    out = write_run(res, args.out)
    return {"out": str(out), **json.loads((out / "summary.json").read_text())}


def cmd_mc(args) -> dict:
    sc = _scenario(args)
    summ = monte_carlo(sc, args.M, plan=_plan(args, sc), closed_loop=args.closed_loop,
                       workers=args.workers, out=args.out, keep_runs=False)
    return summ.to_dict()


def cmd_sweep(args) -> dict:
    sc = _scenario(args)
    rows = sweep(sc, args.axis, args.values, args.M, plan=_plan(args, sc), workers=args.workers,
                 out=args.out)
    return {"axis": args.axis, "rows": rows}


def cmd_report(args) -> dict:
    root = Path(args.out)
    dirs = [root] if (root / "summary.json").exists() else sorted(
        p.parent for p in root.glob("*/summary.json"))
    if not dirs:
        raise FileNotFoundError(f"no run summaries under {root}")
    return {"runs": [report(d, args.N_i) for d in dirs]}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON file (defaults built in)")
    common.add_argument("--seed", type=int, help="noise seed (first seed for campaigns)")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--plan", help="input plan JSON (read if present)")
    common.add_argument("--profile", choices=sorted(PROFILES), help="PSO / campaign size profile")

    ap = argparse.ArgumentParser(prog="relnav", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], help="optimise an offline input plan")
    p.add_argument("--provenance", choices=["AL", "MPC-only", "Dither"])
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("run", parents=[common], help="run the two-stage pipeline once")
    p.add_argument("--no-stage2", action="store_true", help="stop after the batch stage")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo campaign")
    p.add_argument("-M", type=int, help="number of runs (profile default)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--closed-loop", action="store_true", help="also run EKF + MPC")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("sweep", parents=[common], help="campaign per parameter value")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("-M", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", parents=[common], help="recompute metrics from stored traces")
    p.add_argument("--N-i", dest="N_i", type=int)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = args.func(args)
    except (RelNavError, ValueError, OSError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc),
               "code": getattr(exc, "code", None), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 2
    print(json.dumps(out, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
