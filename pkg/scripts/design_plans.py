"""Regenerate the cached desk-profile plans under scenarios/plans/.

    python3 scripts/design_plans.py [--profile {desk,paper}]
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from relnav.harness.pipeline import design_plan
from relnav.harness.scenario import Scenario

ROOT = Path(__file__).resolve().parents[1]
PLANS = {"AL": "al", "MPC-only": "mpc_only", "Dither": "dither"}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--profile", default="desk", choices=["desk", "paper"])
    ap.add_argument("--out", default=str(ROOT / "scenarios" / "plans"))
    args = ap.parse_args()
    base = Scenario.load(ROOT / "scenarios" / "rendezvous_4850m.json")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for prov, stem in PLANS.items():
        sc = replace(base, profile=args.profile, design=replace(base.design, provenance=prov))
        t = time.perf_counter()
        plan = design_plan(sc)
        path = out / f"{stem}_{args.profile}.json"
        plan.save(path)
        print(f"{prov:9s} J = {plan.objective_value:.6e}  ({time.perf_counter() - t:.1f} s) -> {path}")


if __name__ == "__main__":
    main()
