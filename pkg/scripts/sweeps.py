"""Distance (3-8 km), interval (100-700 s) and gamma sweeps.

    python3 scripts/sweeps.py --axis distance -M 20 --workers 4
"""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from relnav.harness.campaign import sweep
from relnav.harness.scenario import Scenario

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_VALUES = {
    "distance": np.arange(3000.0, 8001.0, 500.0),
    "interval": np.arange(100.0, 701.0, 100.0),
    "gamma": [0.0, 1e1, 1e2, 1e3, 1e4],
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--axis", choices=sorted(DEFAULT_VALUES), required=True)
    ap.add_argument("--values", type=float, nargs="*")
    ap.add_argument("-M", type=int, default=20)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/sweeps")
    args = ap.parse_args()
    sc = Scenario.load(ROOT / "scenarios" / "rendezvous_4850m.json")
    sc = replace(sc, plan_path=str(ROOT / sc.plan_path), stop_at_transition=False,
                 stage2=replace(sc.stage2, enabled=False))
    values = args.values or list(DEFAULT_VALUES[args.axis])
    for row in sweep(sc, args.axis, values, args.M, workers=args.workers, out=args.out):
        rm = row["rmae_median_pct"]
        print(f"{args.axis}={row['value']:g}: RMAE median "
              f"{'none' if rm is None else f'{rm:.2f}%'}, deviation {row['deviation_m']:.1f} m")
    print(f"table: {Path(args.out) / f'sweep_{args.axis}.csv'}")


if __name__ == "__main__":
    main()
