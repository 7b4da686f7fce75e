"""Sweep eps_p, K and G against the equal-split baseline and print mean efficiencies.

Usage: python scripts/reproduce_trends.py --outdir results --snapshots 10 --workers 4
"""
import argparse
from pathlib import Path

from csun.io import write_sweep
from csun.sweep import SweepConfig, run_sweep, summarize

SWEEPS = {"eps_p": (-92.0, -85.0, -77.0), "num_uavs": (2, 4, 6), "num_subchannels": (4, 8, 16)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--snapshots", type=int, default=10)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for param, values in SWEEPS.items():
        rows = run_sweep(SweepConfig(param, values, snapshots=args.snapshots, seed=args.seed,
                                     workers=args.workers))
        write_sweep(rows, out / f"sweep_{param}.csv")
        table = summarize(rows)
        print(f"\n{param}")
        print(f"{'value':>8} {'arm':>14} {'D_e':>10} {'D_min':>9}")
        for (value, arm), (d_e, d_min) in sorted(table.items()):
            print(f"{value:>8g} {arm:>14} {d_e:>10.2f} {d_min:>9.3f}")


if __name__ == "__main__":
    main()
