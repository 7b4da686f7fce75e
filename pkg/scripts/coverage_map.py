"""Coverage of a solved desk snapshot on a ground grid, per subchannel and threshold.

Usage: python scripts/coverage_map.py --seed 0 --out coverage.npz
"""
import argparse

import numpy as np

from csun.bench import baseline_equal, coverage_map
from csun.channel import ScenarioConfig, generate_scenario, preset_constraints
from csun.maxmin_alloc import joint_maxmin
from csun.model import dbm_to_watts
from csun.sum_alloc import joint_sum


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--slot", type=int, default=0)
    ap.add_argument("--grid", type=int, default=200)
    ap.add_argument("--thresholds", type=float, nargs="+", default=[-100.0, -92.0, -85.0, -77.0])
    ap.add_argument("--out", default="coverage.npz")
    args = ap.parse_args()
    cfg = ScenarioConfig.preset("desk", seed=args.seed)
    sc = generate_scenario(cfg)
    cs = preset_constraints("desk").build(cfg.num_uavs)
    allocs = {"baseline": baseline_equal(sc, cs), "joint_sum": joint_sum(sc, cs).alloc,
              "joint_maxmin": joint_maxmin(sc, cs).alloc}
    saved = {}
    print(f"{'arm':>14} {'dBm':>6}  covered fraction per subchannel")
    for arm, alloc in allocs.items():
        for t in args.thresholds:
            cov = coverage_map(alloc, sc, slot=args.slot, grid=(args.grid, args.grid),
                               threshold=float(dbm_to_watts(t)))
            frac = cov.mask.mean(axis=(1, 2))
            print(f"{arm:>14} {t:>6g}  " + " ".join(f"{f:.3f}" for f in frac))
            saved[f"{arm}_{t:g}"] = cov.mask
        saved["xs"], saved["ys"] = cov.xs, cov.ys
    np.savez_compressed(args.out, **saved)
    print(f"masks written to {args.out}")


if __name__ == "__main__":
    main()
