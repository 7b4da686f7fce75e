"""Outer-loop traces of both joint solvers on desk-preset snapshots.

Usage: python scripts/convergence_trace.py --seeds 0 1 2
"""
import argparse

from csun.channel import ScenarioConfig, generate_scenario, preset_constraints
from csun.maxmin_alloc import joint_maxmin
from csun.sum_alloc import joint_sum


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--preset", default="desk", choices=("desk", "paper"))
    args = ap.parse_args()
    for seed in args.seeds:
        cfg = ScenarioConfig.preset(args.preset, seed=seed)
        sc = generate_scenario(cfg)
        cs = preset_constraints(args.preset).build(cfg.num_uavs)
        for name, solver in (("sum", joint_sum), ("maxmin", joint_maxmin)):
            res = solver(sc, cs)
            print(f"seed {seed} {name}: {res.iterations} outer iterations, "
                  f"converged={res.converged}")
            for row in res.trace:
                print(f"  {row.outer_iter:>3} {row.phase:>12} {row.value:>14.6f} "
                      f"{row.worst_violation:>10.2e}")


if __name__ == "__main__":
    main()
