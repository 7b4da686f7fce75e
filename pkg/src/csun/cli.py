"""Command-line entry point: ``csun gen | solve | sweep | coverage``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields

import numpy as np

from .bench import coverage_map
from .blocks import SolverConfig
from .channel import (ScenarioConfig, ScenarioFormatError, generate_scenario, load_scenario,
                      preset_constraints, save_scenario)
from .io import load_constraints, write_sweep, write_trace
from .maxmin_alloc import joint_maxmin
from .model import check_feasibility, dbm_to_watts, objective_min, objective_sum
from .sum_alloc import joint_sum
from .sweep import PARAMS, SweepConfig, run_sweep


def _scenario_config(path, preset, seed):
    kw = {}
    if path:
        with open(path) as fh:
            try:
                kw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        known = {f.name for f in fields(ScenarioConfig)}
        unknown = sorted(set(kw) - known)
        if unknown:
            raise ScenarioFormatError(f"{path}: unknown config fields {unknown}")
        if "area" in kw:
            kw["area"] = tuple(kw["area"])
        if isinstance(kw.get("users_per_slot"), list):
            kw["users_per_slot"] = tuple(kw["users_per_slot"])
    kw["seed"] = seed
    return ScenarioConfig.preset(preset, **kw)


def cmd_gen(a):
    sc = generate_scenario(_scenario_config(a.config, a.preset, a.seed))
    save_scenario(sc, a.out)
    print(f"wrote {a.out}: N={sc.num_slots} K={sc.num_uavs} G={sc.num_subchannels} "
          f"users={sc.num_users} sat_users={sc.num_sat_users}")


def _solve(objective, sc, cs, cfg):
    return (joint_sum if objective == "sum" else joint_maxmin)(sc, cs, cfg)


def cmd_solve(a):
    sc = load_scenario(a.scenario)
    cs = load_constraints(a.constraints, sc.num_uavs)
    res = _solve(a.objective, sc, cs, SolverConfig(max_outer=a.max_outer))
    if a.trace:
        write_trace(res.trace, a.trace, a.objective)
    rep = check_feasibility(res.alloc, sc, cs)
    summary = {"objective": a.objective, "outer_iters": res.iterations,
               "converged": res.converged,
               "D_a": objective_sum(res.alloc, res.slack, sc),
               "min_efficiency": objective_min(res.alloc, res.slack, sc),
               "feasible": rep.feasible, "worst_violation": rep.worst()}
    if a.out:
        with open(a.out, "w") as fh:
            json.dump({**summary, "x": res.alloc.x.tolist(), "power": res.alloc.power.tolist(),
                       "hover": res.alloc.hover.tolist()}, fh)
    print(json.dumps(summary))


def _values(text, param):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise SystemExit(f"--values: cannot parse {text!r}")
    if param in ("num_uavs", "num_subchannels"):
        vals = [int(v) for v in vals]
    return tuple(vals)


def cmd_sweep(a):
    ccfg = preset_constraints(a.preset, mc_samples=a.mc_samples)
    cfg = SweepConfig(a.param, _values(a.values, a.param), a.snapshots, a.seed,
                      ScenarioConfig.preset(a.preset), ccfg, workers=a.workers,
                      timing=not a.no_timing)
    rows = run_sweep(cfg)
    write_sweep(rows, a.out)
    print(f"wrote {len(rows)} rows to {a.out}")


def cmd_coverage(a):
    if a.scenario:
        sc = load_scenario(a.scenario)
    else:
        sc = generate_scenario(ScenarioConfig.preset(a.preset, seed=a.seed))
    if a.constraints:
        cs = load_constraints(a.constraints, sc.num_uavs)
    else:
        cs = preset_constraints(a.preset, eps_p_dbm=a.threshold_dbm).build(sc.num_uavs)
    res = _solve(a.objective, sc, cs, SolverConfig())
    try:
        nx, ny = (int(v) for v in a.grid.lower().split("x"))
    except ValueError:
        raise SystemExit(f"--grid: expected NXxNY, got {a.grid!r}")
    cov = coverage_map(res.alloc, sc, a.slot, (nx, ny), float(dbm_to_watts(a.threshold_dbm)))
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subchannel", "x_m", "y_m", "rx_dbm", "covered"])
        gx, gy = np.meshgrid(cov.xs, cov.ys)
        for g in range(cov.mask.shape[0]):
            rx = 10 * np.log10(np.maximum(cov.rx_power[g], 1e-300)) + 30
            for xv, yv, r, m in zip(gx.ravel(), gy.ravel(), rx.ravel(), cov.mask[g].ravel()):
                w.writerow([g, f"{xv:.3f}", f"{yv:.3f}", f"{r:.4f}", int(m)])
    share = cov.mask.mean(axis=(1, 2))
    print("covered fraction per subchannel: " + ", ".join(f"{s:.3f}" for s in share))


def build_parser():
    p = argparse.ArgumentParser(prog="csun", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a synthetic scenario file")
    g.add_argument("--config", help="JSON file with ScenarioConfig fields")
    g.add_argument("--preset", default="desk", choices=("desk", "paper"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run a joint solver on a scenario")
    s.add_argument("--objective", choices=("sum", "maxmin"), default="sum")
    s.add_argument("--scenario", required=True)
    s.add_argument("--constraints", required=True)
    s.add_argument("--trace", help="CSV file for the outer-loop trace")
    s.add_argument("--out", help="JSON file for the allocation")
    s.add_argument("--max-outer", type=int, default=50)
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="parameter sweep against the baseline")
    w.add_argument("--param", required=True, choices=PARAMS)
    w.add_argument("--values", required=True, help="comma-separated values")
    w.add_argument("--snapshots", type=int, default=10)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--preset", default="desk", choices=("desk", "paper"))
    w.add_argument("--mc-samples", type=int, default=10_000)
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--no-timing", action="store_true", help="write wall_ms as 0")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("coverage", help="coverage map of a solved scenario")
    c.add_argument("--threshold-dbm", type=float, default=-92.0)
    c.add_argument("--grid", default="200x200")
    c.add_argument("--scenario")
    c.add_argument("--constraints")
    c.add_argument("--preset", default="desk", choices=("desk", "paper"))
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--slot", type=int, default=0)
    c.add_argument("--objective", choices=("sum", "maxmin"), default="maxmin")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_coverage)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (ScenarioFormatError, ValueError, OSError) as exc:
        print(f"csun: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
