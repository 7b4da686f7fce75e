"""Parameter sweeps comparing the two joint solvers with the equal baseline."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bench import baseline_equal
from .blocks import SolverConfig
from .channel import ConstraintConfig, ScenarioConfig, generate_scenario
from .maxmin_alloc import joint_maxmin
from .model import check_feasibility, objective_sum
from .rates import mc_objectives, slack_for
from .sum_alloc import joint_sum

PARAMS = ("eps_p", "num_uavs", "num_subchannels", "e_total")
ARMS = ("joint_sum", "joint_maxmin", "baseline")


@dataclass(frozen=True)
class SweepConfig:
    param: str
    values: tuple
    snapshots: int = 10
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=lambda: ScenarioConfig.preset("desk"))
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    arms: tuple = ARMS
    workers: int = 1
    timing: bool = True

    def __post_init__(self):
        if self.param not in PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}; choose from {PARAMS}")
        bad = [a for a in self.arms if a not in ARMS]
        if bad:
            raise ValueError(f"unknown arms {bad}")
        if self.snapshots < 1 or not self.values:
            raise ValueError("need at least one value and one snapshot")


@dataclass
class SweepRow:
    param: str
    value: float
    snapshot: int
    arm: str
    d_e: float
    d_min: float
    outer_iters: int
    wall_ms: int
    d_a: float = float("nan")
    feasible: bool = True


def _point(cfg: SweepConfig, value, snapshot):
    """Scenario and constraints of one (value, snapshot) point.

    The scenario seed depends only on (seed, snapshot), so every value of
    the swept parameter sees the same geometry draws.
    """
    scen_seed = int(np.random.SeedSequence([cfg.seed, snapshot]).generate_state(1)[0])
    scfg = replace(cfg.scenario, seed=scen_seed)
    ccfg = cfg.constraints
    if cfg.param == "eps_p":
        ccfg = replace(ccfg, eps_p_dbm=float(value))
    elif cfg.param == "e_total":
        ccfg = replace(ccfg, e_total=float(value))
    elif cfg.param == "num_uavs":
        scfg = replace(scfg, num_uavs=int(value))
    elif cfg.param == "num_subchannels":
        scfg = replace(scfg, num_subchannels=int(value))
    sc = generate_scenario(scfg)
    return sc, ccfg.build(sc.num_uavs), scen_seed


def run_point(cfg: SweepConfig, value, snapshot):
    sc, cs, mc_seed = _point(cfg, value, snapshot)
    rows = []
    for arm in cfg.arms:
        t0 = time.perf_counter()
        if arm == "baseline":
            alloc, iters = baseline_equal(sc, cs), 0
            slack = slack_for(alloc.power, sc)
        else:
            res = (joint_sum if arm == "joint_sum" else joint_maxmin)(sc, cs, cfg.solver)
            alloc, slack, iters = res.alloc, res.slack, res.iterations
        wall = int(round((time.perf_counter() - t0) * 1e3)) if cfg.timing else 0
        mc = mc_objectives(alloc, sc, cfg.constraints.mc_samples, mc_seed)
        rows.append(SweepRow(cfg.param, float(value), snapshot, arm, mc.d_e, mc.d_min, iters, wall,
                             objective_sum(alloc, slack, sc),
                             check_feasibility(alloc, sc, cs).feasible))
    return rows


def run_sweep(cfg: SweepConfig):
    """Rows ordered by (value, snapshot, arm) regardless of worker count."""
    jobs = [(v, s) for v in cfg.values for s in range(cfg.snapshots)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(run_point, [cfg] * len(jobs), *zip(*jobs)))
    else:
        parts = [run_point(cfg, v, s) for v, s in jobs]
    return [row for part in parts for row in part]


def summarize(rows):
    """Mean D_e and D_min per (value, arm)."""
    out = {}
    for r in rows:
        out.setdefault((r.value, r.arm), []).append((r.d_e, r.d_min))
    return {k: tuple(np.mean(v, axis=0)) for k, v in out.items()}
