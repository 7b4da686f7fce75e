"""Equal-allocation baseline, exhaustive assignment oracle and coverage maps."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .blocks import assignment_feasible, probe_power
from .channel import fspl_db
from .maxmin_alloc import initial_owner
from .model import (Allocation, ConstraintSet, Scenario, SlackState, dbm_to_watts,
                    energy_per_uav, leakage_per_slot, rate_table)
from .rates import slack_for

MAX_ASSIGNMENTS = 1_000_000


def baseline_equal(sc: Scenario, cs: ConstraintSet) -> Allocation:
    """Coverage-first subchannels, equal hover times and equal power split.

    Each UAV splits p_max evenly over the assigned subchannels of a slot;
    the whole power tensor is then scaled down by the smallest common
    factor that satisfies the interference and energy rows.
    """
    N, U, G, K = sc.gain.shape
    hover = np.full(N, min(cs.t_max, cs.t_total / N))
    probe = probe_power(sc, cs)
    score = hover[:, None, None] * rate_table(probe, slack_for(probe, sc), sc)
    x = np.zeros((N, U, G), dtype=np.int8)
    for n, un in enumerate(sc.users_per_slot):
        if un <= G:
            owner = initial_owner(score[n, :un])
        else:
            owner = np.argmax(score[n, :un], axis=0)
        x[n, owner, np.arange(G)] = 1
    active = x.sum(axis=1) > 0
    count = active.sum(axis=1)
    share = np.where(count > 0, cs.p_max / np.maximum(count, 1), 0.0)
    power = np.where(active[:, :, None], share[:, None, None], 0.0) * np.ones(K)
    power = np.where(sc.gain.max(axis=1) > 0, power, 0.0)   # UAVs with no path carry nothing

    alloc = Allocation(x, power, hover)
    leak = leakage_per_slot(alloc, sc).max(initial=0.0)
    energy = energy_per_uav(alloc)
    scale = 1.0
    if leak > cs.eps_p:
        scale = min(scale, cs.eps_p / leak)
    ratio = np.where(energy > 0, cs.e_com / np.where(energy > 0, energy, 1.0), np.inf)
    scale = min(scale, float(ratio.min()))
    return alloc.replace(power=power * scale)


def baseline_slack(alloc: Allocation, sc: Scenario) -> SlackState:
    return slack_for(alloc.power, sc)


@dataclass
class BruteForceResult:
    x: np.ndarray
    value: float
    searched: int


def brute_force_assignment(sc: Scenario, cs: ConstraintSet, power, hover, slack: SlackState,
                           objective="sum", enforce_relaxed_rows=True):
    """Exhaustive search over exclusive assignments with P, T and w frozen.

    Every subchannel of every slot is either idle or given to one real
    user.  The max-min objective only admits assignments covering every
    user.  With ``enforce_relaxed_rows`` the interference, energy and
    power rows are checked for each candidate.
    """
    if objective not in ("sum", "maxmin"):
        raise ValueError(f"objective must be 'sum' or 'maxmin', not {objective!r}")
    N, U, G, K = sc.gain.shape
    sizes = sc.users_per_slot
    space = 1
    for un in sizes:
        space *= (un + 1) ** G
    if space > MAX_ASSIGNMENTS:
        raise ValueError(f"search space {space} exceeds {MAX_ASSIGNMENTS} assignments")
    value = hover[:, None, None] * rate_table(power, slack, sc)           # (N, U, G)

    choices = [range(-1, sizes[n]) for n in range(N) for _ in range(G)]
    best_x, best_v, count = None, -np.inf, 0
    for combo in itertools.product(*choices):
        owner = np.array(combo).reshape(N, G)
        count += 1
        if objective == "maxmin":
            cover = all(np.all(np.isin(np.arange(sizes[n]), owner[n])) for n in range(N))
            if not cover:
                continue
        active = owner >= 0
        if enforce_relaxed_rows and not assignment_feasible(active, power, hover, sc, cs):
            continue
        n_i, g_i = np.nonzero(active)
        per = np.zeros((N, U))
        np.add.at(per, (n_i, owner[n_i, g_i]), value[n_i, owner[n_i, g_i], g_i])
        v = per.sum() if objective == "sum" else per[sc.user_mask].min()
        if v > best_v:
            best_v = float(v)
            best_x = np.zeros((N, U, G), dtype=np.int8)
            best_x[n_i, owner[n_i, g_i], g_i] = 1
    if best_x is None:
        return BruteForceResult(None, -np.inf, count)
    return BruteForceResult(best_x, best_v, count)


@dataclass
class CoverageMap:
    xs: np.ndarray
    ys: np.ndarray
    rx_power: np.ndarray        # (G, ny, nx) watts
    mask: np.ndarray            # (G, ny, nx)
    threshold: float


def received_power(points, uav_pos, power_gk, freq, atten_db_per_km=0.0):
    """(G, P) summed received power at ground points from every UAV."""
    d = np.linalg.norm(points[:, None, :] - uav_pos[None, :, :], axis=-1)      # (P, K)
    l2 = 10.0 ** (-np.asarray(fspl_db(np.maximum(d, 1e-3), freq, atten_db_per_km)) / 10.0)
    return np.asarray(power_gk) @ l2.T


def coverage_map(alloc: Allocation, sc: Scenario, slot=0, grid=(200, 200),
                 threshold=float(dbm_to_watts(-92.0)), extent=None):
    """Grid of ground points whose received power on a subchannel exceeds ``threshold``.

    ``extent`` is (x0, x1, y0, y1) in metres; by default a 10 km square
    centred under the swarm of ``slot``.
    """
    if sc.uav_pos is None:
        raise ValueError("coverage maps need UAV positions in the scenario")
    uav = sc.uav_pos[slot]
    if extent is None:
        cx, cy = uav[:, :2].mean(axis=0)
        extent = (cx - 5e3, cx + 5e3, cy - 5e3, cy + 5e3)
    nx, ny = grid
    xs = np.linspace(extent[0], extent[1], nx)
    ys = np.linspace(extent[2], extent[3], ny)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=-1)
    p_gk = alloc.power[slot] * (alloc.x[slot].sum(axis=0) > 0)[:, None]
    rx = received_power(pts, uav, p_gk, sc.carrier_freq, sc.atten_db_per_km)
    rx = rx.reshape(-1, ny, nx)
    return CoverageMap(xs, ys, rx, rx > threshold, threshold)
