"""Sum data-transmission-efficiency maximisation by block coordinate ascent.

Blocks: subchannels (dual subgradient on the time-sharing relaxation),
power (alternating water-filling / slack fixed point) and hover times (LP).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .blocks import (BcdResult, SolverConfig, TraceRow, ascent_step, assignment_feasible,
                     column_coefficients, initial_hover, one_hot, power_program,
                     scoring_rates)
from .kernels import LinearProgram, maximize_separable_concave, solve_lp
from .model import (Allocation, ConstraintSet, NumericalError, Scenario, SlackState,
                    check_feasibility, objective_sum, rate_table)
from .rates import slack_for

log = logging.getLogger(__name__)


@dataclass
class SubchannelResult:
    x: np.ndarray
    iterations: int
    converged: bool
    duals: dict


def allocate_subchannels_sum(power, hover, slack: SlackState, sc: Scenario,
                             cs: ConstraintSet, cfg: SolverConfig = SolverConfig()):
    """Subchannel block with power, hover time and slack frozen.

    Every subchannel goes to the user with the largest T R_a; the
    multipliers only decide whether the column is switched on at all.
    Iterates until the assignment repeats (feasible) or cycles, and returns
    the best feasible assignment seen.
    """
    N, U, G, K = sc.gain.shape
    score = hover[:, None, None] * scoring_rates(power, slack, sc, cs)
    owner = np.argmax(score, axis=1)                       # (N, G), lowest index on ties
    best = np.take_along_axis(score, owner[:, None, :], axis=1)[:, 0, :]

    interf, pw = column_coefficients(power, sc)            # (N,S,G), (N,G,K)
    energy = pw * hover[:, None, None]

    d_ref = max(float(np.max(best, initial=0.0)), 1e-300)
    step1 = cfg.step_scale * d_ref / np.array([cs.eps_p, float(np.mean(cs.e_com)), cs.p_max]) ** 2

    lam = np.zeros((N, sc.num_sat_users))
    mu = np.zeros(K)
    gam = np.zeros((N, K))
    seen = {}
    best_x, best_obj = np.zeros((N, G), dtype=bool), -np.inf
    prev = None
    converged = False
    t = 0
    for t in range(1, cfg.max_subgrad + 1):
        penalty = (np.einsum("ni,nig->ng", lam, interf)
                   + np.einsum("k,ngk->ng", mu, energy)
                   + np.einsum("nk,ngk->ng", gam, pw))
        active = (best - penalty) > 0
        feasible = assignment_feasible(active, power, hover, sc, cs)
        obj = float(np.sum(best[active]))
        if feasible and obj > best_obj:
            best_x, best_obj = active.copy(), obj
        key = active.tobytes()
        if prev is not None and np.array_equal(active, prev) and feasible:
            converged = True
            break
        if key in seen and seen[key] != t - 1:
            converged = True      # limit cycle
            break
        seen[key] = t
        prev = active

        a = active.astype(float)
        sg_lam = cs.eps_p - np.einsum("ng,nig->ni", a, interf)
        sg_mu = cs.e_com - np.einsum("ng,ngk->k", a, energy)
        sg_gam = cs.p_max - np.einsum("ng,ngk->nk", a, pw)
        lam = np.maximum(lam - step1[0] / t * sg_lam, 0.0)
        mu = np.maximum(mu - step1[1] / t * sg_mu, 0.0)
        gam = np.maximum(gam - step1[2] / t * sg_gam, 0.0)

    if not converged:
        log.warning("subchannel dual iteration hit %d iterations", cfg.max_subgrad)
    best_x = _repair(best_x, best, interf, energy, pw, cs)
    x = one_hot(owner, best_x, sc)
    return SubchannelResult(x, t, converged, {"lambda": lam, "mu": mu, "gamma": gam})


def _repair(active, value, interf, energy, pw, cs: ConstraintSet, rtol=1e-9):
    """Primal completion of the dual iterate: add columns that fit, then improving 1-swaps.

    The dual iteration only ranks columns by value against price, so a
    feasible set with a larger total can remain one swap away.
    """
    N, G = active.shape
    K = pw.shape[2]
    # usage matrix: rows are interference (N*S), energy (K) and power (N*K)
    rows_i = np.zeros((N, interf.shape[1], N, G))
    rows_i[np.arange(N), :, np.arange(N), :] = interf
    rows_p = np.zeros((N, K, N, G))
    rows_p[np.arange(N), :, np.arange(N), :] = pw.transpose(0, 2, 1)
    C = np.vstack([rows_i.reshape(-1, N * G), energy.reshape(N * G, K).T,
                   rows_p.reshape(-1, N * G)])
    cap = np.concatenate([np.full(N * interf.shape[1], cs.eps_p), cs.e_com,
                          np.full(N * K, cs.p_max)]) * (1 + rtol)
    a = active.ravel().copy()
    val = value.ravel()
    use = C @ a
    while True:
        add = ~a & (val > 0) & np.all(use[:, None] + C <= cap[:, None], axis=0)
        if add.any():
            j = int(np.argmax(np.where(add, val, -np.inf)))
            a[j] = True
            use += C[:, j]
            continue
        on, off = np.flatnonzero(a), np.flatnonzero(~a & (val > 0))
        if on.size == 0 or off.size == 0:
            break
        gain = val[off][None, :] - val[on][:, None]
        trial = use[:, None, None] - C[:, on][:, :, None] + C[:, off][:, None, :]
        ok = np.all(trial <= cap[:, None, None], axis=0) & (gain > 0)
        if not ok.any():
            break
        i, j = np.unravel_index(np.argmax(np.where(ok, gain, -np.inf)), ok.shape)
        a[on[i]], a[off[j]] = False, True
        use += C[:, off[j]] - C[:, on[i]]
    return a.reshape(N, G)


@dataclass
class PowerResult:
    power: np.ndarray
    slack: SlackState
    trace: list
    kkt: float


def allocate_power_sum(x, hover, sc: Scenario, cs: ConstraintSet,
                       cfg: SolverConfig = SolverConfig()):
    """Alternate the frozen-slack water-filling problem with the slack update.

    Starts from P = 0, w = 1 and stops once the relative change of D_a
    falls below ``cfg.eps_inner``.  Each frozen-slack solution is accepted
    through a line search on D_a under the exact slack, which is concave in
    P, so the iterates never lose value.
    """
    slack = SlackState.ones(sc)
    shape = (sc.num_slots, sc.num_subchannels, sc.num_uavs)
    power = np.zeros(shape)
    prev = 0.0
    trace = []
    kkt = 0.0

    def exact(p):
        return objective_sum(Allocation(x, p, hover), slack_for(p, sc), sc)

    for _ in range(cfg.max_power_iter):
        prog, lay = power_program(x, hover, slack, sc, cs)
        if prog is None:
            return PowerResult(np.zeros(shape), SlackState.ones(sc), [0.0], 0.0)
        res = maximize_separable_concave(prog, cfg.kernel_gap)
        kkt = res.kkt
        power, cur = ascent_step(exact, power, lay.scatter(res.p))
        slack = slack_for(power, sc)
        trace.append(cur)
        if cur > 0 and abs(1.0 - prev / cur) <= cfg.eps_inner:
            return PowerResult(power, slack, trace, kkt)
        prev = cur
    raise NumericalError("power allocation did not settle", trace=trace)


def _energy_rows(x, power):
    """(K, N) energy per unit hover time."""
    return np.einsum("nug,ngk->kn", x.astype(float), power)


def schedule_time_sum(x, power, slack: SlackState, sc: Scenario, cs: ConstraintSet):
    N = sc.num_slots
    c = np.einsum("nug,nug->n", x.astype(float),
                  np.where(x > 0, rate_table(power, slack, sc), 0.0))
    A = np.vstack([_energy_rows(x, power), np.ones((1, N))])
    b = np.concatenate([cs.e_com, [cs.t_total]])
    res = solve_lp(LinearProgram(c, A, b, 0.0, cs.t_max))
    if res.status != "optimal":
        raise RuntimeError(f"hover-time LP returned {res.status}")
    return res.x


def joint_sum(sc: Scenario, cs: ConstraintSet, cfg: SolverConfig = SolverConfig()) -> BcdResult:
    """Block coordinate ascent on the approximate sum efficiency.

    Each block update is kept only if it does not lower the objective, so
    the recorded trace is non-decreasing by construction.
    """
    N, U, G, K = sc.gain.shape
    hover = initial_hover(sc, cs)
    power = np.zeros((N, G, K))
    slack = SlackState.ones(sc)
    x = np.zeros((N, U, G), dtype=np.int8)

    def value(x_, p_, t_, s_):
        return objective_sum(Allocation(x_, p_, t_), s_, sc)

    def worst(x_, p_, t_):
        return check_feasibility(Allocation(x_, p_, t_), sc, cs).worst()

    cur = value(x, power, hover, slack)
    trace = [TraceRow(0, "init", cur, worst(x, power, hover))]
    converged = False
    r = 0
    for r in range(1, cfg.max_outer + 1):
        start = cur

        sub = allocate_subchannels_sum(power, hover, slack, sc, cs, cfg)
        v = value(sub.x, power, hover, slack)
        if v >= cur:
            x, cur = sub.x, v
        trace.append(TraceRow(r, "subchannel", cur, worst(x, power, hover)))

        pres = allocate_power_sum(x, hover, sc, cs, cfg)
        v = value(x, pres.power, hover, pres.slack)
        if v >= cur:
            power, slack, cur = pres.power, pres.slack, v
        trace.append(TraceRow(r, "power", cur, worst(x, power, hover)))

        new_hover = schedule_time_sum(x, power, slack, sc, cs)
        v = value(x, power, new_hover, slack)
        if v >= cur:
            hover, cur = new_hover, v
        trace.append(TraceRow(r, "time", cur, worst(x, power, hover)))

        if cur > 0 and abs(1.0 - start / cur) <= cfg.eps_outer:
            converged = True
            break
        if cur == 0 and r > 1:
            converged = True
            break

    return BcdResult(Allocation(x, power, hover), slack, trace, r, converged)
