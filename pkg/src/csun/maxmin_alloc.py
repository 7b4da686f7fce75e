"""Minimum data-transmission-efficiency maximisation by block coordinate ascent.

Blocks: greedy subchannel reassignment towards the worst-off user, max-min
power allocation (epigraph barrier / slack fixed point) and an epigraph LP
for the hover times.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .blocks import (BcdResult, SolverConfig, TraceRow, ascent_step, initial_hover,
                     minrow_program,
                     scoring_rates)
from .kernels import LinearProgram, maximize_minrow_concave, solve_lp
from .model import (Allocation, ConstraintSet, NumericalError, Scenario, SlackState,
                    check_feasibility, objective_min, rate_table)
from .rates import slack_for

log = logging.getLogger(__name__)


def initial_owner(value):
    """Coverage-first initial assignment for one slot.

    ``value`` is the (U, G) table of per-subchannel efficiencies.  Users
    first receive one subchannel each through a bottleneck matching (the
    largest smallest matched value, ties broken by the largest sum); every
    leftover subchannel then goes, one at a time, to the currently
    worst-off user, who takes its best remaining subchannel.
    """
    value = np.asarray(value, dtype=float)
    U, G = value.shape
    if G < U:
        raise ValueError(f"{U} users cannot each get one of {G} subchannels")
    rows, cols = _bottleneck_matching(value)
    owner = -np.ones(G, dtype=int)
    owner[cols] = rows
    totals = np.zeros(U)
    np.add.at(totals, rows, value[rows, cols])
    free = list(np.flatnonzero(owner < 0))
    while free:
        u = int(np.argmin(totals))
        g = free[int(np.argmax(value[u, free]))]
        owner[g] = u
        totals[u] += value[u, g]
        free.remove(g)
    return owner


def _bottleneck_matching(value):
    """Perfect user matching maximising the smallest matched value, then the sum."""
    levels = np.unique(value)
    lo, hi = 0, levels.size - 1              # levels[lo] is always attainable
    while lo < hi:
        mid = (lo + hi + 1) // 2
        r, c = linear_sum_assignment(value >= levels[mid], maximize=True)
        if np.all(value[r, c] >= levels[mid]):
            lo = mid
        else:
            hi = mid - 1
    span = float(np.ptp(value)) + 1.0
    masked = np.where(value >= levels[lo], value, value - span * value.size)
    return linear_sum_assignment(masked, maximize=True)


def greedy_moves(value, owner, max_sweeps=10_000):
    """Move subchannels from the best-off to the worst-off user of one slot.

    A move of g* from u** to u* is made only when u* stays no better off
    than u** afterwards, and only when it strictly helps u*.  Each
    accepted move raises the sorted user totals lexicographically, so the
    loop terminates.  Returns the new owner array and the number of moves.
    """
    value = np.asarray(value, dtype=float)
    owner = np.array(owner, dtype=int)
    U, G = value.shape
    moves = 0
    for _ in range(max_sweeps):
        totals = np.zeros(U)
        np.add.at(totals, owner, value[owner, np.arange(G)])
        counts = np.bincount(owner, minlength=U)
        u_lo = int(np.argmin(totals))
        multi = np.flatnonzero(counts > 1)
        if multi.size == 0:
            break
        u_hi = int(multi[np.argmax(totals[multi])])
        if u_hi == u_lo:
            break
        mine = np.flatnonzero(owner == u_hi)
        g = int(mine[np.argmin(value[u_hi, mine])])
        gain, loss = value[u_lo, g], value[u_hi, g]
        if gain <= 0 or totals[u_lo] + gain > totals[u_hi] - loss:
            break
        before = min(totals[u_lo], totals[u_hi])
        owner[g] = u_lo
        after = min(totals[u_lo] + gain, totals[u_hi] - loss)
        assert after >= before, "greedy move lowered the pairwise minimum"
        moves += 1
    return owner, moves


def greedy_maxmin(value, max_sweeps=10_000):
    """Initial assignment followed by greedy moves; returns (owner, min total)."""
    value = np.asarray(value, dtype=float)
    owner, _ = greedy_moves(value, initial_owner(value), max_sweeps)
    totals = np.zeros(value.shape[0])
    np.add.at(totals, owner, value[owner, np.arange(value.shape[1])])
    return owner, float(totals.min())


@dataclass
class MaxminSubchannelResult:
    x: np.ndarray
    moves: int
    started_from: str


def _owner_to_x(owners, sc: Scenario):
    N, U, G = sc.gain.shape[:3]
    x = np.zeros((N, U, G), dtype=np.int8)
    for n, own in enumerate(owners):
        x[n, own, np.arange(G)] = 1
    return x


def _min_value(x, power, hover, slack, sc):
    return objective_min(Allocation(x, power, hover), slack, sc)


def allocate_subchannels_maxmin(power, hover, slack: SlackState, sc: Scenario,
                                cs: ConstraintSet, cfg: SolverConfig = SolverConfig(),
                                x_prev=None):
    """Greedy max-min subchannel block with power, hover time and slack frozen.

    Every slot is handled independently.  When an incumbent assignment is
    given the greedy is also run from it and the better of the two results
    under the frozen blocks is returned.
    """
    sizes = sc.users_per_slot
    G = sc.num_subchannels
    bad = [n for n, u in enumerate(sizes) if u > G]
    if bad:
        raise ValueError(f"slots {bad} have more users than the {G} subchannels")
    score = hover[:, None, None] * scoring_rates(power, slack, sc, cs, per="slot")

    starts = {"init": [initial_owner(score[n, :sizes[n]]) for n in range(sc.num_slots)]}
    if x_prev is not None:
        cover = x_prev.sum(axis=2)[sc.user_mask]
        full = x_prev.sum(axis=1)
        if np.all(cover >= 1) and np.all(full == 1):
            starts["incumbent"] = [np.argmax(x_prev[n], axis=0) for n in range(sc.num_slots)]

    best = None
    for name, owners in starts.items():
        total = 0
        out = []
        for n, own in enumerate(owners):
            o, m = greedy_moves(score[n, :sizes[n]], own, cfg.max_greedy_sweeps)
            out.append(o)
            total += m
        x = _owner_to_x(out, sc)
        key = (_min_value(x, power, hover, slack, sc),
               float(np.min(np.where(sc.user_mask,
                                     np.einsum("nug,nug->nu", x, np.where(x > 0, score, 0.0)),
                                     np.inf))))
        if best is None or key > best[0]:
            best = (key, MaxminSubchannelResult(x, total, name))
    return best[1]


@dataclass
class MaxminPowerResult:
    power: np.ndarray
    slack: SlackState
    tau: float
    trace: list
    kkt: float


def allocate_power_maxmin(x, hover, sc: Scenario, cs: ConstraintSet,
                          cfg: SolverConfig = SolverConfig()):
    """Alternate the frozen-slack max-min power problem with the slack update.

    Starts from w = 1, tau = 0.  Each frozen-slack solution is accepted
    through a line search on the exact minimum, which is concave in P, so
    the recorded tau sequence never decreases.
    """
    served = x.sum(axis=2)[sc.user_mask]
    if np.any(served < 1):
        raise ValueError("every user needs at least one subchannel")
    slack = SlackState.ones(sc)
    shape = (sc.num_slots, sc.num_subchannels, sc.num_uavs)
    power = np.zeros(shape)
    trace = [0.0]
    prev = 0.0
    kkt = 0.0

    def exact(p):
        return _min_value(x, p, hover, slack_for(p, sc), sc)

    for _ in range(cfg.max_power_iter):
        prog, lay = minrow_program(x, hover, slack, sc, cs)
        if prog is None:
            return MaxminPowerResult(np.zeros(shape), SlackState.ones(sc), 0.0, trace, 0.0)
        res = maximize_minrow_concave(prog, cfg.kernel_gap)
        kkt = res.kkt
        power, tau = ascent_step(exact, power, lay.scatter(res.p))
        slack = slack_for(power, sc)
        trace.append(tau)
        if tau > 0 and abs(1.0 - prev / tau) <= cfg.eps_inner:
            return MaxminPowerResult(power, slack, tau, trace, kkt)
        prev = tau
    raise NumericalError("max-min power allocation did not settle", trace=trace)


def schedule_time_maxmin(x, power, slack: SlackState, sc: Scenario, cs: ConstraintSet,
                         lexicographic=True):
    """Epigraph LP for the hover times.

    Maximises tau subject to c_{n,u} T_n >= tau for every real user.  With
    ``lexicographic`` a second LP keeps tau at its optimum and spends any
    remaining budget on the total efficiency.
    """
    N = sc.num_slots
    per = np.einsum("nug,nug->nu", x.astype(float), np.where(x > 0, rate_table(power, slack, sc), 0.0))
    nn, uu = np.nonzero(sc.user_mask)
    c_nu = per[nn, uu]
    energy = np.einsum("nug,ngk->kn", x.astype(float), power)
    K = energy.shape[0]

    # variables (T_1..T_N, tau)
    rows = np.zeros((nn.size, N + 1))
    rows[np.arange(nn.size), nn] = -c_nu
    rows[:, N] = 1.0
    common_A = np.vstack([np.hstack([energy, np.zeros((K, 1))]),
                          np.hstack([np.ones((1, N)), np.zeros((1, 1))])])
    common_b = np.concatenate([cs.e_com, [cs.t_total]])
    A = np.vstack([rows, common_A])
    b = np.concatenate([np.zeros(nn.size), common_b])
    c = np.zeros(N + 1)
    c[N] = 1.0
    hi = np.concatenate([np.full(N, cs.t_max), [np.inf]])
    res = solve_lp(LinearProgram(c, A, b, 0.0, hi))
    if res.status != "optimal":
        raise RuntimeError(f"max-min hover-time LP returned {res.status}")
    T, tau = res.x[:N], res.x[N]
    if not lexicographic:
        return T, float(tau)

    # keep every user at tau*, then maximise the total
    floor = tau * (1.0 - 1e-12)
    A2 = np.vstack([np.zeros((nn.size, N)), energy, np.ones((1, N))])
    A2[np.arange(nn.size), nn] = -c_nu
    b2 = np.concatenate([np.full(nn.size, -floor), common_b])
    c2 = np.bincount(nn, weights=c_nu, minlength=N)
    res2 = solve_lp(LinearProgram(c2, A2, b2, 0.0, cs.t_max))
    if res2.status != "optimal":
        return T, float(tau)
    T2 = res2.x
    return T2, float(min(np.min(c_nu * T2[nn]), tau)) if nn.size else 0.0


def joint_maxmin(sc: Scenario, cs: ConstraintSet, cfg: SolverConfig = SolverConfig()) -> BcdResult:
    """Block coordinate ascent on the minimum per-user efficiency.

    Block updates that would lower the minimum are rejected, which keeps
    the trace non-decreasing.
    """
    N, U, G, K = sc.gain.shape
    hover = initial_hover(sc, cs)
    power = np.zeros((N, G, K))
    slack = SlackState.ones(sc)
    x = np.zeros((N, U, G), dtype=np.int8)

    def value(x_, p_, t_, s_):
        return _min_value(x_, p_, t_, s_, sc)

    def worst(x_, p_, t_):
        return check_feasibility(Allocation(x_, p_, t_), sc, cs).worst()

    cur = value(x, power, hover, slack)
    trace = [TraceRow(0, "init", cur, worst(x, power, hover))]
    converged = False
    r = 0
    for r in range(1, cfg.max_outer + 1):
        start = cur
        covered = np.all(x.sum(axis=2)[sc.user_mask] >= 1)

        sub = allocate_subchannels_maxmin(power, hover, slack, sc, cs, cfg,
                                          x_prev=x if covered else None)
        v = value(sub.x, power, hover, slack)
        if v >= cur:
            x, cur = sub.x, v
        trace.append(TraceRow(r, "subchannel", cur, worst(x, power, hover)))

        pres = allocate_power_maxmin(x, hover, sc, cs, cfg)
        v = value(x, pres.power, hover, pres.slack)
        if v >= cur:
            power, slack, cur = pres.power, pres.slack, v
        trace.append(TraceRow(r, "power", cur, worst(x, power, hover)))

        new_hover, _ = schedule_time_maxmin(x, power, slack, sc, cs)
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
