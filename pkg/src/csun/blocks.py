"""Pieces shared by the sum and max-min block-coordinate solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import MinRowProgram, SeparableConcaveProgram
from .model import LOG2E, Allocation, ConstraintSet, Scenario, SlackState, rate_table
from .rates import slack_for


@dataclass(frozen=True)
class SolverConfig:
    eps_outer: float = 1e-2
    eps_inner: float = 1e-3
    max_outer: int = 50
    max_subgrad: int = 500
    max_power_iter: int = 200
    step_scale: float = 1.0
    kernel_gap: float = 1e-8
    max_greedy_sweeps: int = 10_000


@dataclass
class TraceRow:
    outer_iter: int
    phase: str
    value: float
    worst_violation: float


@dataclass
class BcdResult:
    alloc: Allocation
    slack: SlackState
    trace: list
    iterations: int
    converged: bool

    def values(self, phase="time"):
        return [row.value for row in self.trace if row.phase == phase]


def initial_hover(sc: Scenario, cs: ConstraintSet):
    return np.full(sc.num_slots, min(cs.t_total / sc.num_slots, cs.t_max))


def probe_power(sc: Scenario, cs: ConstraintSet):
    """Equal split of p_max over the subchannels, used only for ranking."""
    return np.full((sc.num_slots, sc.num_subchannels, sc.num_uavs),
                   cs.p_max / sc.num_subchannels)


def scoring_rates(power, slack: SlackState, sc: Scenario, cs: ConstraintSet, per="column"):
    """(N, U, G) rates used to rank users for each subchannel.

    A subchannel that carries no power has zero rate for every user, which
    would make it unassignable forever; such columns are ranked by their
    rate at the probe power instead.  With ``per="slot"`` the probe rates
    are used only in slots where every column is unpowered.
    """
    r = rate_table(power, slack, sc)
    dead = ~np.any(power > 0, axis=2)                         # (N, G)
    if per == "slot":
        dead = np.repeat(dead.all(axis=1, keepdims=True), dead.shape[1], axis=1)
    if np.any(dead):
        probe = probe_power(sc, cs)
        rp = rate_table(probe, slack_for(probe, sc), sc)
        r = np.where(dead[:, None, :], rp, r)
    return np.where(sc.user_mask[:, :, None], r, -np.inf)


def column_coefficients(power, sc: Scenario):
    """Per-column constraint usage when (n, g) is active under frozen power.

    Returns interference (N, S, G) and per-UAV power (N, G, K); energy
    usage is the power times the slot's hover time.
    """
    interf = np.einsum("nig,nigk,ngk->nig", sc.sat_occupancy, sc.gain_sat ** 2, power)
    return interf, power


def assignment_feasible(active, power, hover, sc: Scenario, cs: ConstraintSet, rtol=1e-9):
    """Check the interference/energy/power rows for an (N, G) activity mask."""
    interf, pw = column_coefficients(power, sc)
    a = active.astype(float)
    ok_i = np.all(np.einsum("ng,nig->ni", a, interf) <= cs.eps_p * (1 + rtol))
    ok_e = np.all(np.einsum("ng,ngk,n->k", a, pw, hover) <= cs.e_com * (1 + rtol))
    ok_p = np.all(np.einsum("ng,ngk->nk", a, pw) <= cs.p_max * (1 + rtol))
    return bool(ok_i and ok_e and ok_p)


@dataclass
class PowerLayout:
    """Index bookkeeping between the kernel's flat variables and (n, g, k)."""

    n: np.ndarray
    g: np.ndarray
    k: np.ndarray
    u: np.ndarray
    shape: tuple

    def scatter(self, p):
        out = np.zeros(self.shape)
        out[self.n, self.g, self.k] = p
        return out


def _layout(x, hover, sc: Scenario):
    N, U, G, K = sc.gain.shape
    owner = np.argmax(x, axis=1)                      # (N, G)
    active = (x.sum(axis=1) > 0) & (hover[:, None] > 0)
    n, g = np.nonzero(active)
    u = owner[n, g]
    nn = np.repeat(n, K)
    gg = np.repeat(g, K)
    uu = np.repeat(u, K)
    kk = np.tile(np.arange(K), n.size)
    keep = sc.gain[nn, uu, gg, kk] > 0
    return PowerLayout(nn[keep], gg[keep], kk[keep], uu[keep], (N, G, K))


def _rows(lay: PowerLayout, hover, sc: Scenario, cs: ConstraintSet):
    N, K = sc.num_slots, sc.num_uavs
    S = sc.num_sat_users
    m = lay.n.size
    cols = np.arange(m)
    interf = np.zeros((N * S, m))
    coef = sc.sat_occupancy[lay.n, :, lay.g] * sc.gain_sat[lay.n, :, lay.g, lay.k] ** 2   # (m, S)
    for i in range(S):
        interf[lay.n * S + i, cols] = coef[:, i]
    energy = np.zeros((K, m))
    energy[lay.k, cols] = hover[lay.n]
    power = np.zeros((N * K, m))
    power[lay.n * K + lay.k, cols] = 1.0
    A = np.vstack([interf, energy, power])
    b = np.concatenate([np.full(N * S, cs.eps_p), cs.e_com, np.full(N * K, cs.p_max)])
    return A, b


def power_program(x, hover, slack: SlackState, sc: Scenario, cs: ConstraintSet):
    """Sum-efficiency power problem with the slack variables frozen.

    The program is None when no (column, UAV) pair can carry power.
    """
    lay = _layout(x, hover, sc)
    if lay.n.size == 0:
        return None, lay
    A, b = _rows(lay, hover, sc, cs)
    w = slack.w[lay.n, lay.u, lay.g]
    alpha = hover[lay.n]
    beta = sc.num_antennas * sc.gain[lay.n, lay.u, lay.g, lay.k] ** 2 / (w * sc.noise_power)
    return SeparableConcaveProgram(alpha, beta, A, b), lay


def minrow_program(x, hover, slack: SlackState, sc: Scenario, cs: ConstraintSet):
    """Max-min power problem with frozen slack; one row per real user."""
    lay = _layout(x, hover, sc)
    if lay.n.size == 0:
        return None, lay
    A, b = _rows(lay, hover, sc, cs)
    mask = sc.user_mask
    row_id = -np.ones(mask.shape, dtype=int)
    row_id[mask] = np.arange(mask.sum())
    w = slack.w
    comp = sc.num_antennas * (np.log2(w) - LOG2E * (1.0 - 1.0 / w))          # (N, U, G)
    offsets = np.einsum("nug,nug,n->nu", x.astype(float), comp, hover)[mask]
    wl = w[lay.n, lay.u, lay.g]
    alpha = hover[lay.n]
    beta = sc.num_antennas * sc.gain[lay.n, lay.u, lay.g, lay.k] ** 2 / (wl * sc.noise_power)
    owner = row_id[lay.n, lay.u]
    return MinRowProgram(alpha, beta, owner, offsets, A, b), lay


def one_hot(owner, active, sc: Scenario):
    """(N, U, G) indicators from a per-column owner and activity mask."""
    N, U, G = sc.gain.shape[:3]
    x = np.zeros((N, U, G), dtype=np.int8)
    n, g = np.nonzero(active)
    x[n, owner[n, g], g] = 1
    return x


def ascent_step(f, current, proposal, iters=60):
    """Best point of the concave ``f`` on the segment from ``current`` to ``proposal``.

    Returns (point, value).  The proposal is taken whole when it does not
    lower ``f``; otherwise a golden-section search picks the step length.
    """
    f0, f1 = f(current), f(proposal)
    if f1 >= f0:
        return proposal, f1
    d = proposal - current
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, 1.0
    c, e = b - ratio * (b - a), a + ratio * (b - a)
    fc, fe = f(current + c * d), f(current + e * d)
    for _ in range(iters):
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - ratio * (b - a)
            fc = f(current + c * d)
        else:
            a, c, fc = c, e, fe
            e = a + ratio * (b - a)
            fe = f(current + e * d)
    t, ft = (c, fc) if fc >= fe else (e, fe)
    if ft >= f0:
        return current + t * d, ft
    return current, f0
