"""Domain types, constraint evaluation and the large-scale-CSI objectives.

Array conventions (slots ``N``, padded users ``U``, subchannels ``G``,
UAVs ``K``, satellite users ``S``):

* ``gain``            (N, U, G, K)  amplitude gain UAV k -> UAV user u
* ``gain_sat``        (N, S, G, K)  amplitude gain UAV k -> satellite user i
* ``sat_occupancy``   (N, S, G)     0/1
* ``x``               (N, U, G)     0/1 subchannel indicators
* ``power``           (N, G, K)     watts
* ``hover``           (N,)          seconds
* ``w``               (N, U, G)     slack variables, w >= 1

Slots may hold different numbers of users; shorter slots are padded and the
padding is tracked by :attr:`Scenario.user_mask`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG2E = 1.0 / np.log(2.0)

FAMILIES = ("interference", "energy", "power", "total_time", "slot_time",
            "exclusivity", "sign")


class NumericalError(RuntimeError):
    """An iterative solver failed to meet its tolerance.

    ``trace`` carries whatever history the solver kept (residuals,
    objective values) for diagnosis.
    """

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Scenario:
    """Large-scale channel state of one flight.

    Gains are amplitudes; formulas square them.  Geometry arrays are
    optional and only needed for coverage maps.
    """

    num_antennas: int
    users_per_slot: tuple
    noise_power: float
    gain: np.ndarray
    gain_sat: np.ndarray
    sat_occupancy: np.ndarray
    carrier_freq: float = 5.8e9
    atten_db_per_km: float = 0.0
    uav_pos: np.ndarray | None = None
    user_pos: np.ndarray | None = None
    sat_pos: np.ndarray | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "users_per_slot", tuple(int(u) for u in self.users_per_slot))
        set_(self, "gain", _frozen(self.gain))
        set_(self, "gain_sat", _frozen(self.gain_sat))
        set_(self, "sat_occupancy", _frozen(self.sat_occupancy, np.int8))
        for name in ("uav_pos", "user_pos", "sat_pos"):
            val = getattr(self, name)
            if val is not None:
                set_(self, name, _frozen(val))

        if self.gain.ndim != 4 or self.gain_sat.ndim != 4:
            raise ValueError("gain and gain_sat must be 4-D (n, u|i, g, k)")
        N, U, G, K = self.gain.shape
        if self.gain_sat.shape[0] != N or self.gain_sat.shape[2:] != (G, K):
            raise ValueError(f"gain_sat shape {self.gain_sat.shape} does not "
                             f"match gain shape {self.gain.shape}")
        if self.sat_occupancy.shape != self.gain_sat.shape[:3]:
            raise ValueError("sat_occupancy must have shape (n, i, g)")
        if len(self.users_per_slot) != N:
            raise ValueError("users_per_slot needs one entry per slot")
        if min(self.users_per_slot) < 1 or max(self.users_per_slot) != U:
            raise ValueError("users_per_slot must be >= 1 with max equal to "
                             "the padded user dimension")
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be positive")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        if not (np.all(np.isfinite(self.gain)) and np.all(self.gain >= 0)
                and np.all(self.gain <= 1)):
            raise ValueError("gain must be finite amplitudes in [0, 1]")
        if not (np.all(np.isfinite(self.gain_sat)) and np.all(self.gain_sat >= 0)
                and np.all(self.gain_sat <= 1)):
            raise ValueError("gain_sat must be finite amplitudes in [0, 1]")
        if not np.all(np.isin(self.sat_occupancy, (0, 1))):
            raise ValueError("sat_occupancy must be binary")
        if np.any(self.gain[~self.user_mask] != 0):
            raise ValueError("padded users must carry zero gain")

    @property
    def num_slots(self):
        return self.gain.shape[0]

    @property
    def max_users(self):
        return self.gain.shape[1]

    @property
    def num_subchannels(self):
        return self.gain.shape[2]

    @property
    def num_uavs(self):
        return self.gain.shape[3]

    @property
    def num_sat_users(self):
        return self.gain_sat.shape[1]

    @property
    def num_users(self):
        return sum(self.users_per_slot)

    @property
    def user_mask(self):
        """(N, U) boolean, True where the user exists."""
        return np.arange(self.max_users)[None, :] < np.array(self.users_per_slot)[:, None]


@dataclass(frozen=True)
class ConstraintSet:
    eps_p: float
    e_com: np.ndarray
    p_max: float
    t_total: float
    t_max: float

    def __post_init__(self):
        object.__setattr__(self, "e_com", _frozen(np.atleast_1d(self.e_com)))
        if not (self.eps_p > 0 and self.p_max > 0 and self.t_total > 0
                and self.t_max > 0 and np.all(self.e_com > 0)):
            raise ValueError("all constraint levels must be strictly positive")
        if self.t_max > self.t_total:
            raise ValueError("t_max cannot exceed t_total")

    @classmethod
    def from_dbm(cls, eps_p_dbm, e_com, p_max, t_total, t_max):
        return cls(float(dbm_to_watts(eps_p_dbm)), e_com, p_max, t_total, t_max)

    def with_eps_p(self, eps_p):
        return ConstraintSet(eps_p, self.e_com, self.p_max, self.t_total, self.t_max)


@dataclass(frozen=True, eq=False)
class Allocation:
    x: np.ndarray
    power: np.ndarray
    hover: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x, np.int8))
        object.__setattr__(self, "power", _frozen(self.power))
        object.__setattr__(self, "hover", _frozen(self.hover))
        N, U, G = self.x.shape
        if self.power.shape[:2] != (N, G) or self.power.ndim != 3:
            raise ValueError(f"power shape {self.power.shape} inconsistent "
                             f"with x shape {self.x.shape}")
        if self.hover.shape != (N,):
            raise ValueError("hover must have one entry per slot")

    @classmethod
    def zeros(cls, sc: Scenario):
        N, U, G, K = sc.gain.shape
        return cls(np.zeros((N, U, G)), np.zeros((N, G, K)), np.zeros(N))

    def replace(self, **kw):
        d = dict(x=self.x, power=self.power, hover=self.hover)
        d.update(kw)
        return Allocation(**d)


@dataclass(frozen=True, eq=False)
class SlackState:
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen(self.w))
        if np.any(self.w < 1):
            raise ValueError("slack variables must satisfy w >= 1")

    @property
    def v(self):
        return np.log(self.w)

    @classmethod
    def ones(cls, sc: Scenario):
        return cls(np.ones(sc.gain.shape[:3]))


@dataclass
class FeasibilityReport:
    violations: dict
    relative: dict
    feasible: bool
    tol: float

    def worst(self):
        return max(self.relative.values())


def _check_shapes(alloc: Allocation, sc: Scenario):
    N, U, G, K = sc.gain.shape
    if alloc.x.shape != (N, U, G) or alloc.power.shape != (N, G, K):
        raise ValueError(f"allocation shapes x{alloc.x.shape} P{alloc.power.shape} "
                         f"do not match scenario {(N, U, G, K)}")


def column_usage(alloc: Allocation):
    """(N, G) number of users assigned to each subchannel."""
    return alloc.x.sum(axis=1)


def leakage_per_slot(alloc: Allocation, sc: Scenario):
    """(N, S) expected leakage power at every satellite user."""
    _check_shapes(alloc, sc)
    active = column_usage(alloc).astype(float)                     # (N, G)
    terms = sc.gain_sat ** 2 * alloc.power[:, None, :, :]          # (N, S, G, K)
    return np.einsum("ng,nig,nigk->ni", active, sc.sat_occupancy, terms)


def leakage_interference(alloc: Allocation, sc: Scenario, n: int, i: int):
    if not (0 <= n < sc.num_slots and 0 <= i < sc.num_sat_users):
        raise IndexError(f"slot {n} / satellite user {i} out of range")
    return float(leakage_per_slot(alloc, sc)[n, i])


def energy_per_uav(alloc: Allocation):
    """(K,) communication energy sum_n sum_u sum_g x p T."""
    active = alloc.x.sum(axis=1).astype(float)
    return np.einsum("ng,ngk,n->k", active, alloc.power, alloc.hover)


def power_per_slot(alloc: Allocation):
    """(N, K) total assigned transmit power in each slot."""
    return np.einsum("ng,ngk->nk", alloc.x.sum(axis=1).astype(float), alloc.power)


def check_feasibility(alloc: Allocation, sc: Scenario, cs: ConstraintSet,
                      tol: float = 1e-9) -> FeasibilityReport:
    """Worst violation per constraint family.

    Continuous families are judged relative to their right-hand side;
    exclusivity and binary-ness are checked exactly.
    """
    _check_shapes(alloc, sc)
    if cs.e_com.shape != (sc.num_uavs,):
        raise ValueError("e_com needs one entry per UAV")
    pos = lambda a: float(max(np.max(a, initial=0.0), 0.0))

    viol = {
        "interference": pos(leakage_per_slot(alloc, sc) - cs.eps_p),
        "energy": pos(energy_per_uav(alloc) - cs.e_com),
        "power": pos(power_per_slot(alloc) - cs.p_max),
        "total_time": pos(alloc.hover.sum() - cs.t_total),
        "slot_time": pos(alloc.hover - cs.t_max),
    }
    rel = {
        "interference": viol["interference"] / cs.eps_p,
        "energy": pos((energy_per_uav(alloc) - cs.e_com) / cs.e_com),
        "power": viol["power"] / cs.p_max,
        "total_time": viol["total_time"] / cs.t_total,
        "slot_time": viol["slot_time"] / cs.t_max,
    }
    usage = column_usage(alloc)
    bad_x = (np.any(~np.isin(alloc.x, (0, 1)))
             or np.any(alloc.x[~sc.user_mask] != 0))
    viol["exclusivity"] = float(max(usage.max(initial=0) - 1, 0) + bad_x)
    rel["exclusivity"] = viol["exclusivity"]
    neg = max(pos(-alloc.power) / cs.p_max, pos(-alloc.hover) / cs.t_max)
    viol["sign"] = max(pos(-alloc.power), pos(-alloc.hover))
    rel["sign"] = neg

    feasible = all(rel[f] <= tol for f in FAMILIES if f not in ("exclusivity",))
    feasible = feasible and rel["exclusivity"] == 0
    return FeasibilityReport(viol, rel, bool(feasible), tol)


def approx_rate(power, w, gain, num_antennas, noise_power):
    """Large-scale approximation of the ergodic rate of one link.

    ``power`` and ``gain`` run over the last axis (UAVs); ``w`` broadcasts
    against the remaining axes.  Returns bits/s/Hz.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w < 1):
        raise ValueError("slack variable w must be >= 1")
    power = np.asarray(power, dtype=float)
    gain = np.asarray(gain, dtype=float)
    M = num_antennas
    snr = M * gain ** 2 * power / (w[..., None] * noise_power)
    return (np.log2(1.0 + snr).sum(axis=-1)
            + M * (np.log2(w) - LOG2E * (1.0 - 1.0 / w)))


def approx_rate_v(power, v, gain, num_antennas, noise_power):
    """Same rate written in v = ln w; the compensation term stays convex."""
    v = np.asarray(v, dtype=float)
    M = num_antennas
    snr = M * np.asarray(gain) ** 2 * np.asarray(power) / (np.exp(v)[..., None] * noise_power)
    return np.log2(1.0 + snr).sum(axis=-1) + M * LOG2E * (v - 1.0 + np.exp(-v))


def rate_table(power, slack: SlackState, sc: Scenario):
    """(N, U, G) approximate rate R_a(P_{n,g}, w_{n,u,g}) for every user."""
    return approx_rate(power[:, None, :, :], slack.w, sc.gain,
                       sc.num_antennas, sc.noise_power)


def per_user_efficiency(alloc: Allocation, slack: SlackState, sc: Scenario):
    """(N, U) per-user sum_g x T R_a; padded users are NaN."""
    _check_shapes(alloc, sc)
    r = rate_table(alloc.power, slack, sc)
    tot = np.einsum("nug,nug,n->nu", alloc.x.astype(float), r, alloc.hover)
    return np.where(sc.user_mask, tot, np.nan)


def objective_sum(alloc: Allocation, slack: SlackState, sc: Scenario):
    return float(np.nansum(per_user_efficiency(alloc, slack, sc)))


def objective_min(alloc: Allocation, slack: SlackState, sc: Scenario):
    tot = per_user_efficiency(alloc, slack, sc)
    served = alloc.x.sum(axis=2) > 0
    if np.any(~served[sc.user_mask]):
        return 0.0
    return float(np.nanmin(tot))
