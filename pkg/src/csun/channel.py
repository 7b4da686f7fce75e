"""Synthetic geometry, free-space path loss and scenario files."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .model import ConstraintSet, Scenario, dbm_to_watts

# RNG stream ids; one independent stream per component so that changing K or
# G leaves the other draws untouched (common random numbers across sweeps).
_S_CENTROID, _S_USERS, _S_SAT, _S_SWARM, _S_OCC, _S_JITTER = range(6)


def fspl_db(distance, freq, atten_db_per_km=0.0):
    """Free-space path loss in dB, distance in metres and frequency in hertz.

    An optional constant specific attenuation (dB/km) stands in for gaseous
    absorption.
    """
    d = np.asarray(distance, dtype=float)
    f = np.asarray(freq, dtype=float)
    if np.any(~(d > 0)) or np.any(~(f > 0)):
        raise ValueError("distance and frequency must be positive")
    d_km = d / 1e3
    out = 32.45 + 20.0 * np.log10(f / 1e6) + 20.0 * np.log10(d_km) + atten_db_per_km * d_km
    return out if out.ndim else float(out)


def amplitude_gain(distance, freq, atten_db_per_km=0.0):
    return 10.0 ** (-np.asarray(fspl_db(distance, freq, atten_db_per_km)) / 20.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and radio parameters of a synthetic flight.

    Users of a group are dropped uniformly in a disk around a uniformly
    placed group centroid; the swarm hovers on a circle above that
    centroid with a random rotation per slot.
    """

    num_uavs: int = 4
    num_antennas: int = 4
    num_subchannels: int = 8
    num_slots: int = 5
    users_per_slot: int | tuple = 4
    num_sat_users: int = 5
    area: tuple = (10_000.0, 10_000.0)
    altitude: float = 200.0
    carrier_freq: float = 5.8e9
    noise_power: float = float(dbm_to_watts(-107.0))
    atten_db_per_km: float = 0.01
    occupancy: float = 0.25
    cluster_radius: float = 1_000.0
    swarm_radius: float = 300.0
    jitter_db: float = 0.0
    seed: int = 0

    def __post_init__(self):
        ups = self.slot_sizes()
        if min(self.num_uavs, self.num_antennas, self.num_subchannels,
               self.num_slots, self.num_sat_users) < 1:
            raise ValueError("all dimensions must be positive")
        if len(ups) != self.num_slots:
            raise ValueError("users_per_slot needs one entry per slot")
        if min(ups) < 1:
            raise ValueError("every user group needs at least one user")
        if not 0.0 <= self.occupancy <= 1.0:
            raise ValueError("occupancy density must lie in [0, 1]")
        if self.altitude <= 0 or min(self.area) <= 0 or self.noise_power <= 0:
            raise ValueError("altitude, area and noise power must be positive")
        if self.carrier_freq <= 0 or self.cluster_radius < 0 or self.swarm_radius < 0:
            raise ValueError("invalid carrier frequency or radii")

    def slot_sizes(self):
        u = self.users_per_slot
        if np.isscalar(u):
            return (int(u),) * self.num_slots
        return tuple(int(v) for v in u)

    @classmethod
    def preset(cls, name, **overrides):
        try:
            base = PRESETS[name]["scenario"]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(**{**base, **overrides})

    def with_(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        d = asdict(self)
        d["area"] = list(self.area)
        if not np.isscalar(self.users_per_slot):
            d["users_per_slot"] = list(self.users_per_slot)
        return d


@dataclass(frozen=True)
class ConstraintConfig:
    """Constraint levels in the units used by experiment configs."""

    eps_p_dbm: float = -77.0
    e_total: float = 30.0
    p_max: float = 0.3
    t_total: float = 100.0
    t_max: float = 7.5
    mc_samples: int = 10_000
    extra: dict = field(default_factory=dict)

    def build(self, num_uavs) -> ConstraintSet:
        """Equal split of the energy budget over the UAVs."""
        return ConstraintSet.from_dbm(self.eps_p_dbm, np.full(num_uavs, self.e_total / num_uavs),
                                      self.p_max, self.t_total, self.t_max)


PRESETS = {
    "desk": {"scenario": dict(num_uavs=4, num_antennas=4, num_subchannels=8, num_slots=5,
                              users_per_slot=4, num_sat_users=5),
             "constraints": dict(mc_samples=10_000)},
    "paper": {"scenario": dict(num_uavs=6, num_antennas=6, num_subchannels=16, num_slots=20,
                               users_per_slot=10, num_sat_users=10),
              "constraints": dict(mc_samples=10_000)},
}


def preset_constraints(name, **overrides) -> ConstraintConfig:
    return ConstraintConfig(**{**PRESETS[name]["constraints"], **overrides})


def _rng(seed, stream):
    return np.random.default_rng([int(seed), stream])


def _disk(rng, n, radius):
    r = radius * np.sqrt(rng.random(n))
    a = 2 * np.pi * rng.random(n)
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Draw one flight: positions, path-loss amplitudes and satellite occupancy."""
    N, K, G, S = cfg.num_slots, cfg.num_uavs, cfg.num_subchannels, cfg.num_sat_users
    sizes = cfg.slot_sizes()
    U = max(sizes)
    area = np.asarray(cfg.area, dtype=float)

    centroid = _rng(cfg.seed, _S_CENTROID).random((N, 2)) * area
    urng = _rng(cfg.seed, _S_USERS)
    user_xy = np.full((N, U, 2), np.nan)
    for n, un in enumerate(sizes):
        user_xy[n, :un] = np.clip(centroid[n] + _disk(urng, un, cfg.cluster_radius), 0.0, area)
    user_pos = np.concatenate([user_xy, np.zeros((N, U, 1))], axis=-1)

    sat_xy = _rng(cfg.seed, _S_SAT).random((S, 2)) * area
    sat_pos = np.concatenate([sat_xy, np.zeros((S, 1))], axis=-1)

    rot = 2 * np.pi * _rng(cfg.seed, _S_SWARM).random(N)
    ang = rot[:, None] + 2 * np.pi * np.arange(K)[None, :] / K
    offs = cfg.swarm_radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    if K == 1:
        offs = np.zeros_like(offs)
    uav_xy = centroid[:, None, :] + offs
    uav_pos = np.concatenate([uav_xy, np.full((N, K, 1), cfg.altitude)], axis=-1)

    d_user = np.linalg.norm(user_pos[:, :, None, :] - uav_pos[:, None, :, :], axis=-1)   # (N,U,K)
    d_sat = np.linalg.norm(sat_pos[None, :, None, :] - uav_pos[:, None, :, :], axis=-1)  # (N,S,K)
    mask = np.arange(U)[None, :] < np.array(sizes)[:, None]
    d_user = np.where(mask[:, :, None], d_user, 1.0)
    l_user = amplitude_gain(d_user, cfg.carrier_freq, cfg.atten_db_per_km)
    l_sat = amplitude_gain(d_sat, cfg.carrier_freq, cfg.atten_db_per_km)

    gain = np.repeat(l_user[:, :, None, :], G, axis=2)
    gain_sat = np.repeat(l_sat[:, :, None, :], G, axis=2)
    if cfg.jitter_db > 0:
        jr = _rng(cfg.seed, _S_JITTER)
        gain = gain * 10.0 ** (-np.abs(jr.normal(0.0, cfg.jitter_db, gain.shape)) / 20.0)
        gain_sat = gain_sat * 10.0 ** (-np.abs(jr.normal(0.0, cfg.jitter_db, gain_sat.shape)) / 20.0)
    gain = np.where(mask[:, :, None, None], gain, 0.0)

    occ = (_rng(cfg.seed, _S_OCC).random((N, S, G)) < cfg.occupancy).astype(np.int8)
    return Scenario(cfg.num_antennas, sizes, cfg.noise_power, gain, gain_sat, occ,
                    carrier_freq=cfg.carrier_freq, atten_db_per_km=cfg.atten_db_per_km,
                    uav_pos=uav_pos, user_pos=user_pos, sat_pos=sat_pos)


# --------------------------------------------------------------------- files

class ScenarioFormatError(ValueError):
    """Malformed scenario or constraints file; the message names the location."""


def _fmt(v):
    v = float(v)
    if not np.isfinite(v):
        raise ValueError(f"cannot serialize non-finite value {v!r}")
    return "%.16e" % v


def _dump(obj, indent=0):
    pad = " " * indent
    if isinstance(obj, dict):
        items = [f'{pad}  {json.dumps(k)}: {_dump(v, indent + 2).lstrip()}' for k, v in obj.items()]
        return pad + "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if obj and isinstance(obj[0], (list, tuple, dict)):
            inner = ",\n".join(_dump(v, indent + 2) for v in obj)
            return pad + "[\n" + inner + "\n" + pad + "]"
        return pad + "[" + ", ".join(_dump(v).strip() for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return pad + ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return pad + str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return pad + _fmt(obj)
    if obj is None:
        return pad + "null"
    return pad + json.dumps(obj)


def _floats(a):
    return [float(v) for v in a]


def scenario_to_dict(sc: Scenario):
    N, U, G, K = sc.gain.shape
    sizes = sc.users_per_slot
    d = {
        "meta": {"num_slots": N, "num_uavs": K, "num_antennas": sc.num_antennas,
                 "num_subchannels": G, "num_sat_users": sc.num_sat_users,
                 "users_per_slot": list(sizes), "carrier_freq": float(sc.carrier_freq),
                 "noise_power": float(sc.noise_power),
                 "atten_db_per_km": float(sc.atten_db_per_km)},
        "l": [[[_floats(sc.gain[n, u, g]) for g in range(G)] for u in range(sizes[n])]
              for n in range(N)],
        "l_tilde": [[[_floats(sc.gain_sat[n, i, g]) for g in range(G)]
                     for i in range(sc.num_sat_users)] for n in range(N)],
        "y": [[[int(v) for v in sc.sat_occupancy[n, i]] for i in range(sc.num_sat_users)]
              for n in range(N)],
        "geometry": {},
    }
    if sc.uav_pos is not None:
        d["geometry"]["uav"] = [[_floats(p) for p in slot] for slot in sc.uav_pos]
    if sc.user_pos is not None:
        d["geometry"]["users"] = [[_floats(sc.user_pos[n, u]) for u in range(sizes[n])]
                                  for n in range(N)]
    if sc.sat_pos is not None:
        d["geometry"]["sat_users"] = [_floats(p) for p in sc.sat_pos]
    return d


def save_scenario(sc: Scenario, path):
    with open(path, "w") as fh:
        fh.write(_dump(scenario_to_dict(sc)) + "\n")


def _need(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ScenarioFormatError(f"missing field {where}{key!r}")
    return obj[key]


def _array(val, shape, where, kind=float):
    try:
        a = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioFormatError(f"field {where}: ragged or non-numeric array") from None
    if a.shape != shape:
        raise ScenarioFormatError(f"field {where}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ScenarioFormatError(f"field {where}: non-finite value")
    if kind is int:
        bad = np.argwhere((a != 0) & (a != 1))
        if bad.size:
            idx = "][".join(str(i) for i in bad[0])
            raise ScenarioFormatError(f"field {where}[{idx}]: value {a[tuple(bad[0])]:g} "
                                      f"is not 0 or 1")
    return a


def scenario_from_dict(d) -> Scenario:
    meta = _need(d, "meta", "")
    vals = {}
    for key in ("num_slots", "num_uavs", "num_antennas", "num_subchannels",
                "num_sat_users", "users_per_slot", "carrier_freq", "noise_power"):
        vals[key] = _need(meta, key, "meta.")
    N, K, G, S = (int(vals[k]) for k in ("num_slots", "num_uavs", "num_subchannels",
                                         "num_sat_users"))
    sizes = [int(u) for u in vals["users_per_slot"]]
    if len(sizes) != N or min(sizes, default=0) < 1:
        raise ScenarioFormatError("field meta.users_per_slot: need one positive count per slot")
    U = max(sizes)
    raw_l = _need(d, "l", "")
    if not isinstance(raw_l, list) or len(raw_l) != N:
        raise ScenarioFormatError(f"field l: expected {N} slots")
    gain = np.zeros((N, U, G, K))
    for n, un in enumerate(sizes):
        gain[n, :un] = _array(raw_l[n], (un, G, K), f"l[{n}]")
    gain_sat = _array(_need(d, "l_tilde", ""), (N, S, G, K), "l_tilde")
    occ = _array(_need(d, "y", ""), (N, S, G), "y", kind=int)
    geo = d.get("geometry") or {}
    uav = user = sat = None
    if "uav" in geo:
        uav = _array(geo["uav"], (N, K, 3), "geometry.uav")
    if "users" in geo:
        user = np.full((N, U, 3), np.nan)
        for n, un in enumerate(sizes):
            user[n, :un] = _array(geo["users"][n], (un, 3), f"geometry.users[{n}]")
    if "sat_users" in geo:
        sat = _array(geo["sat_users"], (S, 3), "geometry.sat_users")
    try:
        return Scenario(int(vals["num_antennas"]), sizes, float(vals["noise_power"]),
                        gain, gain_sat, occ.astype(np.int8),
                        carrier_freq=float(vals["carrier_freq"]),
                        atten_db_per_km=float(meta.get("atten_db_per_km", 0.0)),
                        uav_pos=uav, user_pos=user, sat_pos=sat)
    except ValueError as exc:
        raise ScenarioFormatError(f"invalid scenario: {exc}") from None


def _parse_json(path):
    with open(path) as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_scenario(path) -> Scenario:
    d = _parse_json(path)
    try:
        return scenario_from_dict(d)
    except ScenarioFormatError as exc:
        raise ScenarioFormatError(f"{path}: {exc}") from None
