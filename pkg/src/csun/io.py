"""Constraint files and CSV exports."""

from __future__ import annotations

import csv
import json

import numpy as np

from .channel import ScenarioFormatError, _parse_json
from .model import ConstraintSet, dbm_to_watts, watts_to_dbm

CONSTRAINT_FIELDS = ("eps_p_dbm", "e_com_joules", "p_max_watts", "t_total_s", "t_max_s")


def constraints_from_dict(d, num_uavs=None) -> ConstraintSet:
    if not isinstance(d, dict):
        raise ScenarioFormatError("constraints file must hold a JSON object")
    for key in CONSTRAINT_FIELDS:
        if key not in d:
            raise ScenarioFormatError(f"missing field {key!r}")
    for key in ("eps_p_dbm", "p_max_watts", "t_total_s", "t_max_s"):
        if not isinstance(d[key], (int, float)) or isinstance(d[key], bool):
            raise ScenarioFormatError(f"field {key}: expected a number, got {d[key]!r}")
    e = d["e_com_joules"]
    if not isinstance(e, list) or not e or not all(isinstance(v, (int, float)) for v in e):
        raise ScenarioFormatError("field e_com_joules: expected a non-empty list of numbers")
    if num_uavs is not None and len(e) != num_uavs:
        raise ScenarioFormatError(f"field e_com_joules: expected {num_uavs} entries, got {len(e)}")
    try:
        return ConstraintSet(float(dbm_to_watts(d["eps_p_dbm"])), np.array(e, dtype=float),
                             float(d["p_max_watts"]), float(d["t_total_s"]), float(d["t_max_s"]))
    except ValueError as exc:
        raise ScenarioFormatError(f"invalid constraints: {exc}") from None


def constraints_to_dict(cs: ConstraintSet):
    return {"eps_p_dbm": float(watts_to_dbm(cs.eps_p)),
            "e_com_joules": [float(v) for v in cs.e_com],
            "p_max_watts": float(cs.p_max), "t_total_s": float(cs.t_total),
            "t_max_s": float(cs.t_max)}


def load_constraints(path, num_uavs=None) -> ConstraintSet:
    try:
        return constraints_from_dict(_parse_json(path), num_uavs)
    except ScenarioFormatError as exc:
        msg = str(exc)
        raise ScenarioFormatError(msg if msg.startswith(str(path)) else f"{path}: {msg}") from None


def save_constraints(cs: ConstraintSet, path):
    with open(path, "w") as fh:
        json.dump(constraints_to_dict(cs), fh, indent=2)
        fh.write("\n")


def write_trace(rows, path, objective="sum"):
    """Outer-loop trace; the value column is D_a for sum runs and tau for max-min runs."""
    col = "D_a" if objective == "sum" else "tau"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["outer_iter", "phase", col, "worst_violation"])
        for r in rows:
            w.writerow([r.outer_iter, r.phase, repr(float(r.value)), repr(float(r.worst_violation))])


SWEEP_HEADER = ["param", "value", "snapshot", "arm", "D_e", "D_min", "outer_iters", "wall_ms"]


def write_sweep(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([r.param, repr(r.value), r.snapshot, r.arm, repr(r.d_e), repr(r.d_min),
                        r.outer_iters, r.wall_ms])


def read_sweep(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
