"""Delimited trace schema shared by the CLI, the filters, and the readers.

Every trace is a comma-separated file with a header row and columns
``t, j, event`` followed by kind-specific state columns. ``event`` names the
transition that produced the row's state (``flow``, ``jump_Dl`` or
``jump_Dm``); jump rows appear as pre/post pairs sharing the same t. Numbers
are serialized with 17 significant digits so traces are byte-reproducible
and round-trip exactly through float parsing.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .lifting import LiftParams, lift_eval

_R_COLS = [f"r{i}{k}" for i in (1, 2, 3) for k in (1, 2, 3)]
_QHAT_COLS = [f"qhat{i}" for i in range(4)]
_THETA_COLS = ["theta_x", "theta_y", "theta_z"]
_OMEGA_COLS = ["omega_x", "omega_y", "omega_z"]
_TAU_COLS = ["tau_x", "tau_y", "tau_z"]


def fmt(x) -> str:
    """17-significant-digit decimal form (lossless for binary64)."""
    return f"{x:.17g}"


def lift_columns() -> list[str]:
    return ["t", "j", "event"] + _R_COLS + _QHAT_COLS + ["m"] + _THETA_COLS + [
        "norm_theta", "dist_qhat"]


def h1_columns(rho_dim: int) -> list[str]:
    return lift_columns() + _OMEGA_COLS + [f"rho_{i}" for i in range(rho_dim)] + _TAU_COLS


def h2_columns(rho_dim: int) -> list[str]:
    return ["t", "j", "event"] + _THETA_COLS + _OMEGA_COLS + [
        f"rho_{i}" for i in range(rho_dim)] + _TAU_COLS


def write_trace(path, columns: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def read_trace(path) -> tuple[list[str], list[dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ConfigError(f"trace file {path} is empty")
    header = lines[0].split(",")
    rows = [dict(zip(header, ln.split(","))) for ln in lines[1:]]
    return header, rows


def _event_of(arc, interval_index: int, sample_index: int) -> str:
    if sample_index == 0 and interval_index > 0:
        return "jump_" + arc.jumps[interval_index - 1].label
    return "flow"


def _lift_cells(t, j, event, R, qhat, m, params: LiftParams, slack: float) -> list[str]:
    ev = lift_eval(qhat, m, R)
    in_c = ev.norm <= 1.0 + params.delta + slack and ev.dist <= params.alpha + slack
    cells = [fmt(t), str(j), event]
    cells += [fmt(v) for v in R.ravel()]
    cells += [fmt(v) for v in qhat]
    cells.append(str(int(m) if m in (-1, 1) else int(m > 0) * 2 - 1))
    if in_c and ev.theta is not None:
        cells += [fmt(v) for v in ev.theta]
    else:
        cells += ["", "", ""]
    cells.append(fmt(ev.norm))
    cells.append(fmt(ev.dist))
    return cells


def rows_from_lift_arc(arc, R_source, params: LiftParams) -> list[list[str]]:
    """Trace rows of a lifted arc; rotations re-queried from the source."""
    slack = arc.meta.get("event_tol", 1e-9)
    rows = []
    for k, iv in enumerate(arc.intervals):
        for i, (t, x) in enumerate(zip(iv.ts, iv.xs)):
            R = R_source.rotation(float(t))
            rows.append(_lift_cells(float(t), iv.j, _event_of(arc, k, i),
                                    R, x[0:4], x[4], params, slack))
    return rows


def rows_from_stream(stream_rows, params: LiftParams, slack: float = 1e-9) -> list[list[str]]:
    """Trace rows from streaming-filter output (same schema as lifted arcs)."""
    rows = []
    for r in stream_rows:
        rows.append(_lift_cells(r.t, r.j, r.event, r.R,
                                r.q_hat, float(r.m), params, slack))
    return rows


def rows_from_h1_arc(arc, ctrl, params: LiftParams) -> list[list[str]]:
    slack = arc.meta.get("event_tol", 1e-9)
    rho_dim = ctrl.rho_dim
    rows = []
    for k, iv in enumerate(arc.intervals):
        for i, (t, x) in enumerate(zip(iv.ts, iv.xs)):
            R = x[0:9].reshape(3, 3)
            cells = _lift_cells(float(t), iv.j, _event_of(arc, k, i),
                                R, x[9:13], x[13], params, slack)
            omega = x[14:17]
            rho = x[17:17 + rho_dim]
            cells += [fmt(v) for v in omega]
            cells += [fmt(v) for v in rho]
            ev = lift_eval(x[9:13], x[13], R)
            if ev.theta is None:
                cells += ["", "", ""]
            else:
                cells += [fmt(v) for v in ctrl.torque(ev.theta, omega, rho)]
            rows.append(cells)
    return rows


def rows_from_h2_arc(arc, ctrl) -> list[list[str]]:
    rho_dim = ctrl.rho_dim
    rows = []
    for k, iv in enumerate(arc.intervals):
        for i, (t, x) in enumerate(zip(iv.ts, iv.xs)):
            theta = x[0:3]
            omega = x[3:6]
            rho = x[6:6 + rho_dim]
            cells = [fmt(float(t)), str(iv.j), _event_of(arc, k, i)]
            cells += [fmt(v) for v in theta]
            cells += [fmt(v) for v in omega]
            cells += [fmt(v) for v in rho]
            cells += [fmt(v) for v in ctrl.torque(theta, omega, rho)]
            rows.append(cells)
    return rows


def read_rotation_samples(path) -> list[tuple[float, np.ndarray]]:
    """Extract the (t, R) sample sequence from a lift or h1 trace.

    Pre/post jump rows share t and R; consecutive duplicates are collapsed so
    the stream can be re-lifted (the filter reproduces the jumps itself).
    """
    header, rows = read_trace(path)
    missing = [c for c in ["t"] + _R_COLS if c not in header]
    if missing:
        raise ConfigError(f"trace {path} lacks rotation columns: {missing}")
    samples = []
    last_t = -math.inf
    for row in rows:
        t = float(row["t"])
        if t == last_t:
            continue
        R = np.array([float(row[c]) for c in _R_COLS]).reshape(3, 3)
        samples.append((t, R))
        last_t = t
    return samples
