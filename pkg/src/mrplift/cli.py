"""Scenario-driven command line front end.

``mrplift run --config scenario.json`` executes one scenario and writes a
trace, a JSON verification report, run metadata, plot-ready CSV series, and
rendered figures into the output directory. ``mrplift validate`` reports
configuration diagnostics without running. Exit codes: 0 all enabled checks
passed, 1 a check failed, 2 configuration error, 3 simulation error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import plots, traces
from .attitude import (
    InertiaTensor,
    UnitQuaternion,
    quat_from_mrp_array,
    rot_from_mrp_array,
)
from .closed_loop import (
    PlantParams,
    check_equivalence,
    default_controller,
    h1_origin_target,
    h2_origin_target,
    make_h1,
    make_h2,
    stability_evidence,
    step_halving_error,
    x1_initial,
    x2_from_x1,
    zero_controller,
)
from .errors import (
    ConfigError,
    InvalidInitialStateError,
    InvalidStateError,
    SimulationBlowupError,
    SingularMrpError,
)
from .hybrid import SolverConfig, simulate
from .lifting import (
    LiftParams,
    LiftStreamFilter,
    init_lift_state,
    lift_eval,
    make_lift_system,
    verify_lift_arc,
    verify_lift_rows,
)
from .trajectories import ConstantRotation, PrincipalRamp, rotation_about

SCHEMA_VERSION = 1
KINDS = ("lift_only", "h1", "h2", "equivalence", "stability_sweep")
OUT_DIR_ENV = "MRPLIFT_OUT_DIR"

_EXIT_CHECK_FAILURE = 1
_EXIT_CONFIG = 2
_EXIT_SIMULATION = 3


# ---------------------------------------------------------------------------
# configuration


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _matrix(value, name) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3, 3):
        raise ConfigError(f"{name} must be a 3x3 matrix")
    return arr


def _rotation_value(value, name) -> np.ndarray:
    """A rotation given either as a 3x3 matrix or as {axis, angle}."""
    if isinstance(value, dict):
        axis = np.asarray(value.get("axis", [0.0, 0.0, 1.0]), dtype=float)
        angle = float(value.get("angle", 0.0))
        norm = float(np.linalg.norm(axis))
        if norm == 0.0:
            raise ConfigError(f"{name}: axis must be nonzero")
        return rotation_about(axis / norm, angle)
    if isinstance(value, str) and value == "identity":
        return np.eye(3)
    return _matrix(value, name)


def validate_config(cfg: dict, base_dir: Path) -> list[str]:
    """Full constraint report for a scenario; empty means runnable."""
    diags = []
    if cfg.get("schema_version") != SCHEMA_VERSION:
        diags.append(f"schema_version must be {SCHEMA_VERSION}")
    kind = cfg.get("kind")
    if kind not in KINDS:
        diags.append(f"kind must be one of {KINDS}, got {kind!r}")

    lift = cfg.get("lift", {})
    alpha = lift.get("alpha", 0.5)
    delta = lift.get("delta", 0.5)
    if not 0.0 < alpha < 1.0:
        diags.append(f"lift.alpha must lie strictly between 0 and 1, got {alpha}")
    if delta <= 0.0:
        diags.append(f"lift.delta must be positive, got {delta}")

    solver = cfg.get("solver", {})
    if solver.get("step", 1e-3) <= 0.0:
        diags.append("solver.step must be positive")
    if solver.get("event_tol", 1e-9) <= 0.0:
        diags.append("solver.event_tol must be positive")
    if solver.get("t_max", 10.0) < 0.0:
        diags.append("solver.t_max must be non-negative")
    priority = solver.get("jump_priority", "prefer_first_listed")
    if priority not in ("prefer_first_listed", "prefer_last_listed"):
        diags.append(f"solver.jump_priority must be prefer_first_listed or "
                     f"prefer_last_listed, got {priority!r}")

    if kind in ("h1", "h2", "equivalence", "stability_sweep"):
        inertia = cfg.get("plant", {}).get("inertia", "identity")
        if isinstance(inertia, str):
            if inertia != "identity":
                diags.append(f"plant.inertia: unknown shorthand {inertia!r}")
        else:
            try:
                InertiaTensor(_matrix(inertia, "plant.inertia"))
            except (InvalidStateError, ConfigError) as exc:
                diags.append(f"plant.inertia: {exc}")
        controller = cfg.get("controller")
        if controller is not None:
            if controller.get("kp", 0.0) <= 0.0 or controller.get("kd", 0.0) <= 0.0:
                diags.append("controller gains kp and kd must be positive")

    initial = cfg.get("initial", {})
    if kind in ("h1", "equivalence"):
        if "theta" in initial:
            theta = np.asarray(initial["theta"], dtype=float)
            if theta.shape != (3,) or not np.all(np.isfinite(theta)):
                diags.append("initial.theta must be a finite 3-vector")
        else:
            try:
                R = _rotation_value(initial.get("rotation", "identity"),
                                    "initial.rotation")
                resid = float(np.linalg.norm(R.T @ R - np.eye(3)))
                if resid > 1e-6 or abs(np.linalg.det(R) - 1.0) > 1e-6:
                    diags.append(f"initial.rotation is {resid:.2e} from SO(3)")
            except ConfigError as exc:
                diags.append(str(exc))
            qhat = initial.get("qhat")
            if qhat is not None:
                norm = float(np.linalg.norm(np.asarray(qhat, dtype=float)))
                if abs(norm - 1.0) > 1e-6:
                    diags.append(f"initial.qhat norm {norm} is farther than 1e-6 from 1")
            if initial.get("m", 1) not in (-1, 1):
                diags.append("initial.m must be -1 or +1")
    if kind == "h2":
        theta = np.asarray(initial.get("theta", [0.0, 0.0, 0.0]), dtype=float)
        if theta.shape != (3,) or not np.all(np.isfinite(theta)):
            diags.append("initial.theta must be a finite 3-vector")
    if kind == "stability_sweep":
        system = initial.get("system", "paired")
        if system not in ("h1", "h2", "paired"):
            diags.append(f"initial.system must be h1, h2 or paired, got {system!r}")
        if "states" not in initial and "random" not in initial:
            diags.append("stability_sweep needs initial.states or initial.random")
        if "random" in initial and initial["random"].get("count", 0) < 1:
            diags.append("initial.random.count must be at least 1")

    source = cfg.get("rotation_source", {"type": "constant"})
    if kind == "lift_only":
        stype = source.get("type")
        if stype not in ("constant", "principal_ramp", "from_trace"):
            diags.append(f"rotation_source.type must be constant, principal_ramp or "
                         f"from_trace, got {stype!r}")
        if stype == "from_trace":
            trace_path = (base_dir / source.get("path", "")).resolve()
            if not trace_path.is_file():
                diags.append(f"rotation_source.path not resolvable: {trace_path}")
    return diags


def _lift_params(cfg) -> LiftParams:
    lift = cfg.get("lift", {})
    return LiftParams(alpha=lift.get("alpha", 0.5), delta=lift.get("delta", 0.5))


def _solver_config(cfg) -> SolverConfig:
    solver = cfg.get("solver", {})
    return SolverConfig(
        step=solver.get("step", 1e-3),
        t_max=solver.get("t_max", 10.0),
        j_max=solver.get("j_max", 64),
        event_tol=solver.get("event_tol", 1e-9),
        jump_priority=solver.get("jump_priority", "prefer_first_listed"),
        omega_bound=solver.get("omega_bound", 1.0))


def _plant(cfg) -> PlantParams:
    inertia = cfg.get("plant", {}).get("inertia", "identity")
    if isinstance(inertia, str):
        return PlantParams(InertiaTensor(np.eye(3)))
    return PlantParams(InertiaTensor(_matrix(inertia, "plant.inertia")))


def _controller(cfg):
    controller = cfg.get("controller")
    if controller is None:
        return zero_controller()
    return default_controller(controller["kp"], controller["kd"])


def _rotation_source(cfg, base_dir: Path):
    source = cfg.get("rotation_source", {"type": "constant"})
    stype = source.get("type", "constant")
    if stype == "constant":
        R0 = _rotation_value(source.get("matrix", "identity"), "rotation_source.matrix")
        return ConstantRotation(R0)
    if stype == "principal_ramp":
        base = source.get("base")
        R0 = None if base is None else _rotation_value(base, "rotation_source.base")
        return PrincipalRamp(source.get("axis", [0.0, 0.0, 1.0]),
                             source.get("rate", 0.5), R0)
    raise ConfigError(f"unsupported rotation_source.type {stype!r}")


# ---------------------------------------------------------------------------
# scenario runners


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _checks_to_json(checks: dict) -> dict:
    return {name: {"value": value, "tolerance": tol, "passed": passed}
            for name, (value, tol, passed) in checks.items()}


def _lift_report_json(report) -> dict:
    return {
        "n_samples": report.n_samples,
        "n_dl_jumps": report.n_dl_jumps,
        "n_dm_jumps": report.n_dm_jumps,
        "max_consistency_defect": report.max_consistency_defect,
        "max_theta_norm": report.max_theta_norm,
        "max_dl_theta_defect": report.max_dl_theta_defect,
        "max_dm_shadow_defect": report.max_dm_shadow_defect,
        "max_post_dl_dist": report.max_post_dl_dist,
        "min_same_label_gap": (None if math.isinf(report.min_same_label_gap)
                               else report.min_same_label_gap),
        "checks": _checks_to_json(report.checks),
        "passed": report.passed,
    }


def _jump_log(arc) -> list[dict]:
    return [{"t": rec.t, "j_pre": rec.j_pre, "label": rec.label,
             "chosen_index": rec.chosen_index, "n_candidates": rec.n_candidates}
            for rec in arc.jumps]


def _norm_series_from_rows(columns, rows):
    it = columns.index("t")
    ij = columns.index("j")
    ie = columns.index("event")
    inorm = columns.index("norm_theta")
    ts = [float(r[it]) for r in rows]
    js = [int(r[ij]) for r in rows]
    events = [r[ie] for r in rows]
    norms = [float(r[inorm]) for r in rows]
    return ts, js, events, norms


def _write_norm_plot_data(out_dir, columns, rows, delta):
    ts, js, events, norms = _norm_series_from_rows(columns, rows)
    plot_rows = [[traces.fmt(t), str(j), e, traces.fmt(n)]
                 for t, j, e, n in zip(ts, js, events, norms)]
    traces.write_trace(out_dir / "plot_theta_norm.csv",
                       ["t", "j", "event", "norm_theta"], plot_rows)
    plots.render_theta_norm(ts, norms, events, delta, out_dir / "theta_norm.png")


def _run_lift_only(cfg, out_dir: Path, base_dir: Path, tol_scale: float):
    params = _lift_params(cfg)
    solver = _solver_config(cfg)
    initial = cfg.get("initial", {})
    guess_arr = initial.get("guess")
    guess = None if guess_arr is None else UnitQuaternion.from_array(
        np.asarray(guess_arr, dtype=float))
    m = int(initial.get("m", 1))

    source_cfg = cfg.get("rotation_source", {"type": "constant"})
    meta = {"jump_log": [], "tie_events": [], "warnings": []}
    if source_cfg.get("type") == "from_trace":
        samples = traces.read_rotation_samples((base_dir / source_cfg["path"]).resolve())
        filt = LiftStreamFilter(params, guess=guess)
        stream_rows = []
        for t, R in samples:
            stream_rows.extend(filt.push(t, R))
        report = verify_lift_rows(stream_rows, params,
                                  consistency_tol=1e-6 * tol_scale,
                                  jump_tol=1e-9 * tol_scale,
                                  dist_tol=1e-9 * tol_scale)
        rows = traces.rows_from_stream(stream_rows, params, solver.event_tol)
        meta["warnings"] = filt.warnings
        meta["jump_log"] = [{"t": r.t, "j": r.j, "label": r.event}
                            for r in stream_rows if r.event.startswith("jump")]
        meta["termination"] = "stream_end"
    else:
        source = _rotation_source(cfg, base_dir)
        state0 = init_lift_state(source.rotation(0.0), guess, m)
        system = make_lift_system(params, source, solver.event_tol)
        arc = simulate(system, state0.as_vector(), solver)
        report = verify_lift_arc(arc, source, params,
                                 consistency_tol=1e-6 * tol_scale,
                                 jump_tol=1e-9 * tol_scale,
                                 dist_tol=1e-9 * tol_scale)
        rows = traces.rows_from_lift_arc(arc, source, params)
        meta["jump_log"] = _jump_log(arc)
        meta["tie_events"] = list(system.info["tie_events"])
        meta["termination"] = arc.termination
        meta["projection_residual_max"] = arc.meta.get("projection_residual_max", 0.0)
        problems = arc.validate()
        meta["domain_problems"] = problems
        report.checks["domain_well_formed"] = (float(len(problems)), 0.0, not problems)
        report.passed = report.passed and not problems

    columns = traces.lift_columns()
    traces.write_trace(out_dir / cfg.get("outputs", {}).get("trace", "trace.csv"),
                       columns, rows)
    _write_norm_plot_data(out_dir, columns, rows, params.delta)
    report_json = {"kind": "lift_only", "lift": _lift_report_json(report),
                   "all_passed": report.passed}
    return report_json, meta


def _arc_basic_checks(arc, params, tol_scale: float, skip_first_bound: bool,
                      kind: str):
    """Domain validity, output-norm bound, and jump passthrough for a loop arc."""
    problems = arc.validate()
    max_norm = 0.0
    first = True
    for t, j, x in arc.samples():
        if kind == "h1":
            ev = lift_eval(x[9:13], x[13], x[0:9].reshape(3, 3))
            norm = ev.norm
        else:
            norm = math.sqrt(float(x[0:3] @ x[0:3]))
        if not (first and skip_first_bound):
            max_norm = max(max_norm, norm)
        first = False

    passthrough_ok = True
    jump_norm_defect = 0.0
    for k, rec in enumerate(arc.jumps):
        x_pre = arc.intervals[k].xs[-1]
        x_post = arc.intervals[k + 1].xs[0]
        if kind == "h1":
            if not (np.array_equal(x_pre[14:17], x_post[14:17])
                    and np.array_equal(x_pre[17:], x_post[17:])):
                passthrough_ok = False
        else:
            if not (np.array_equal(x_pre[3:6], x_post[3:6])
                    and np.array_equal(x_pre[6:], x_post[6:])):
                passthrough_ok = False
            n_pre = math.sqrt(float(x_pre[0:3] @ x_pre[0:3]))
            n_post = math.sqrt(float(x_post[0:3] @ x_post[0:3]))
            jump_norm_defect = max(jump_norm_defect, abs(n_pre * n_post - 1.0))

    bound = 1.0 + params.delta + 1e-6 * tol_scale
    checks = {
        "domain_well_formed": (float(len(problems)), 0.0, not problems),
        "output_bound": (max_norm, bound, max_norm <= bound),
        "jump_passthrough": (0.0 if passthrough_ok else 1.0, 0.0, passthrough_ok),
    }
    if kind == "h1":
        max_ortho = 0.0
        for iv in arc.intervals:
            for x in iv.xs:
                R = x[0:9].reshape(3, 3)
                max_ortho = max(max_ortho, float(np.linalg.norm(R.T @ R - np.eye(3))))
        checks["orthogonality"] = (max_ortho, 1e-8 * tol_scale,
                                   max_ortho <= 1e-8 * tol_scale)
    else:
        checks["jump_norm_relation"] = (jump_norm_defect, 1e-9 * tol_scale,
                                        jump_norm_defect <= 1e-9 * tol_scale)
    return checks, problems


def _initial_x1(cfg, ctrl):
    initial = cfg.get("initial", {})
    omega = np.asarray(initial.get("omega", [0.0, 0.0, 0.0]), dtype=float)
    rho = initial.get("rho")
    rho = None if rho is None else np.asarray(rho, dtype=float)
    if "theta" in initial:
        # attitude given as the intended lifted MRP vector (either set)
        theta = np.asarray(initial["theta"], dtype=float)
        R = rot_from_mrp_array(theta)
        qhat = UnitQuaternion.from_array(quat_from_mrp_array(theta))
        return x1_initial(R, omega, q_hat=qhat, m=1, rho=rho, ctrl=ctrl)
    R = _rotation_value(initial.get("rotation", "identity"), "initial.rotation")
    qhat_arr = initial.get("qhat")
    qhat = None if qhat_arr is None else UnitQuaternion.from_array(
        np.asarray(qhat_arr, dtype=float))
    return x1_initial(R, omega, q_hat=qhat, m=int(initial.get("m", 1)),
                      rho=rho, ctrl=ctrl)


def _run_h1(cfg, out_dir: Path, base_dir: Path, tol_scale: float):
    params = _lift_params(cfg)
    solver = _solver_config(cfg)
    plant = _plant(cfg)
    ctrl = _controller(cfg)
    x1 = _initial_x1(cfg, ctrl)
    system = make_h1(plant, ctrl, params, solver.event_tol)
    skip_first = not system.flow_set(0.0, x1.as_vector())
    arc = simulate(system, x1.as_vector(), solver)
    checks, problems = _arc_basic_checks(arc, params, tol_scale, skip_first, "h1")
    columns = traces.h1_columns(ctrl.rho_dim)
    rows = traces.rows_from_h1_arc(arc, ctrl, params)
    traces.write_trace(out_dir / cfg.get("outputs", {}).get("trace", "trace.csv"),
                       columns, rows)
    _write_norm_plot_data(out_dir, columns, rows, params.delta)
    meta = {"jump_log": _jump_log(arc), "tie_events": list(system.info["tie_events"]),
            "termination": arc.termination, "domain_problems": problems,
            "projection_residual_max": arc.meta.get("projection_residual_max", 0.0)}
    report_json = {"kind": "h1", "checks": _checks_to_json(checks),
                   "all_passed": all(c[2] for c in checks.values())}
    return report_json, meta


def _run_h2(cfg, out_dir: Path, base_dir: Path, tol_scale: float):
    params = _lift_params(cfg)
    solver = _solver_config(cfg)
    plant = _plant(cfg)
    ctrl = _controller(cfg)
    initial = cfg.get("initial", {})
    theta = np.asarray(initial.get("theta", [0.0, 0.0, 0.0]), dtype=float)
    omega = np.asarray(initial.get("omega", [0.0, 0.0, 0.0]), dtype=float)
    rho = np.asarray(initial.get("rho", ctrl.rho0), dtype=float)
    x0 = np.concatenate((theta, omega, rho))
    system = make_h2(plant, ctrl, params, solver.event_tol)
    skip_first = not system.flow_set(0.0, x0)
    arc = simulate(system, x0, solver)
    checks, problems = _arc_basic_checks(arc, params, tol_scale, skip_first, "h2")
    columns = traces.h2_columns(ctrl.rho_dim)
    rows = traces.rows_from_h2_arc(arc, ctrl)
    traces.write_trace(out_dir / cfg.get("outputs", {}).get("trace", "trace.csv"),
                       columns, rows)
    ts = [float(r[0]) for r in rows]
    js = [int(r[1]) for r in rows]
    events = [r[2] for r in rows]
    norms = [math.sqrt(float(r[3]) ** 2 + float(r[4]) ** 2 + float(r[5]) ** 2)
             for r in rows]
    plot_rows = [[traces.fmt(t), str(j), e, traces.fmt(n)]
                 for t, j, e, n in zip(ts, js, events, norms)]
    traces.write_trace(out_dir / "plot_theta_norm.csv",
                       ["t", "j", "event", "norm_theta"], plot_rows)
    plots.render_theta_norm(ts, norms, events, params.delta, out_dir / "theta_norm.png")
    meta = {"jump_log": _jump_log(arc), "termination": arc.termination,
            "domain_problems": problems}
    report_json = {"kind": "h2", "checks": _checks_to_json(checks),
                   "all_passed": all(c[2] for c in checks.values())}
    return report_json, meta


def _run_equivalence(cfg, out_dir: Path, base_dir: Path, tol_scale: float):
    params = _lift_params(cfg)
    solver = _solver_config(cfg)
    plant = _plant(cfg)
    ctrl = _controller(cfg)
    x1 = _initial_x1(cfg, ctrl)
    x2 = x2_from_x1(x1)
    sys1 = make_h1(plant, ctrl, params, solver.event_tol)
    sys2 = make_h2(plant, ctrl, params, solver.event_tol)
    arc1 = simulate(sys1, x1.as_vector(), solver)
    arc2 = simulate(sys2, x2.as_vector(), solver)
    err1 = step_halving_error(sys1, x1.as_vector(), solver)
    err2 = step_halving_error(sys2, x2.as_vector(), solver)
    tol = 10.0 * max(err1, err2, 1e-12) * tol_scale
    report = check_equivalence(arc1, arc2, tol)

    traces.write_trace(out_dir / cfg.get("outputs", {}).get("trace_h1", "trace_h1.csv"),
                       traces.h1_columns(ctrl.rho_dim),
                       traces.rows_from_h1_arc(arc1, ctrl, params))
    traces.write_trace(out_dir / cfg.get("outputs", {}).get("trace_h2", "trace_h2.csv"),
                       traces.h2_columns(ctrl.rho_dim),
                       traces.rows_from_h2_arc(arc2, ctrl))
    dev_rows = [[traces.fmt(t), traces.fmt(d)] for t, d in report.series]
    traces.write_trace(out_dir / "plot_deviation.csv", ["t", "deviation"], dev_rows)
    plots.render_equivalence([p[0] for p in report.series],
                             [p[1] for p in report.series], tol,
                             out_dir / "deviation.png")
    meta = {"jump_log_h1": _jump_log(arc1), "jump_log_h2": _jump_log(arc2),
            "tie_events": list(sys1.info["tie_events"]),
            "step_halving_error_h1": err1, "step_halving_error_h2": err2}
    report_json = {
        "kind": "equivalence",
        "tolerance": tol,
        "max_dev": report.max_dev,
        "max_dev_rotation": report.max_dev_rotation,
        "max_dev_theta": report.max_dev_theta,
        "max_dev_omega": report.max_dev_omega,
        "max_dev_rho": report.max_dev_rho,
        "n_dm_jumps": report.n_dm_jumps,
        "n_dl_jumps": report.n_dl_jumps,
        "jprime_le_j": report.jprime_le_j,
        "strict_after_first_dl": report.strict_after_first_dl,
        "all_passed": report.passed,
    }
    return report_json, meta


def _sweep_initial_states(cfg, seed: int):
    """Deterministic list of (theta, omega) initial pairs for a sweep."""
    initial = cfg.get("initial", {})
    pairs = []
    if "states" in initial:
        for entry in initial["states"]:
            pairs.append((np.asarray(entry["theta"], dtype=float),
                          np.asarray(entry.get("omega", [0.0, 0.0, 0.0]), dtype=float)))
    else:
        spec = initial["random"]
        rng = np.random.default_rng(seed)
        for _ in range(int(spec["count"])):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            theta = direction * rng.uniform(0.1, spec.get("max_theta_norm", 1.0))
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            omega = axis * rng.uniform(0.0, spec.get("max_omega", 0.5))
            pairs.append((theta, omega))
    return pairs


def _x1_vector_for_theta(theta, omega, ctrl):
    """Rotation-space state whose lifted output equals the given MRP vector."""
    R = rot_from_mrp_array(theta)
    qhat = quat_from_mrp_array(theta)
    x1 = x1_initial(R, omega, q_hat=UnitQuaternion.from_array(qhat), m=1, ctrl=ctrl)
    return x1.as_vector()


def _stability_record_json(rec) -> dict:
    return {"index": rec.index, "initial_distance": rec.initial_distance,
            "final_distance": rec.final_distance, "peak_distance": rec.peak_distance,
            "peak_over_initial": rec.peak_over_initial, "converged": rec.converged,
            "termination": rec.termination, "n_jumps": rec.n_jumps}


def _sweep_case(payload):
    """One sweep case; module-level so worker processes can import it."""
    cfg, seed, idx = payload
    params = _lift_params(cfg)
    solver = _solver_config(cfg)
    plant = _plant(cfg)
    ctrl = _controller(cfg)
    theta, omega = _sweep_initial_states(cfg, seed)[idx]
    system_kind = cfg.get("initial", {}).get("system", "paired")
    threshold = cfg.get("checks", {}).get("convergence_threshold", 1e-3)
    out = {"index": idx}
    if system_kind in ("h2", "paired"):
        sys2 = make_h2(plant, ctrl, params, solver.event_tol)
        x0 = np.concatenate((theta, omega, ctrl.rho0))
        rep = stability_evidence(sys2, h2_origin_target(), [x0], solver,
                                 convergence_threshold=threshold)
        out["h2"] = rep.records[0]
    if system_kind in ("h1", "paired"):
        sys1 = make_h1(plant, ctrl, params, solver.event_tol)
        x0 = _x1_vector_for_theta(theta, omega, ctrl)
        rep = stability_evidence(sys1, h1_origin_target(), [x0], solver,
                                 convergence_threshold=threshold)
        out["h1"] = rep.records[0]
    return out


def _run_stability_sweep(cfg, out_dir: Path, base_dir: Path, tol_scale: float,
                         seed: int, workers: int):
    pairs = _sweep_initial_states(cfg, seed)
    payloads = [(cfg, seed, idx) for idx in range(len(pairs))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_case, payloads))
    else:
        results = [_sweep_case(p) for p in payloads]

    checks_cfg = cfg.get("checks", {})
    require_converged = checks_cfg.get("require_converged", True)
    threshold = checks_cfg.get("convergence_threshold", 1e-3)
    system_kind = cfg.get("initial", {}).get("system", "paired")

    case_reports = []
    series_by_ic = []
    all_converged = True
    verdicts_agree = True
    for res in sorted(results, key=lambda r: r["index"]):
        entry = {"index": res["index"]}
        rec_for_plot = None
        for name in ("h1", "h2"):
            if name in res:
                entry[name] = _stability_record_json(res[name])
                all_converged = all_converged and res[name].converged
                rec_for_plot = res[name]
        if system_kind == "paired":
            agree = res["h1"].converged == res["h2"].converged
            entry["verdicts_agree"] = agree
            entry["final_gap"] = abs(res["h1"].final_distance - res["h2"].final_distance)
            verdicts_agree = verdicts_agree and agree
        case_reports.append(entry)
        if rec_for_plot is not None:
            series_by_ic.append((res["index"], rec_for_plot.series))

    plot_rows = []
    for idx, series in series_by_ic:
        for t, d in series:
            plot_rows.append([str(idx), traces.fmt(t), traces.fmt(d)])
    traces.write_trace(out_dir / "plot_distance.csv", ["ic", "t", "distance"], plot_rows)
    plots.render_distance(series_by_ic, threshold, out_dir / "distance.png")

    checks = {}
    if require_converged:
        checks["all_converged"] = {"value": float(all_converged), "tolerance": 1.0,
                                   "passed": all_converged}
    if system_kind == "paired":
        checks["verdicts_agree"] = {"value": float(verdicts_agree), "tolerance": 1.0,
                                    "passed": verdicts_agree}
    all_passed = all(c["passed"] for c in checks.values()) if checks else True
    report_json = {"kind": "stability_sweep", "cases": case_reports,
                   "convergence_threshold": threshold, "checks": checks,
                   "all_passed": all_passed}
    meta = {"n_cases": len(pairs), "system": system_kind, "seed": seed}
    return report_json, meta


_RUNNERS = {
    "lift_only": _run_lift_only,
    "h1": _run_h1,
    "h2": _run_h2,
    "equivalence": _run_equivalence,
}


# ---------------------------------------------------------------------------
# entry points


def _resolve_out_dir(arg_value) -> Path:
    if arg_value:
        return Path(arg_value)
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env) if env else Path("out")


def run_command(args) -> int:
    config_path = Path(args.config)
    base_dir = config_path.parent
    try:
        cfg = load_config(config_path)
        diags = validate_config(cfg, base_dir)
        if diags:
            raise ConfigError("; ".join(diags))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG

    out_dir = _resolve_out_dir(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = cfg["kind"]
    try:
        if kind == "stability_sweep":
            report_json, meta = _run_stability_sweep(
                cfg, out_dir, base_dir, args.tol_scale, args.seed, args.workers)
        else:
            report_json, meta = _RUNNERS[kind](cfg, out_dir, base_dir, args.tol_scale)
    except (InvalidInitialStateError, SimulationBlowupError, SingularMrpError,
            InvalidStateError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return _EXIT_SIMULATION
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG

    outputs = cfg.get("outputs", {})
    _write_json(out_dir / outputs.get("report", "report.json"), report_json)
    from . import __version__
    metadata = {
        "package_version": __version__,
        "config_path": str(config_path),
        "config": cfg,
        "seed": args.seed,
        "tol_scale": args.tol_scale,
        "workers": args.workers,
        # wall-clock stamp; the documented exception to byte-determinism
        "timestamp_unix": time.time(),
    }
    metadata.update(meta)
    _write_json(out_dir / outputs.get("metadata", "run_metadata.json"), metadata)

    if not report_json.get("all_passed", False):
        print(f"check failure: see {out_dir / outputs.get('report', 'report.json')}",
              file=sys.stderr)
        return _EXIT_CHECK_FAILURE
    return 0


def validate_command(args) -> int:
    config_path = Path(args.config)
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    diags = validate_config(cfg, config_path.parent)
    for diag in diags:
        print(diag)
    if diags:
        print(f"config error: {len(diags)} diagnostic(s)", file=sys.stderr)
        return _EXIT_CONFIG
    print("configuration OK")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrplift",
        description="Hybrid MRP path-lifting scenarios: simulate, verify, report.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write artifacts")
    run_p.add_argument("--config", required=True, help="scenario JSON path")
    run_p.add_argument("--out-dir", default=None,
                       help=f"output directory (default ${OUT_DIR_ENV} or ./out)")
    run_p.add_argument("--workers", type=int, default=1,
                       help="worker processes for stability sweeps")
    run_p.add_argument("--seed", type=int, default=0,
                       help="seed for random initial-condition sweeps")
    run_p.add_argument("--tol-scale", type=float, default=1.0,
                       help="scale factor applied to check tolerances")
    run_p.set_defaults(func=run_command)

    val_p = sub.add_parser("validate", help="report configuration diagnostics")
    val_p.add_argument("--config", required=True, help="scenario JSON path")
    val_p.set_defaults(func=validate_command)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
