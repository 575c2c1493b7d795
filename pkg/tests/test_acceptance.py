"""Acceptance suite: every verification criterion at its stated tolerance.

Each criterion prints one PASS/FAIL line (visible with ``pytest -s`` or in
captured output on failure). The paired closed-loop batch used by the
correspondence and convergence criteria is simulated once in a module-scoped
fixture.
"""

import json
import math
import time
from dataclasses import dataclass

import numpy as np
import pytest

from mrplift.attitude import (
    Mrp,
    UnitQuaternion,
    mrp_from_quat_array,
    quat_from_mrp_array,
    rot_from_mrp_array,
    rot_from_quat_array,
    shadow_array,
)
from mrplift.closed_loop import (
    PlantParams,
    check_equivalence,
    default_controller,
    evaluate_arc_stability,
    h1_origin_target,
    h2_origin_target,
    make_h1,
    make_h2,
    step_halving_error,
    x1_initial,
    x2_from_x1,
    zero_controller,
)
from mrplift.attitude import InertiaTensor
from mrplift.cli import main
from mrplift.hybrid import HybridSystem, SolverConfig, simulate
from mrplift.lifting import LiftParams, init_lift_state, lift_eval, verify_lift_arc, make_lift_system
from mrplift.trajectories import PiecewiseConstantOmega, PrincipalRamp


def _verdict(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok


def _random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _random_mrps(rng, n, lo, hi):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * 10.0 ** rng.uniform(math.log10(lo), math.log10(hi), size=(n, 1))


# ---------------------------------------------------------------------------
# criterion 1: map identities at scale


def test_criterion_1_map_identity_suite():
    n = 120_000
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    q = _random_unit_quats(rng, n)

    R = rot_from_quat_array(q)
    dev_cover = float(np.max(np.abs(R - rot_from_quat_array(-q))))
    ortho = float(np.max(np.linalg.norm(
        np.swapaxes(R, -1, -2) @ R - np.eye(3), axis=(-2, -1))))
    det_dev = float(np.max(np.abs(np.linalg.det(R) - 1.0)))

    v = _random_mrps(rng, n, 1e-3, 1e3)
    dev_shadow_cover = float(np.max(np.abs(
        rot_from_mrp_array(v) - rot_from_mrp_array(shadow_array(v)))))

    w = _random_mrps(rng, n, 1e-4, 1e4)
    involution_rel = float(np.max(
        np.linalg.norm(shadow_array(shadow_array(w)) - w, axis=1)
        / np.linalg.norm(w, axis=1)))

    # projection round trip over random attitudes (south-pole cap excluded)
    mask = q[:, 0] > -1.0 + 1e-6
    vq = mrp_from_quat_array(q[mask])
    dev_round = float(np.max(np.abs(mrp_from_quat_array(quat_from_mrp_array(vq)) - vq)))

    dev_cover_consistency = float(np.max(np.abs(
        rot_from_mrp_array(vq) - rot_from_quat_array(q[mask]))))

    elapsed = time.perf_counter() - start
    ok = (
        _verdict("double cover R(q) = R(-q)", dev_cover <= 1e-12, f"max {dev_cover:.2e}")
        & _verdict("R(q) orthogonal, unit det", max(ortho, det_dev) <= 1e-9,
                   f"max {max(ortho, det_dev):.2e}")
        & _verdict("rotation of both MRP sets equal", dev_shadow_cover <= 1e-9,
                   f"max {dev_shadow_cover:.2e}")
        & _verdict("shadow involution", involution_rel <= 1e-10,
                   f"max rel {involution_rel:.2e}")
        & _verdict("stereographic round trip", dev_round <= 1e-10,
                   f"max {dev_round:.2e}")
        & _verdict("MRP rotation matches quaternion rotation",
                   dev_cover_consistency <= 1e-9, f"max {dev_cover_consistency:.2e}")
        & _verdict("criterion 1 runtime < 10 s", elapsed < 10.0, f"{elapsed:.2f} s")
    )
    assert ok


# ---------------------------------------------------------------------------
# criterion 2: kinematic consistency by central differences


def test_criterion_2_kinematic_consistency():
    n = 1000
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    v = _random_mrps(rng, n, 0.05, 1.5)
    w = rng.normal(size=(n, 3))
    w /= np.maximum(np.linalg.norm(w, axis=1, keepdims=True), 1.0)

    n2 = np.sum(v * v, axis=1, keepdims=True)
    cross_vw = np.cross(v, w)
    dot_vw = np.sum(v * w, axis=1, keepdims=True)
    d = 0.25 * ((1.0 - n2) * w + 2.0 * cross_vw + 2.0 * v * dot_vw)

    h = 1e-5
    lhs = (rot_from_mrp_array(v + h * d) - rot_from_mrp_array(v - h * d)) / (2.0 * h)
    S = np.zeros((n, 3, 3))
    S[:, 0, 1] = -w[:, 2]
    S[:, 0, 2] = w[:, 1]
    S[:, 1, 0] = w[:, 2]
    S[:, 1, 2] = -w[:, 0]
    S[:, 2, 0] = -w[:, 1]
    S[:, 2, 1] = w[:, 0]
    rhs = rot_from_mrp_array(v) @ S
    err = float(np.max(np.abs(lhs - rhs)))
    elapsed = time.perf_counter() - start
    ok = (_verdict("directional derivative of the rotation map", err <= 1e-7,
                   f"max {err:.2e} over {n} points")
          & _verdict("criterion 2 runtime < 5 s", elapsed < 5.0, f"{elapsed:.2f} s"))
    assert ok


# ---------------------------------------------------------------------------
# criterion 3: lift consistency and bound over random bounded-rate rotations


def test_criterion_3_lift_consistency_and_bound():
    start = time.perf_counter()
    params = LiftParams(alpha=0.5, delta=0.5)
    cfg = SolverConfig(step=1e-3, t_max=20.0, j_max=400, omega_bound=1.0)
    rng = np.random.default_rng(103)
    worst = {"consistency": 0.0, "norm": 0.0, "dl": 0.0, "dm": 0.0, "dist": 0.0}
    n_dl = n_dm = 0
    for _ in range(100):
        src = PiecewiseConstantOmega.random_bounded(rng, cfg.t_max, cfg.omega_bound)
        system = make_lift_system(params, src, cfg.event_tol)
        arc = simulate(system, init_lift_state(src.rotation(0.0)).as_vector(), cfg)
        rep = verify_lift_arc(arc, src, params)
        worst["consistency"] = max(worst["consistency"], rep.max_consistency_defect)
        worst["norm"] = max(worst["norm"], rep.max_theta_norm)
        worst["dl"] = max(worst["dl"], rep.max_dl_theta_defect)
        worst["dm"] = max(worst["dm"], rep.max_dm_shadow_defect)
        worst["dist"] = max(worst["dist"], rep.max_post_dl_dist)
        n_dl += rep.n_dl_jumps
        n_dm += rep.n_dm_jumps
    elapsed = time.perf_counter() - start
    bound = 1.0 + params.delta + 1e-6
    ok = (
        _verdict("lift reproduces the input rotation", worst["consistency"] <= 1e-6,
                 f"max defect {worst['consistency']:.2e}")
        & _verdict("output norm bounded by 1 + delta", worst["norm"] <= bound,
                   f"max {worst['norm']:.9f} vs {bound}")
        & _verdict("memory updates leave the output fixed", worst["dl"] <= 1e-9,
                   f"max {worst['dl']:.2e} over {n_dl} jumps")
        & _verdict("set switches land on the shadow", worst["dm"] <= 1e-9,
                   f"max {worst['dm']:.2e} over {n_dm} jumps")
        & _verdict("memory distance resets to zero", worst["dist"] <= 1e-9,
                   f"max {worst['dist']:.2e}")
        & _verdict("criterion 3 runtime < 2 min", elapsed < 120.0, f"{elapsed:.1f} s")
    )
    assert ok


# ---------------------------------------------------------------------------
# criterion 4: closed-form principal rotation


def test_criterion_4_principal_rotation_closed_form():
    rate = 2.0 * math.pi / 10.0
    delta = 0.2
    params = LiftParams(alpha=0.5, delta=delta)
    src = PrincipalRamp([0, 0, 1], rate)
    cfg = SolverConfig(step=1e-3, t_max=10.0, j_max=20)
    system = make_lift_system(params, src, cfg.event_tol)
    arc = simulate(system, init_lift_state(src.rotation(0.0)).as_vector(), cfg)

    dm = [rec for rec in arc.jumps if rec.label == "Dm"]
    t_expected = 4.0 * math.atan(1.0 + delta) / rate
    jump_ok = len(dm) == 1 and abs(dm[0].t - t_expected) <= 2.0 * cfg.event_tol

    worst = 0.0
    for t, _, x in arc.samples():
        if t < dm[0].t:
            ev = lift_eval(x[0:4], x[4], src.rotation(t))
            expected = math.tan(rate * t / 4.0) * np.array([0.0, 0.0, 1.0])
            worst = max(worst, float(np.max(np.abs(ev.theta - expected))))
    ok = (_verdict("single set switch at tan(angle/4) = 1 + delta", jump_ok,
                   f"t = {dm[0].t:.9f} vs {t_expected:.9f}")
          & _verdict("pre-switch output matches tan(angle/4) axis", worst <= 1e-6,
                     f"max {worst:.2e}"))
    assert ok


# ---------------------------------------------------------------------------
# criteria 5 and 6: paired closed-loop batch


@dataclass
class PairedRun:
    index: int
    forcing: bool
    over_pi: bool
    theta0: np.ndarray
    arc1: object
    arc2: object
    tol: float
    equivalence: object
    rec1: object
    rec2: object
    halving: float


@pytest.fixture(scope="module")
def paired_batch():
    rng = np.random.default_rng(105)
    params = LiftParams(alpha=0.5, delta=0.2)
    cfg = SolverConfig(step=2e-3, t_max=16.0, j_max=64)
    runs = []
    start = time.perf_counter()
    for idx in range(25):
        forcing = idx >= 15
        if forcing:
            norm = rng.uniform(1.25, 1.9)
        elif idx >= 8:
            norm = rng.uniform(1.01, 1.15)   # beyond a half turn, inside the band
        else:
            norm = rng.uniform(0.35, 0.95)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        theta0 = direction * norm
        omega0 = rng.normal(size=3)
        omega0 *= rng.uniform(0.0, 0.6) / np.linalg.norm(omega0)

        J = np.diag(rng.uniform(0.8, 1.8, size=3))
        kp = rng.uniform(6.0, 16.0)
        kd = math.sqrt(kp) * rng.uniform(1.0, 1.4)
        plant = PlantParams(InertiaTensor(J))
        ctrl = default_controller(kp=kp, kd=kd)

        qhat = UnitQuaternion.from_array(quat_from_mrp_array(theta0))
        x1 = x1_initial(rot_from_mrp_array(theta0), omega0, q_hat=qhat, ctrl=ctrl)
        x2 = x2_from_x1(x1)

        sys1 = make_h1(plant, ctrl, params, cfg.event_tol)
        sys2 = make_h2(plant, ctrl, params, cfg.event_tol)
        arc1 = simulate(sys1, x1.as_vector(), cfg)
        arc2 = simulate(sys2, x2.as_vector(), cfg)
        err1 = step_halving_error(sys1, x1.as_vector(), cfg, arc_h=arc1)
        err2 = step_halving_error(sys2, x2.as_vector(), cfg, arc_h=arc2)
        halving = max(err1, err2)
        tol = 10.0 * max(halving, 1e-12)
        equivalence = check_equivalence(arc1, arc2, tol)
        rec1 = evaluate_arc_stability(arc1, h1_origin_target())
        rec2 = evaluate_arc_stability(arc2, h2_origin_target())
        runs.append(PairedRun(
            index=idx, forcing=forcing, over_pi=norm > 1.0, theta0=theta0,
            arc1=arc1, arc2=arc2, tol=tol, equivalence=equivalence,
            rec1=rec1, rec2=rec2, halving=halving))
    elapsed = time.perf_counter() - start
    return runs, params, cfg, elapsed


def test_criterion_5_trajectory_correspondence(paired_batch):
    runs, params, cfg, elapsed = paired_batch
    all_pass = all(r.equivalence.passed for r in runs)
    ordering = all(r.equivalence.jprime_le_j for r in runs)
    strict = all(r.equivalence.strict_after_first_dl for r in runs)
    n_forcing = sum(1 for r in runs if r.equivalence.n_dm_jumps >= 1)
    worst_margin = max(r.equivalence.max_dev / r.tol for r in runs)
    ok = (
        _verdict("25 paired runs aligned within 10x integration error", all_pass,
                 f"worst dev/tol = {worst_margin:.3f}")
        & _verdict("reduced jump counter never exceeds the full one", ordering, "")
        & _verdict("strict inequality after the first memory update", strict, "")
        & _verdict(">= 10 runs exercised a set switch", n_forcing >= 10,
                   f"{n_forcing} runs")
        & _verdict("criterion 5 runtime < 5 min (incl. shared batch)",
                   elapsed < 300.0, f"{elapsed:.1f} s")
    )
    assert ok


def test_criterion_6_stability_equivalence_evidence(paired_batch):
    runs, params, cfg, _ = paired_batch
    verdicts_match = all(r.rec1.converged == r.rec2.converged for r in runs)
    all_converged = all(r.rec1.converged and r.rec2.converged for r in runs)
    gap_ok = True
    worst_gap = 0.0
    for r in runs:
        gap = abs(r.rec1.final_distance - r.rec2.final_distance)
        gap_tol = 10.0 * max(r.halving, 1e-10)
        worst_gap = max(worst_gap, gap / gap_tol)
        gap_ok = gap_ok and gap <= gap_tol

    # anti-unwinding: arcs from attitudes beyond a half turn keep the output
    # inside the hysteresis ball; states born beyond the switch surface jump
    # at (0, 0) before flowing, so the bound applies from the first post-jump
    # sample
    bound = 1.0 + params.delta + 1e-6
    bound_ok = True
    worst_norm = 0.0
    for r in runs:
        if not r.over_pi:
            continue
        for arc, norm_of in ((r.arc1, _h1_norm), (r.arc2, _h2_norm)):
            first = True
            for _, _, x in arc.samples():
                if first and r.forcing:
                    first = False
                    continue
                first = False
                norm = norm_of(x)
                worst_norm = max(worst_norm, norm)
                bound_ok = bound_ok and norm <= bound
    ok = (
        _verdict("paired loops give identical convergence verdicts", verdicts_match, "")
        & _verdict("all basin starts converged", all_converged, "")
        & _verdict("final distances agree within 10x integration tolerance", gap_ok,
                   f"worst gap/tol = {worst_gap:.3f}")
        & _verdict("over-half-turn starts never leave the hysteresis ball", bound_ok,
                   f"max norm {worst_norm:.9f} vs {bound}")
    )
    assert ok


def _h1_norm(x):
    return lift_eval(x[9:13], x[13], x[0:9].reshape(3, 3)).norm


def _h2_norm(x):
    return math.sqrt(float(x[0:3] @ x[0:3]))


# ---------------------------------------------------------------------------
# criterion 7: integrator diagnostics


def test_criterion_7_integrator_diagnostics():
    decay = HybridSystem(
        state_dim=1,
        flow_set=lambda t, x: True,
        flow_map=lambda t, x: -x,
        jump_set=lambda t, x: False,
        jump_map=lambda t, x: [],
    )
    errors = []
    for step in (0.1, 0.05):
        arc = simulate(decay, [1.0], SolverConfig(step=step, t_max=1.0))
        errors.append(abs(arc.final_state()[2][0] - math.exp(-1.0)))
    factor = errors[0] / errors[1]
    order_ok = 8.0 <= factor <= 32.0

    plant = PlantParams(InertiaTensor(np.diag([1.0, 2.0, 3.0])))
    ctrl = zero_controller()
    sys1 = make_h1(plant, ctrl, LiftParams(alpha=0.5, delta=0.5))
    w0 = np.array([0.3, -0.2, 0.5])
    x1 = x1_initial(np.eye(3), w0, ctrl=ctrl)
    arc = simulate(sys1, x1.as_vector(), SolverConfig(step=1e-3, t_max=10.0, j_max=64))
    J = plant.inertia.j
    E0 = 0.5 * w0 @ J @ w0
    L0 = float(np.linalg.norm(J @ w0))
    dE = dL = 0.0
    for _, _, x in arc.samples():
        w = x[14:17]
        dE = max(dE, abs(0.5 * w @ J @ w - E0) / E0)
        dL = max(dL, abs(float(np.linalg.norm(J @ w)) - L0) / L0)
    ok = (
        _verdict("step halving reduces endpoint error ~16x", order_ok,
                 f"factor {factor:.2f}")
        & _verdict("torque-free energy conserved to 1e-6", dE <= 1e-6, f"{dE:.2e}")
        & _verdict("torque-free momentum norm conserved to 1e-6", dL <= 1e-6,
                   f"{dL:.2e}")
    )
    assert ok


# ---------------------------------------------------------------------------
# criterion 8: determinism


def test_criterion_8_determinism(tmp_path):
    cfg = {
        "schema_version": 1,
        "kind": "lift_only",
        "lift": {"alpha": 0.5, "delta": 0.2},
        "solver": {"step": 1e-3, "t_max": 10.0, "j_max": 20},
        "rotation_source": {"type": "principal_ramp", "axis": [0, 0, 1],
                            "rate": 2.0 * math.pi / 10.0},
    }
    cfg_path = tmp_path / "scenario.json"
    cfg_path.write_text(json.dumps(cfg))
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for out in outs:
        assert main(["run", "--config", str(cfg_path), "--out-dir", str(out)]) == 0
    trace_same = (outs[0] / "trace.csv").read_bytes() == (outs[1] / "trace.csv").read_bytes()
    report_same = (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()

    h2cfg = {
        "schema_version": 1,
        "kind": "h2",
        "lift": {"alpha": 0.5, "delta": 0.2},
        "solver": {"step": 2e-3, "t_max": 6.0, "j_max": 32},
        "plant": {"inertia": [[1.0, 0, 0], [0, 1.2, 0], [0, 0, 1.5]]},
        "controller": {"kp": 10.0, "kd": 5.0},
        "initial": {"theta": [0.0, 0.0, 1.3], "omega": [0.1, 0.0, 0.0]},
    }
    h2_path = tmp_path / "h2.json"
    h2_path.write_text(json.dumps(h2cfg))
    outs2 = [tmp_path / "h1r", tmp_path / "h2r"]
    for out in outs2:
        assert main(["run", "--config", str(h2_path), "--out-dir", str(out)]) == 0
    trace2_same = (outs2[0] / "trace.csv").read_bytes() == (outs2[1] / "trace.csv").read_bytes()

    ok = (_verdict("repeated lift runs are byte-identical", trace_same and report_same, "")
          & _verdict("repeated closed-loop runs are byte-identical", trace2_same, ""))
    assert ok
