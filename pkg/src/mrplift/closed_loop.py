"""Closed-loop rigid-body attitude systems in rotation space and MRP space.

Two hybrid systems share one MRP-based feedback controller:

* the rotation-space loop integrates the rigid body on SO(3) together with
  the lifting filter, feeding the controller the lifted MRP output;
* the MRP-space loop integrates the body dynamics directly in MRP
  coordinates with the set-switch jump at norm 1 + delta.

Solutions of the two loops correspond sample-for-sample once the
rotation-space jump counter is reduced to its set-switch subsequence; the
checker and the stability-evidence harness below measure that correspondence
on simulated arcs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .attitude import (
    InertiaTensor,
    Mrp,
    RotationMatrix,
    UnitQuaternion,
    canonical_quat,
    project_to_so3,
    rot_from_mrp_array,
)
from .errors import InvalidStateError, SingularMrpError, StructuralMismatchError
from .hybrid import HybridArc, HybridSystem, SolverConfig, simulate
from .lifting import LiftParams, init_lift_state, lift_eval

# h1 state layout: R row-major [0:9], q_hat [9:13], m [13], omega [14:17], rho [17:]
_H1_RHO0 = 17
# h2 state layout: theta [0:3], omega [3:6], rho [6:]
_H2_RHO0 = 6


@dataclass(frozen=True)
class ControllerSpec:
    """MRP feedback controller: torque output plus optional internal state.

    torque(theta, omega, rho) and rho_dot(theta, omega, rho) receive the MRP
    vector as a plain length-3 array (the flow sets keep it finite), the
    body rates, and the internal state of dimension rho_dim.
    """

    torque: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    rho_dot: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None
    rho_dim: int = 0
    rho0: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.rho_dim < 0:
            raise InvalidStateError("rho_dim must be non-negative")
        rho0 = np.asarray(self.rho0, dtype=float)
        if rho0.shape != (self.rho_dim,):
            raise InvalidStateError(f"rho0 must have shape ({self.rho_dim},)")
        if self.rho_dim > 0 and self.rho_dot is None:
            raise InvalidStateError("controllers with internal state need rho_dot")
        object.__setattr__(self, "rho0", rho0)


def controller_torque(ctrl: ControllerSpec, theta: Mrp, omega, rho=None) -> np.ndarray:
    """Evaluate a controller on typed inputs; rejects the point at infinity."""
    if not theta.is_finite:
        raise SingularMrpError("controller torque is undefined at the MRP point at infinity")
    omega = omega.w if hasattr(omega, "w") else np.asarray(omega, dtype=float)
    rho = ctrl.rho0 if rho is None else np.asarray(rho, dtype=float)
    return np.asarray(ctrl.torque(theta.vec, omega, rho), dtype=float)


def default_controller(kp: float, kd: float) -> ControllerSpec:
    """Static PD law tau = -kp*theta - kd*omega with no internal state."""
    if kp <= 0.0 or kd <= 0.0:
        raise InvalidStateError("controller gains must be positive")

    def torque(theta, omega, rho):
        return -kp * theta - kd * omega

    return ControllerSpec(torque=torque)


def zero_controller() -> ControllerSpec:
    """Torque-free controller (free rigid body)."""
    zero = np.zeros(3)

    def torque(theta, omega, rho):
        return zero

    return ControllerSpec(torque=torque)


@dataclass(frozen=True)
class PlantParams:
    """Rigid-body plant: the inertia tensor."""

    inertia: InertiaTensor


@dataclass(frozen=True)
class X1State:
    """Rotation-space loop state (R, q_hat, m, omega, rho)."""

    R: RotationMatrix
    q_hat: UnitQuaternion
    m: int
    omega: np.ndarray
    rho: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate((self.R.m.ravel(), self.q_hat.as_array(),
                               [float(self.m)], np.asarray(self.omega, float),
                               np.asarray(self.rho, float)))

    @classmethod
    def from_vector(cls, x, rho_dim: int = 0) -> "X1State":
        return cls(RotationMatrix(x[0:9].reshape(3, 3)),
                   UnitQuaternion.from_array(x[9:13]),
                   int(x[13] > 0.0) * 2 - 1, x[14:17].copy(),
                   x[_H1_RHO0:_H1_RHO0 + rho_dim].copy())


@dataclass(frozen=True)
class X2State:
    """MRP-space loop state (theta, omega, rho).

    The vectorized form requires finite theta; start from the shadow set
    (which represents the same attitude with norm 1/||theta||) instead of the
    point at infinity.
    """

    theta: Mrp
    omega: np.ndarray
    rho: np.ndarray

    def as_vector(self) -> np.ndarray:
        if not self.theta.is_finite:
            raise SingularMrpError(
                "the MRP-space loop cannot start at infinity; use the shadow set")
        return np.concatenate((self.theta.vec, np.asarray(self.omega, float),
                               np.asarray(self.rho, float)))

    @classmethod
    def from_vector(cls, x, rho_dim: int = 0) -> "X2State":
        return cls(Mrp.finite(x[0:3]), x[3:6].copy(),
                   x[_H2_RHO0:_H2_RHO0 + rho_dim].copy())


def x1_initial(R, omega, q_hat: UnitQuaternion | None = None, m: int = 1,
               rho=None, ctrl: ControllerSpec | None = None) -> X1State:
    """Assemble a rotation-space initial state.

    When q_hat is omitted it is initialized onto the quaternion pair of R,
    which puts the lifting filter at set distance zero.
    """
    R = R if isinstance(R, RotationMatrix) else RotationMatrix(R)
    if q_hat is None:
        q_hat = init_lift_state(R).q_hat
    if rho is None:
        rho = ctrl.rho0 if ctrl is not None else np.zeros(0)
    return X1State(R, q_hat, m, np.asarray(omega, float), np.asarray(rho, float))


def x2_from_x1(x1: X1State) -> X2State:
    """MRP-space initial state corresponding to a rotation-space state."""
    ev = lift_eval(x1.q_hat.as_array(), float(x1.m), x1.R.m)
    if ev.theta is None:
        raise SingularMrpError("the lifted output of x1 is at infinity")
    return X2State(Mrp.finite(ev.theta), x1.omega.copy(), x1.rho.copy())


def _skew_matrix(w):
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def _cross(a, b):
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def make_h1(plant: PlantParams, ctrl: ControllerSpec, params: LiftParams,
            event_tol: float = 1e-9) -> HybridSystem:
    """Rotation-space closed loop: rigid body on SO(3) + lifting filter + controller.

    Flows integrate dR/dt = R [omega]x and J domega/dt = [J omega]x omega +
    tau evaluated at the lifted MRP output; jumps update only the filter
    state (memory reset on "Dl", set switch on "Dm") and pass omega and rho
    through unchanged. After every flow step R is re-projected onto SO(3) and
    q_hat onto S3.
    """
    J = plant.inertia.j
    Jinv = np.linalg.inv(J)
    alpha, delta = params.alpha, params.delta
    bound = 1.0 + delta
    nrho = ctrl.rho_dim
    dim = _H1_RHO0 + nrho
    tie_events: list[float] = []
    cache: dict = {"key": None, "val": None}

    def classify(x: np.ndarray):
        key = x.tobytes()
        if cache["key"] == key:
            return cache["val"]
        ev = lift_eval(x[9:13], x[13], x[0:9].reshape(3, 3))
        cache["key"] = key
        cache["val"] = ev
        return ev

    def flow_map(t, x):
        R = x[0:9].reshape(3, 3)
        w = x[14:17]
        rho = x[_H1_RHO0:]
        ev = lift_eval(x[9:13], x[13], R)
        if ev.theta is None:
            raise SingularMrpError("flow evaluated at an MRP singularity")
        tau = ctrl.torque(ev.theta, w, rho)
        dx = np.zeros(dim)
        dx[0:9] = (R @ _skew_matrix(w)).ravel()
        dx[14:17] = Jinv @ (_cross(J @ w, w) + tau)
        if nrho:
            dx[_H1_RHO0:] = ctrl.rho_dot(ev.theta, w, rho)
        return dx

    def flow_set(t, x):
        ev = classify(x)
        return ev.norm <= bound + event_tol and ev.dist <= alpha + event_tol

    def jump_set(t, x):
        ev = classify(x)
        return ev.dist >= alpha or ev.norm >= bound

    def jump_map(t, x):
        ev = classify(x)
        candidates = []
        if ev.dist >= alpha:
            q_new = canonical_quat(ev.q_sel) if ev.tie else ev.q_sel
            if ev.tie:
                tie_events.append(t)
            x_new = x.copy()
            x_new[9:13] = q_new
            candidates.append(("Dl", x_new))
        if ev.norm >= bound:
            x_new = x.copy()
            x_new[13] = -x[13]
            candidates.append(("Dm", x_new))
        return candidates

    def project(x):
        R, r_resid = project_to_so3(x[0:9].reshape(3, 3))
        qh = x[9:13]
        qn = math.sqrt(float(qh @ qh))
        x = x.copy()
        x[0:9] = R.ravel()
        x[9:13] = qh / qn
        return x, max(r_resid, abs(qn - 1.0))

    def output_map(t, x):
        ev = classify(x)
        return np.full(3, np.nan) if ev.theta is None else ev.theta

    return HybridSystem(
        state_dim=dim, flow_set=flow_set, flow_map=flow_map, jump_set=jump_set,
        jump_map=jump_map, output_map=output_map, project=project,
        info={"kind": "h1", "params": params, "plant": plant, "ctrl": ctrl,
              "rho_dim": nrho, "tie_events": tie_events})


def make_h2(plant: PlantParams, ctrl: ControllerSpec, params: LiftParams,
            event_tol: float = 1e-9) -> HybridSystem:
    """MRP-space closed loop: MRP kinematics + rigid-body dynamics + controller.

    Flows integrate dtheta/dt = T(theta) omega with the same Euler dynamics
    and controller as the rotation-space loop; the single jump branch maps
    theta to its shadow -theta/||theta||^2 when the norm reaches 1 + delta,
    passing omega and rho through unchanged.
    """
    J = plant.inertia.j
    Jinv = np.linalg.inv(J)
    delta = params.delta
    bound2 = (1.0 + delta) ** 2
    band2 = (1.0 + delta + event_tol) ** 2
    nrho = ctrl.rho_dim
    dim = _H2_RHO0 + nrho

    def flow_map(t, x):
        theta = x[0:3]
        w = x[3:6]
        rho = x[_H2_RHO0:]
        n2 = float(theta @ theta)
        tau = ctrl.torque(theta, w, rho)
        dx = np.zeros(dim)
        dx[0:3] = 0.25 * ((1.0 - n2) * w + 2.0 * _cross(theta, w)
                          + 2.0 * theta * float(theta @ w))
        dx[3:6] = Jinv @ (_cross(J @ w, w) + tau)
        if nrho:
            dx[_H2_RHO0:] = ctrl.rho_dot(theta, w, rho)
        return dx

    def flow_set(t, x):
        theta = x[0:3]
        return float(theta @ theta) <= band2

    def jump_set(t, x):
        theta = x[0:3]
        return float(theta @ theta) >= bound2

    def jump_map(t, x):
        theta = x[0:3]
        x_new = x.copy()
        x_new[0:3] = -theta / float(theta @ theta)
        return [("Dm", x_new)]

    def output_map(t, x):
        return x[0:3]

    return HybridSystem(
        state_dim=dim, flow_set=flow_set, flow_map=flow_map, jump_set=jump_set,
        jump_map=jump_map, output_map=output_map, project=None,
        info={"kind": "h2", "params": params, "plant": plant, "ctrl": ctrl,
              "rho_dim": nrho})


# ---------------------------------------------------------------------------
# trajectory correspondence


@dataclass
class EquivalenceReport:
    """Componentwise deviations between aligned rotation-space and MRP-space arcs."""

    n_aligned: int
    n_dm_jumps: int
    n_dl_jumps: int
    max_dev_rotation: float
    max_dev_theta: float
    max_dev_omega: float
    max_dev_rho: float
    max_dev: float
    jprime_le_j: bool
    strict_after_first_dl: bool
    tol: float
    passed: bool
    n_skipped: int = 0
    series: list = field(default_factory=list)


def check_equivalence(arc1: HybridArc, arc2: HybridArc, tol: float,
                      snap_tol: float = 1e-6) -> EquivalenceReport:
    """Align a rotation-space arc with an MRP-space arc and bound their deviation.

    Each sample (t, j) of arc1 is matched to (t, j') of arc2 where j' counts
    the set-switch ("Dm") jumps of arc1 up to jump index j, and the aligned
    tuples (R, theta, omega, rho) are compared componentwise. Both simulators
    sample on the same global time grid, so interior samples match exactly
    and set-switch jump pairs match within the event-location tolerance;
    samples at times the other arc never visited (the memory-update jump
    instants, farther than snap_tol from any counterpart sample) are skipped
    rather than interpolated, so the reported deviation measures the systems
    and not the checker. Raises StructuralMismatchError when the jump
    structures cannot be aligned.
    """
    labels = [rec.label for rec in arc1.jumps]
    dm_before = np.cumsum([0] + [1 if lab == "Dm" else 0 for lab in labels])
    n_dm = int(dm_before[-1])
    n_dl = len(labels) - n_dm
    if len(arc2.intervals) != n_dm + 1:
        raise StructuralMismatchError(
            f"MRP-space arc has {len(arc2.intervals) - 1} jumps; rotation-space arc "
            f"took {n_dm} set-switch jumps")
    if any(rec.label != "Dm" for rec in arc2.jumps):
        raise StructuralMismatchError("MRP-space arc contains non-set-switch jumps")

    slack = max(arc1.meta.get("step", 0.0), arc2.meta.get("step", 0.0), 1e-9)
    rho_dim = arc1.intervals[0].xs.shape[1] - _H1_RHO0

    first_dl_jpost = None
    for rec in arc1.jumps:
        if rec.label == "Dl":
            first_dl_jpost = rec.j_pre + 1
            break

    dev_R = dev_th = dev_w = dev_rho = 0.0
    n_aligned = 0
    n_skipped = 0
    ordering_ok = True
    strict_ok = True
    series = []
    for iv in arc1.intervals:
        jp = int(dm_before[iv.j])
        iv2 = arc2.intervals[jp]
        for t, x1 in zip(iv.ts, iv.xs):
            if t < iv2.ts[0] - slack or t > iv2.ts[-1] + slack:
                raise StructuralMismatchError(
                    f"sample at t={t} (j={iv.j}) maps to MRP-space interval j'={jp} "
                    f"spanning [{iv2.ts[0]}, {iv2.ts[-1]}]")
            if jp > iv.j:
                ordering_ok = False
            if first_dl_jpost is not None and iv.j >= first_dl_jpost and jp >= iv.j:
                strict_ok = False
            k = int(np.searchsorted(iv2.ts, t))
            best = None
            for cand in (k - 1, k):
                if 0 <= cand < len(iv2.ts):
                    gap = abs(float(iv2.ts[cand]) - t)
                    if best is None or gap < best[0]:
                        best = (gap, cand)
            if best is None or best[0] > snap_tol:
                n_skipped += 1
                continue
            x2 = iv2.xs[best[1]]
            ev = lift_eval(x1[9:13], x1[13], x1[0:9].reshape(3, 3))
            theta2 = x2[0:3]
            d_th = math.inf if ev.theta is None else float(np.max(np.abs(ev.theta - theta2)))
            d_R = float(np.max(np.abs(x1[0:9].reshape(3, 3) - rot_from_mrp_array(theta2))))
            d_w = float(np.max(np.abs(x1[14:17] - x2[3:6])))
            d_rho = 0.0
            if rho_dim:
                d_rho = float(np.max(np.abs(x1[_H1_RHO0:] - x2[_H2_RHO0:])))
            dev_th = max(dev_th, d_th)
            dev_R = max(dev_R, d_R)
            dev_w = max(dev_w, d_w)
            dev_rho = max(dev_rho, d_rho)
            series.append((float(t), max(d_th, d_R, d_w, d_rho)))
            n_aligned += 1

    stride = max(1, len(series) // 512)
    max_dev = max(dev_R, dev_th, dev_w, dev_rho)
    return EquivalenceReport(
        n_aligned=n_aligned, n_dm_jumps=n_dm, n_dl_jumps=n_dl,
        max_dev_rotation=dev_R, max_dev_theta=dev_th, max_dev_omega=dev_w,
        max_dev_rho=dev_rho, max_dev=max_dev, jprime_le_j=ordering_ok,
        strict_after_first_dl=strict_ok, tol=tol,
        passed=max_dev <= tol and ordering_ok and strict_ok,
        n_skipped=n_skipped, series=series[::stride])


def step_halving_error(sys: HybridSystem, x0, cfg: SolverConfig,
                       where: str = "sup", arc_h: HybridArc | None = None) -> float:
    """Richardson-style global-error estimate from a step-halving rerun.

    Integrates the system at the configured step and at half that step and
    compares the two solutions: at the final state (where="endpoint") or as
    the sup over all shared grid instants with matching jump counts
    (where="sup"). The sup form is the meaningful error scale for contracting
    closed loops, whose endpoint error washes out as both runs settle onto
    the attractor; equivalence tolerances are anchored to it. A precomputed
    full-step arc may be passed to avoid re-simulating it.
    """
    if arc_h is None:
        arc_h = simulate(sys, x0, cfg)
    cfg_half = SolverConfig(step=cfg.step / 2.0, t_max=cfg.t_max, j_max=cfg.j_max,
                            event_tol=cfg.event_tol, jump_priority=cfg.jump_priority,
                            omega_bound=cfg.omega_bound)
    arc_h2 = simulate(sys, x0, cfg_half)
    if where == "endpoint":
        _, _, xf = arc_h.final_state()
        _, _, xf2 = arc_h2.final_state()
        return float(np.max(np.abs(xf - xf2)))
    err = 0.0
    for iv, iv2 in zip(arc_h.intervals, arc_h2.intervals):
        idx = np.searchsorted(iv2.ts, iv.ts)
        for k, i2 in enumerate(idx):
            i2 = min(int(i2), len(iv2.ts) - 1)
            for cand in (i2 - 1, i2):
                if 0 <= cand < len(iv2.ts) and abs(float(iv2.ts[cand]) - float(iv.ts[k])) <= 1e-9:
                    err = max(err, float(np.max(np.abs(iv.xs[k] - iv2.xs[cand]))))
                    break
    return err


# ---------------------------------------------------------------------------
# stability evidence


@dataclass(frozen=True)
class StabilityTarget:
    """Target set described by a point-to-set distance on the state vector."""

    distance_to_A: Callable[[np.ndarray], float]
    description: str


def h2_origin_target() -> StabilityTarget:
    """Distance sqrt(||theta||^2 + ||omega||^2) to rest at zero attitude error."""

    def distance(x):
        return math.sqrt(float(x[0:6] @ x[0:6]))

    return StabilityTarget(distance, "sqrt(|theta|^2 + |omega|^2) on the MRP-space loop")


def h1_origin_target() -> StabilityTarget:
    """Same distance evaluated through the lifted output of the rotation-space loop."""

    def distance(x):
        ev = lift_eval(x[9:13], x[13], x[0:9].reshape(3, 3))
        w = x[14:17]
        if ev.theta is None:
            return math.inf
        return math.sqrt(ev.norm ** 2 + float(w @ w))

    return StabilityTarget(distance, "sqrt(|theta|^2 + |omega|^2) on the rotation-space loop")


@dataclass
class StabilityRecord:
    """Convergence evidence for one initial condition."""

    index: int
    initial_distance: float
    final_distance: float
    peak_distance: float
    peak_over_initial: float
    converged: bool
    termination: str
    n_jumps: int
    series: list


@dataclass
class StabilityEvidenceReport:
    records: list
    convergence_threshold: float
    all_converged: bool


def evaluate_arc_stability(arc: HybridArc, target: StabilityTarget,
                           convergence_threshold: float = 1e-3,
                           final_window: float = 0.1,
                           series_points: int = 256,
                           index: int = 0) -> StabilityRecord:
    """Distance-to-target summary of one simulated arc.

    The arc counts as converged when the distance stays below the threshold
    over the final fraction of the time budget; peak_over_initial is the
    max-excursion-to-initial-distance ratio, and series holds decimated
    (t, distance) pairs for plotting.
    """
    ts, ds = [], []
    for t, _, x in arc.samples():
        ts.append(t)
        ds.append(target.distance_to_A(x))
    ts = np.array(ts)
    ds = np.array(ds)
    window_start = arc.sup_t * (1.0 - final_window)
    tail = ds[ts >= window_start]
    converged = bool(len(tail) and float(np.max(tail)) < convergence_threshold)
    d0 = float(ds[0])
    peak = float(np.max(ds))
    stride = max(1, len(ts) // series_points)
    series = [(float(t), float(d)) for t, d in zip(ts[::stride], ds[::stride])]
    if series[-1][0] != float(ts[-1]):
        series.append((float(ts[-1]), float(ds[-1])))
    return StabilityRecord(
        index=index, initial_distance=d0, final_distance=float(ds[-1]),
        peak_distance=peak,
        peak_over_initial=peak / d0 if d0 > 0.0 else math.nan,
        converged=converged, termination=arc.termination,
        n_jumps=arc.n_jumps, series=series)


def stability_evidence(sys: HybridSystem, target: StabilityTarget,
                       initial_conditions, cfg: SolverConfig,
                       convergence_threshold: float = 1e-3,
                       final_window: float = 0.1,
                       series_points: int = 256) -> StabilityEvidenceReport:
    """Simulate each initial condition and summarize its distance to the target."""
    records = []
    for idx, x0 in enumerate(initial_conditions):
        arc = simulate(sys, np.asarray(x0, dtype=float), cfg)
        records.append(evaluate_arc_stability(
            arc, target, convergence_threshold, final_window, series_points, idx))
    return StabilityEvidenceReport(
        records=records, convergence_threshold=convergence_threshold,
        all_converged=all(r.converged for r in records))
