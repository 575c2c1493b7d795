"""Hysteretic hybrid filter extracting a continuous MRP path from rotations.

The filter state is a memory quaternion q_hat on S3 and a set selector
m in {-1, +1}. Against an input rotation R it selects the quaternion
representative of R closest to q_hat, applies the sign m, and projects
stereographically to an MRP vector. Two overlapping jump conditions keep the
output single-valued and bounded:

* when the output norm reaches 1 + delta, m flips (the output switches to
  the shadow MRP set, which represents the same rotation);
* when the S3 distance 1 - |q_hat . q(R)| reaches alpha, q_hat snaps onto
  the current quaternion representative.

Along flows the output is the unique continuous lift of R(t) through the
double cover, and its norm never exceeds 1 + delta.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .attitude import (
    NORTH_POLE,
    POLE_TOL,
    Mrp,
    MRP_INFINITY,
    RotationMatrix,
    UnitQuaternion,
    canonical_quat,
    quat_from_rot,
    quat_from_rot_array,
    rot_from_mrp_array,
)
from .errors import ContractViolationError, InvalidStateError
from .hybrid import HybridArc, HybridSystem

# |q_hat . q| below this counts as the double-valued tie of the selector.
TIE_TOL = 1e-10


@dataclass(frozen=True)
class LiftParams:
    """Hysteresis parameters: alpha in (0, 1), delta > 0."""

    alpha: float = 0.5
    delta: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidStateError("alpha must lie strictly between 0 and 1")
        if self.delta <= 0.0:
            raise InvalidStateError("delta must be positive")


@dataclass(frozen=True)
class LiftState:
    """Filter state: memory quaternion q_hat and set selector m in {-1, +1}."""

    q_hat: UnitQuaternion
    m: int = 1

    def __post_init__(self):
        if self.m not in (-1, 1):
            raise InvalidStateError("m must be -1 or +1")

    def as_vector(self) -> np.ndarray:
        return np.concatenate((self.q_hat.as_array(), [float(self.m)]))

    @classmethod
    def from_vector(cls, x) -> "LiftState":
        return cls(UnitQuaternion.from_array(x[0:4]), int(x[4] > 0.0) * 2 - 1)


@dataclass(frozen=True)
class LiftOutput:
    """Lift output: the MRP value and whether the state sits in the flow set."""

    theta: Mrp
    in_flow_set: bool


# One full evaluation of the selector against a rotation:
#   q_sel  : selected quaternion (argmax of q_hat . p over the pair)
#   tie    : both representatives tied within TIE_TOL
#   dist   : 1 - |q_hat . q|, the S3 set distance
#   qm     : m * q_sel
#   theta  : stereographic image of qm, or None at the south pole
#   norm   : ||theta|| (inf when theta is None)
LiftEval = namedtuple("LiftEval", "q_sel tie dist qm theta norm")


def lift_eval(qhat4: np.ndarray, m: float, R: np.ndarray) -> LiftEval:
    """Evaluate selector, set distance, and MRP output for raw arrays."""
    q = quat_from_rot(R)
    d = float(qhat4 @ q)
    tie = abs(d) <= TIE_TOL
    if d < -TIE_TOL:
        q = -q
        d = -d
    dist = min(max(1.0 - d, 0.0), 1.0)
    qm = q if m > 0 else -q
    denom = 1.0 + qm[0]
    if denom < POLE_TOL:
        return LiftEval(q, tie, dist, qm, None, math.inf)
    theta = qm[1:] / denom
    return LiftEval(q, tie, dist, qm, theta, math.sqrt(float(theta @ theta)))


def lift_eval_batch(qhats: np.ndarray, ms: np.ndarray, Rs: np.ndarray) -> dict:
    """Vectorized form of :func:`lift_eval` over (n, 4), (n,), (n, 3, 3) arrays.

    Returns arrays dist, theta, norm, and the pole mask (rows whose output is
    the point at infinity; their theta rows are zero-filled).
    """
    q = quat_from_rot_array(Rs)
    d = np.einsum("ij,ij->i", qhats, q)
    q_sel = np.where((d < -TIE_TOL)[:, None], -q, q)
    dist = np.clip(1.0 - np.abs(d), 0.0, 1.0)
    qm = q_sel * np.asarray(ms, dtype=float)[:, None]
    denom = 1.0 + qm[:, 0]
    pole = denom < POLE_TOL
    theta = np.zeros((len(d), 3))
    ok = ~pole
    theta[ok] = qm[ok, 1:] / denom[ok, None]
    norm = np.where(pole, math.inf, np.linalg.norm(theta, axis=1))
    return {"dist": dist, "theta": theta, "norm": norm, "pole": pole}


def _as_rotation_array(R) -> np.ndarray:
    return R.m if isinstance(R, RotationMatrix) else RotationMatrix(R).m


def phi_select(q_hat: UnitQuaternion, R) -> list[UnitQuaternion]:
    """Quaternion representative(s) of R closest to q_hat.

    Returns one element except at the tie where both representatives of R are
    orthogonal to q_hat; there both are returned, the sign-canonical one
    first (the deterministic tie-break used everywhere else).
    """
    ev = lift_eval(q_hat.as_array(), 1.0, _as_rotation_array(R))
    if ev.tie:
        first = UnitQuaternion.from_array(canonical_quat(ev.q_sel))
        return [first, -first]
    return [UnitQuaternion.from_array(ev.q_sel)]


def quat_set_distance(q_hat: UnitQuaternion, R) -> float:
    """Distance 1 - |q_hat . q(R)| of q_hat to the quaternion pair of R, in [0, 1]."""
    return lift_eval(q_hat.as_array(), 1.0, _as_rotation_array(R)).dist


def lift_output(state: LiftState, R, params: LiftParams) -> LiftOutput:
    """MRP output of the filter state against R, plus flow-set membership."""
    ev = lift_eval(state.q_hat.as_array(), state.m, _as_rotation_array(R))
    theta = MRP_INFINITY if ev.theta is None else Mrp.finite(ev.theta)
    in_c = ev.norm <= 1.0 + params.delta and ev.dist <= params.alpha
    return LiftOutput(theta, in_c)


def in_flow_set(state: LiftState, R, params: LiftParams) -> bool:
    """Membership in the flow set: output norm <= 1 + delta and dist <= alpha."""
    ev = lift_eval(state.q_hat.as_array(), state.m, _as_rotation_array(R))
    return ev.norm <= 1.0 + params.delta and ev.dist <= params.alpha


def in_jump_Dm(state: LiftState, R, params: LiftParams) -> bool:
    """Membership in the set-switch jump set: output norm >= 1 + delta."""
    ev = lift_eval(state.q_hat.as_array(), state.m, _as_rotation_array(R))
    return ev.norm >= 1.0 + params.delta


def in_jump_Dl(state: LiftState, R, params: LiftParams) -> bool:
    """Membership in the memory-update jump set: dist >= alpha."""
    ev = lift_eval(state.q_hat.as_array(), state.m, _as_rotation_array(R))
    return ev.dist >= params.alpha


def lift_jump(state: LiftState, R, which: str, params: LiftParams) -> LiftState:
    """Apply one jump branch: "Dl" resets q_hat, "Dm" flips m.

    Raises ContractViolationError when the corresponding jump-set membership
    does not hold.
    """
    Rm = _as_rotation_array(R)
    ev = lift_eval(state.q_hat.as_array(), state.m, Rm)
    if which == "Dl":
        if ev.dist < params.alpha:
            raise ContractViolationError(
                f"Dl jump requested at dist={ev.dist} < alpha={params.alpha}")
        q_new = canonical_quat(ev.q_sel) if ev.tie else ev.q_sel
        return LiftState(UnitQuaternion.from_array(q_new), state.m)
    if which == "Dm":
        if ev.norm < 1.0 + params.delta:
            raise ContractViolationError(
                f"Dm jump requested at ||theta||={ev.norm} < 1 + delta={1.0 + params.delta}")
        return LiftState(state.q_hat, -state.m)
    raise InvalidStateError(f"unknown jump branch {which!r}")


def init_lift_state(R, guess: UnitQuaternion | None = None, m: int = 1) -> LiftState:
    """Filter state whose memory quaternion matches R (set distance zero).

    The memory is the tie-broken selection of the guess (default north pole)
    against R, which guarantees dist < 1 as the lifting filter requires.
    """
    guess = NORTH_POLE if guess is None else guess
    ev = lift_eval(guess.as_array(), 1.0, _as_rotation_array(R))
    q0 = canonical_quat(ev.q_sel) if ev.tie else ev.q_sel
    return LiftState(UnitQuaternion.from_array(q0), m)


def make_lift_system(params: LiftParams, R_source, event_tol: float = 1e-9) -> HybridSystem:
    """Hybrid system over (q_hat, m) driven by the rotation source R_source(t).

    The state is constant along flows (flow_map is None); all motion enters
    through the exogenous rotation. Flow-set membership carries an event_tol
    slack band; jump conditions are exact. Candidate jumps are listed memory
    update ("Dl") first, set switch ("Dm") second, so the solver's
    prefer_first_listed priority resolves simultaneous membership in favor of
    the memory update. Tie-break events are appended to info["tie_events"].
    """
    alpha, delta = params.alpha, params.delta
    bound = 1.0 + delta
    tie_events: list[float] = []
    cache: dict = {"key": None, "val": None}

    def classify(t: float, x: np.ndarray) -> LiftEval:
        key = (t, x[0], x[1], x[2], x[3], x[4])
        if cache["key"] == key:
            return cache["val"]
        ev = lift_eval(x[0:4], x[4], R_source.rotation(t))
        cache["key"] = key
        cache["val"] = ev
        return ev

    def flow_set(t, x):
        ev = classify(t, x)
        return ev.norm <= bound + event_tol and ev.dist <= alpha + event_tol

    def jump_set(t, x):
        ev = classify(t, x)
        return ev.dist >= alpha or ev.norm >= bound

    def jump_map(t, x):
        ev = classify(t, x)
        candidates = []
        if ev.dist >= alpha:
            q_new = canonical_quat(ev.q_sel) if ev.tie else ev.q_sel
            if ev.tie:
                tie_events.append(t)
            candidates.append(("Dl", np.concatenate((q_new, [x[4]]))))
        if ev.norm >= bound:
            candidates.append(("Dm", np.concatenate((x[0:4], [-x[4]]))))
        return candidates

    def output_map(t, x):
        ev = classify(t, x)
        return np.full(3, np.nan) if ev.theta is None else ev.theta

    return HybridSystem(
        state_dim=5,
        flow_set=flow_set,
        flow_map=None,
        jump_set=jump_set,
        jump_map=jump_map,
        output_map=output_map,
        project=None,
        info={"kind": "lift", "params": params, "R_source": R_source,
              "tie_events": tie_events},
    )


@dataclass
class LiftArcReport:
    """Verification summary of a lifted arc.

    Every field named max_* is the worst case over all samples or jumps; the
    checks dict maps check names to (value, tolerance, passed).
    """

    n_samples: int
    n_dl_jumps: int
    n_dm_jumps: int
    max_consistency_defect: float
    max_theta_norm: float
    max_dl_theta_defect: float
    max_dm_shadow_defect: float
    max_post_dl_dist: float
    min_same_label_gap: float
    checks: dict
    passed: bool


def verify_lift_arc(arc: HybridArc, R_source, params: LiftParams, *,
                    consistency_tol: float = 1e-6, bound_slack: float = 1e-6,
                    jump_tol: float = 1e-9, dist_tol: float = 1e-9) -> LiftArcReport:
    """Check a lifted arc against the exactness properties of the filter.

    Verifies, sample by sample, that the output reproduces the input rotation
    (Frobenius defect) and stays inside the hysteresis ball; and, jump by
    jump, that memory updates leave the output fixed while set switches land
    exactly on the shadow MRP. Sample checks are evaluated in bulk through
    the vectorized kernels.
    """
    ts = []
    states = []
    for t, _, x in arc.samples():
        ts.append(t)
        states.append(x)
    ts_arr = np.array(ts)
    X = np.vstack(states)
    if hasattr(R_source, "rotations"):
        Rs = np.asarray(R_source.rotations(ts_arr))
    else:
        Rs = np.stack([R_source.rotation(t) for t in ts])
    ev = lift_eval_batch(X[:, 0:4], X[:, 4], Rs)
    n_samples = len(ts)
    max_norm = float(np.max(ev["norm"])) if n_samples else 0.0
    recon = rot_from_mrp_array(ev["theta"])
    recon[ev["pole"]] = np.eye(3)
    max_defect = float(np.max(np.linalg.norm(Rs - recon, axis=(1, 2)))) if n_samples else 0.0

    max_dl = 0.0
    max_dm = 0.0
    max_post_dist = 0.0
    n_dl = n_dm = 0
    last_t_by_label: dict = {}
    min_gap = math.inf
    for k, rec in enumerate(arc.jumps):
        x_pre = arc.intervals[k].xs[-1]
        x_post = arc.intervals[k + 1].xs[0]
        R = R_source.rotation(rec.t)
        ev_pre = lift_eval(x_pre[0:4], x_pre[4], R)
        ev_post = lift_eval(x_post[0:4], x_post[4], R)
        if rec.label == "Dl":
            n_dl += 1
            if ev_pre.theta is not None and ev_post.theta is not None:
                max_dl = max(max_dl, float(np.max(np.abs(ev_post.theta - ev_pre.theta))))
            max_post_dist = max(max_post_dist, ev_post.dist)
        else:
            n_dm += 1
            if ev_pre.theta is not None and ev_post.theta is not None:
                shadow_pre = -ev_pre.theta / float(ev_pre.theta @ ev_pre.theta)
                max_dm = max(max_dm, float(np.max(np.abs(ev_post.theta - shadow_pre))))
        if rec.label in last_t_by_label:
            min_gap = min(min_gap, rec.t - last_t_by_label[rec.label])
        last_t_by_label[rec.label] = rec.t

    bound = 1.0 + params.delta + bound_slack
    checks = {
        "consistency": (max_defect, consistency_tol, max_defect <= consistency_tol),
        "output_bound": (max_norm, bound, max_norm <= bound),
        "dl_output_fixed": (max_dl, jump_tol, max_dl <= jump_tol),
        "dm_shadow_relation": (max_dm, jump_tol, max_dm <= jump_tol),
        "post_dl_distance": (max_post_dist, dist_tol, max_post_dist <= dist_tol),
    }
    return LiftArcReport(
        n_samples=n_samples,
        n_dl_jumps=n_dl,
        n_dm_jumps=n_dm,
        max_consistency_defect=max_defect,
        max_theta_norm=max_norm,
        max_dl_theta_defect=max_dl,
        max_dm_shadow_defect=max_dm,
        max_post_dl_dist=max_post_dist,
        min_same_label_gap=min_gap,
        checks=checks,
        passed=all(c[2] for c in checks.values()),
    )


def verify_lift_rows(rows, params: LiftParams, *,
                     consistency_tol: float = 1e-6, bound_slack: float = 1e-6,
                     jump_tol: float = 1e-9, dist_tol: float = 1e-9) -> LiftArcReport:
    """Verification summary over streaming-filter rows (same checks as arcs)."""
    max_defect = max((r.defect for r in rows), default=0.0)
    max_norm = max((r.norm_theta for r in rows), default=0.0)
    max_dl = max_dm = max_post_dist = 0.0
    n_dl = n_dm = 0
    last_t_by_label: dict = {}
    min_gap = math.inf
    for prev, row in zip(rows, rows[1:]):
        if row.event == "jump_Dl":
            n_dl += 1
            if prev.theta is not None and row.theta is not None:
                max_dl = max(max_dl, float(np.max(np.abs(row.theta - prev.theta))))
            max_post_dist = max(max_post_dist, row.dist)
        elif row.event == "jump_Dm":
            n_dm += 1
            if prev.theta is not None and row.theta is not None:
                shadow_pre = -prev.theta / float(prev.theta @ prev.theta)
                max_dm = max(max_dm, float(np.max(np.abs(row.theta - shadow_pre))))
        if row.event.startswith("jump"):
            if row.event in last_t_by_label:
                min_gap = min(min_gap, row.t - last_t_by_label[row.event])
            last_t_by_label[row.event] = row.t

    bound = 1.0 + params.delta + bound_slack
    checks = {
        "consistency": (max_defect, consistency_tol, max_defect <= consistency_tol),
        "output_bound": (max_norm, bound, max_norm <= bound),
        "dl_output_fixed": (max_dl, jump_tol, max_dl <= jump_tol),
        "dm_shadow_relation": (max_dm, jump_tol, max_dm <= jump_tol),
        "post_dl_distance": (max_post_dist, dist_tol, max_post_dist <= dist_tol),
    }
    return LiftArcReport(
        n_samples=len(rows), n_dl_jumps=n_dl, n_dm_jumps=n_dm,
        max_consistency_defect=max_defect, max_theta_norm=max_norm,
        max_dl_theta_defect=max_dl, max_dm_shadow_defect=max_dm,
        max_post_dl_dist=max_post_dist, min_same_label_gap=min_gap,
        checks=checks, passed=all(c[2] for c in checks.values()))


@dataclass(frozen=True)
class LiftStreamRow:
    """One emitted filter row; event names the transition that produced it."""

    t: float
    j: int
    event: str
    R: np.ndarray
    q_hat: np.ndarray
    m: int
    theta: np.ndarray | None
    norm_theta: float
    dist: float
    defect: float
    warning: str | None = None


class LiftStreamFilter:
    """Sequential lifting filter over discretely sampled rotations.

    Each pushed sample yields one row for the carried state plus one row per
    jump taken at that sample. A warning is attached when consecutive samples
    are farther apart than a pi/2 geodesic angle, at which point the lifted
    branch is no longer trustworthy.
    """

    def __init__(self, params: LiftParams, state: LiftState | None = None,
                 guess: UnitQuaternion | None = None, max_jumps_per_sample: int = 4):
        self.params = params
        self._state_vec = None if state is None else state.as_vector()
        self._guess = NORTH_POLE if guess is None else guess
        self._max_jumps = max_jumps_per_sample
        self._prev_R: np.ndarray | None = None
        self.j = 0
        self.warnings: list[str] = []

    @property
    def state(self) -> LiftState:
        if self._state_vec is None:
            raise InvalidStateError("filter state is initialized by the first sample")
        return LiftState.from_vector(self._state_vec)

    def push(self, t: float, R) -> list[LiftStreamRow]:
        R = _as_rotation_array(R)
        if self._state_vec is None:
            self._state_vec = init_lift_state(R, self._guess).as_vector()

        warning = None
        if self._prev_R is not None:
            cos_angle = (float(np.trace(self._prev_R.T @ R)) - 1.0) / 2.0
            if math.acos(min(max(cos_angle, -1.0), 1.0)) > math.pi / 2.0:
                warning = (f"t={t}: rotation moved more than pi/2 since the previous "
                           "sample; lift uniqueness is at risk")
                self.warnings.append(warning)
        self._prev_R = R

        rows = [self._row(t, R, "flow", warning)]
        for _ in range(self._max_jumps):
            x = self._state_vec
            ev = lift_eval(x[0:4], x[4], R)
            if ev.dist >= self.params.alpha:
                q_new = canonical_quat(ev.q_sel) if ev.tie else ev.q_sel
                self._state_vec = np.concatenate((q_new, [x[4]]))
                label = "jump_Dl"
            elif ev.norm >= 1.0 + self.params.delta:
                self._state_vec = np.concatenate((x[0:4], [-x[4]]))
                label = "jump_Dm"
            else:
                break
            self.j += 1
            rows.append(self._row(t, R, label, None))
        return rows

    def _row(self, t, R, event, warning) -> LiftStreamRow:
        x = self._state_vec
        ev = lift_eval(x[0:4], x[4], R)
        if ev.theta is None:
            defect = float(np.linalg.norm(R - np.eye(3)))
        else:
            defect = float(np.linalg.norm(R - rot_from_mrp_array(ev.theta)))
        return LiftStreamRow(
            t=float(t), j=self.j, event=event, R=R, q_hat=x[0:4].copy(),
            m=int(x[4] > 0.0) * 2 - 1, theta=None if ev.theta is None else ev.theta.copy(),
            norm_theta=ev.norm, dist=ev.dist, defect=defect, warning=warning)
