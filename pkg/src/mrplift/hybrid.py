"""Hybrid-system data model and an event-detecting flow/jump integrator.

A hybrid system is the data (C, F, D, G): it flows along F while in C and
jumps through G while in D. Solutions are hybrid arcs parameterized by
ordinary time t and a jump counter j. The integrator uses fixed-step RK4
anchored to a global time grid (multiples of the step size, so independently
simulated systems share sample instants) with bisection to locate entry into
the jump set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import (
    InvalidInitialStateError,
    InvalidStateError,
    OutOfDomainError,
    SimulationBlowupError,
)

JUMP_PRIORITIES = ("prefer_first_listed", "prefer_last_listed")

# Termination reasons that witness a complete (budget-limited) solution.
_BUDGET_REASONS = ("t_max", "j_max")


@dataclass(frozen=True, order=False)
class HybridTime:
    """Hybrid time instant (t, j), ordered lexicographically."""

    t: float
    j: int

    def __le__(self, other: "HybridTime") -> bool:
        return (self.t, self.j) <= (other.t, other.j)

    def __lt__(self, other: "HybridTime") -> bool:
        return (self.t, self.j) < (other.t, other.j)


@dataclass(frozen=True)
class HybridTimeDomain:
    """Union of intervals [t_start, t_end] x {j} with consecutive jump indices."""

    intervals: tuple[tuple[float, float, int], ...]

    def validate(self) -> list[str]:
        """Return a list of well-formedness violations (empty when valid)."""
        problems = []
        for k, (t0, t1, j) in enumerate(self.intervals):
            if t0 < 0.0:
                problems.append(f"interval {k}: negative start time {t0}")
            if t1 < t0:
                problems.append(f"interval {k}: t_end {t1} < t_start {t0}")
            if k > 0:
                p0, p1, pj = self.intervals[k - 1]
                if t0 != p1:
                    problems.append(f"interval {k}: starts at {t0}, previous ends at {p1}")
                if j != pj + 1:
                    problems.append(f"interval {k}: jump index {j} does not follow {pj}")
        return problems

    @property
    def sup_t(self) -> float:
        return self.intervals[-1][1] if self.intervals else 0.0

    @property
    def n_jumps(self) -> int:
        return self.intervals[-1][2] if self.intervals else 0


@dataclass(frozen=True)
class ArcInterval:
    """Samples of one flow interval: times ts and states xs at jump index j."""

    j: int
    ts: np.ndarray
    xs: np.ndarray


@dataclass(frozen=True)
class JumpRecord:
    """One jump event: taken at time t from jump index j_pre via map branch label."""

    t: float
    j_pre: int
    label: str
    chosen_index: int
    n_candidates: int


@dataclass
class HybridArc:
    """Solution of a hybrid system over its hybrid time domain.

    Each interval holds the fixed-grid samples plus its endpoints; states at
    a jump time appear twice, as the last sample of one interval and the
    first sample of the next.
    """

    intervals: list[ArcInterval]
    termination: str
    jumps: list[JumpRecord]
    meta: dict = field(default_factory=dict)

    def domain(self) -> HybridTimeDomain:
        return HybridTimeDomain(tuple(
            (float(iv.ts[0]), float(iv.ts[-1]), iv.j) for iv in self.intervals))

    @property
    def sup_t(self) -> float:
        return float(self.intervals[-1].ts[-1])

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)

    def samples(self) -> Iterator[tuple[float, int, np.ndarray]]:
        for iv in self.intervals:
            for t, x in zip(iv.ts, iv.xs):
                yield float(t), iv.j, x

    def final_state(self) -> tuple[float, int, np.ndarray]:
        iv = self.intervals[-1]
        return float(iv.ts[-1]), iv.j, iv.xs[-1]

    def validate(self) -> list[str]:
        """Well-formedness of the domain plus sample/jump bookkeeping."""
        problems = self.domain().validate()
        for iv in self.intervals:
            if len(iv.ts) != len(iv.xs):
                problems.append(f"interval j={iv.j}: {len(iv.ts)} times vs {len(iv.xs)} states")
            if np.any(np.diff(iv.ts) <= 0.0) and len(iv.ts) > 1:
                problems.append(f"interval j={iv.j}: non-increasing sample times")
        if len(self.jumps) != len(self.intervals) - 1:
            problems.append(
                f"{len(self.jumps)} jump records for {len(self.intervals)} intervals")
        for k, rec in enumerate(self.jumps):
            if rec.j_pre != self.intervals[k].j:
                problems.append(f"jump {k}: j_pre {rec.j_pre} != interval index {self.intervals[k].j}")
            if rec.t != float(self.intervals[k].ts[-1]):
                problems.append(f"jump {k}: time {rec.t} != interval end")
        return problems


@dataclass(frozen=True)
class HybridSystem:
    """The data (C, F, D, G) plus optional output map and manifold projection.

    flow_set/jump_set are predicates on (t, x); flow_map returns dx/dt (or is
    None for systems whose state is constant along flows); jump_map returns
    the enumerated finite set of (label, next_state) candidates, which must be
    nonempty whenever jump_set holds. project, when given, maps a post-step
    state back onto its constraint manifold and returns (state, residual).
    info carries builder metadata (parameters, event logs).
    """

    state_dim: int
    flow_set: Callable[[float, np.ndarray], bool]
    flow_map: Optional[Callable[[float, np.ndarray], np.ndarray]]
    jump_set: Callable[[float, np.ndarray], bool]
    jump_map: Callable[[float, np.ndarray], list[tuple[str, np.ndarray]]]
    output_map: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    project: Optional[Callable[[np.ndarray], tuple[np.ndarray, float]]] = None
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-step integrator settings.

    omega_bound is the radius K of the angular-velocity ball used by the
    bounded-rotation trajectory generators.
    """

    step: float = 1e-3
    t_max: float = 10.0
    j_max: int = 64
    event_tol: float = 1e-9
    jump_priority: str = "prefer_first_listed"
    omega_bound: float = 1.0

    def __post_init__(self):
        if self.step <= 0.0:
            raise InvalidStateError("step must be positive")
        if self.event_tol <= 0.0:
            raise InvalidStateError("event_tol must be positive")
        if self.t_max < 0.0:
            raise InvalidStateError("t_max must be non-negative")
        if self.j_max < 0:
            raise InvalidStateError("j_max must be non-negative")
        if self.jump_priority not in JUMP_PRIORITIES:
            raise InvalidStateError(f"jump_priority must be one of {JUMP_PRIORITIES}")


@dataclass(frozen=True)
class CompletenessResult:
    complete: bool
    reason: str


def _rk4_step(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, x + (0.5 * h) * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(sys: HybridSystem, x0, cfg: SolverConfig) -> HybridArc:
    """Integrate a hybrid system from x0 until a time/jump budget is exhausted.

    Flows with fixed-step RK4 while in the flow set; when a step enters the
    jump set (or leaves the flow set), bisects the step to locate the
    crossing, records the pre-jump state, applies the selected jump branch,
    and continues. Terminates at t >= t_max, at j >= j_max, or when the state
    leaves both sets.

    Raises:
        InvalidInitialStateError: x0 is in neither the flow nor the jump set.
        SimulationBlowupError: the flow produced a non-finite state; the
            partial arc is attached to the exception.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (sys.state_dim,):
        raise InvalidStateError(f"state must have shape ({sys.state_dim},), got {x.shape}")
    t = 0.0
    j = 0
    if not (sys.flow_set(t, x) or sys.jump_set(t, x)):
        raise InvalidInitialStateError(
            "initial state lies outside both the flow set and the jump set")

    h = cfg.step
    intervals: list[ArcInterval] = []
    jumps: list[JumpRecord] = []
    cur_ts = [t]
    cur_xs = [x.copy()]
    proj_residual_max = 0.0
    termination = None

    def close_interval():
        intervals.append(ArcInterval(j, np.array(cur_ts), np.array(cur_xs)))

    def make_arc(reason):
        close_interval()
        return HybridArc(intervals, reason, jumps, meta={
            "step": cfg.step,
            "event_tol": cfg.event_tol,
            "projection_residual_max": proj_residual_max,
        })

    while True:
        # Jump phase: take every enabled jump, one increment of j each.
        while sys.jump_set(t, x):
            if j >= cfg.j_max:
                termination = "j_max"
                break
            candidates = sys.jump_map(t, x)
            if not candidates:
                raise InvalidStateError("jump_map returned no candidates inside the jump set")
            idx = 0 if cfg.jump_priority == "prefer_first_listed" else len(candidates) - 1
            label, x_plus = candidates[idx]
            close_interval()
            jumps.append(JumpRecord(t, j, label, idx, len(candidates)))
            j += 1
            x = np.array(x_plus, dtype=float)
            cur_ts = [t]
            cur_xs = [x.copy()]
            if not np.all(np.isfinite(x)):
                raise SimulationBlowupError(
                    f"jump map produced a non-finite state at t={t}", make_arc("blowup"))
        if termination is not None:
            break
        if not sys.flow_set(t, x):
            termination = "escaped"
            break
        if t >= cfg.t_max:
            termination = "t_max"
            break

        # Flow one step toward the next global grid point (or t_max).
        n = math.floor(t / h + 1e-9) + 1
        t_next = min(n * h, cfg.t_max)
        if t_next - t < 1e-9 * h:
            t_next = min((n + 1) * h, cfg.t_max)
        dt = t_next - t

        if sys.flow_map is None:
            x_cand = x
        else:
            x_cand = _rk4_step(sys.flow_map, t, x, dt)
            if not np.all(np.isfinite(x_cand)):
                raise SimulationBlowupError(
                    f"flow produced a non-finite state at t={t}", make_arc("blowup"))

        def event(tt, xx):
            return sys.jump_set(tt, xx) or not sys.flow_set(tt, xx)

        if event(t_next, x_cand):
            # Bisect the step: event false at offset 0, true at offset dt.
            lo, hi = 0.0, dt
            x_hi = x_cand
            for _ in range(60):
                if hi - lo <= cfg.event_tol:
                    break
                mid = 0.5 * (lo + hi)
                x_mid = x if sys.flow_map is None else _rk4_step(sys.flow_map, t, x, mid)
                if event(t + mid, x_mid):
                    hi, x_hi = mid, x_mid
                else:
                    lo = mid
            t_next = t + hi
            x_cand = x_hi

        if sys.project is not None and sys.flow_map is not None:
            x_cand, residual = sys.project(x_cand)
            if residual > proj_residual_max:
                proj_residual_max = residual

        t = t_next
        x = np.asarray(x_cand, dtype=float)
        cur_ts.append(t)
        cur_xs.append(x.copy())

    return make_arc(termination)


def time_projection(arc: HybridArc, t: float) -> np.ndarray:
    """State x(t, J(t)) with J(t) the largest jump index whose interval contains t.

    Between grid samples the state is interpolated linearly within the
    interval of index J(t). Queries beyond the final time raise.
    """
    if t < 0.0 or t > arc.sup_t:
        raise OutOfDomainError(f"t={t} outside the arc domain [0, {arc.sup_t}]")
    for iv in reversed(arc.intervals):
        if iv.ts[0] <= t <= iv.ts[-1]:
            return interp_state(iv.ts, iv.xs, t)
    raise OutOfDomainError(f"t={t} not covered by any flow interval")


def interp_state(ts: np.ndarray, xs: np.ndarray, t: float) -> np.ndarray:
    """Linear interpolation of a sampled state trajectory at time t."""
    i = int(np.searchsorted(ts, t, side="right")) - 1
    if i < 0:
        return xs[0].copy()
    if i >= len(ts) - 1:
        return xs[-1].copy()
    span = ts[i + 1] - ts[i]
    w = 0.0 if span == 0.0 else (t - ts[i]) / span
    return (1.0 - w) * xs[i] + w * xs[i + 1]


def is_complete(arc: HybridArc, cfg: SolverConfig) -> CompletenessResult:
    """Whether the arc terminated only because the simulation budget ran out."""
    if arc.termination in _BUDGET_REASONS:
        return CompletenessResult(True, f"budget exhausted ({arc.termination})")
    if arc.termination == "escaped":
        return CompletenessResult(False, "escaped flow and jump sets")
    return CompletenessResult(False, arc.termination)
