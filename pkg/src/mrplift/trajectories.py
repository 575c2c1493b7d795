"""Time-indexed rotation sources that drive the lifting filter.

Every source exposes ``rotation(t) -> (3, 3) ndarray`` continuous in t.
Closed-form sources (constant angular velocity per segment) are exact at any
query time, which keeps event location and consistency checks free of
integration error.
"""

from __future__ import annotations

import math

import numpy as np

from .attitude import project_to_so3
from .errors import InvalidStateError


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rotation matrix exp(angle*[axis]x) for a unit axis (Rodrigues form)."""
    x, y, z = axis
    s, c = math.sin(angle), math.cos(angle)
    k = 1.0 - c
    return np.array([
        [c + k * x * x, k * x * y - s * z, k * x * z + s * y],
        [k * x * y + s * z, c + k * y * y, k * y * z - s * x],
        [k * x * z - s * y, k * y * z + s * x, c + k * z * z],
    ])


def rotation_about_many(axes, angles) -> np.ndarray:
    """Batch Rodrigues form exp(angle*[axis]x), shapes (n, 3), (n,) -> (n, 3, 3)."""
    axes = np.asarray(axes, dtype=float)
    angles = np.asarray(angles, dtype=float)
    x, y, z = axes[:, 0], axes[:, 1], axes[:, 2]
    s, c = np.sin(angles), np.cos(angles)
    k = 1.0 - c
    out = np.empty((len(angles), 3, 3))
    out[:, 0, 0] = c + k * x * x
    out[:, 0, 1] = k * x * y - s * z
    out[:, 0, 2] = k * x * z + s * y
    out[:, 1, 0] = k * x * y + s * z
    out[:, 1, 1] = c + k * y * y
    out[:, 1, 2] = k * y * z - s * x
    out[:, 2, 0] = k * x * z - s * y
    out[:, 2, 1] = k * y * z + s * x
    out[:, 2, 2] = c + k * z * z
    return out


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise InvalidStateError("axis must be nonzero")
    return v / n


class ConstantRotation:
    """Fixed attitude R(t) = R0."""

    def __init__(self, R0=None):
        self.R0, _ = project_to_so3(np.eye(3) if R0 is None else np.asarray(R0, float))

    def rotation(self, t: float) -> np.ndarray:
        return self.R0

    def rotations(self, ts) -> np.ndarray:
        return np.broadcast_to(self.R0, (len(ts), 3, 3))

    def omega(self, t: float) -> np.ndarray:
        return np.zeros(3)


class PrincipalRamp:
    """Rotation about a fixed body axis with linearly ramping angle.

    R(t) = R0 @ exp(rate*t*[axis]x), the solution of dR/dt = R [omega]x with
    constant omega = rate*axis.
    """

    def __init__(self, axis, rate: float, R0=None):
        self.axis = _unit(axis)
        self.rate = float(rate)
        self.R0, _ = project_to_so3(np.eye(3) if R0 is None else np.asarray(R0, float))

    def rotation(self, t: float) -> np.ndarray:
        return self.R0 @ rotation_about(self.axis, self.rate * t)

    def rotations(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        axes = np.broadcast_to(self.axis, (len(ts), 3))
        return self.R0 @ rotation_about_many(axes, self.rate * ts)

    def omega(self, t: float) -> np.ndarray:
        return self.rate * self.axis


class PiecewiseConstantOmega:
    """Continuous rotation driven by piecewise-constant body angular velocity.

    Exact at any t: within segment k the attitude is
    R(t) = R_k @ exp((t - t_k)*[omega_k]x) with R_k propagated through the
    segment boundaries. Beyond the last knot the final omega holds.
    """

    def __init__(self, knots, omegas, R0=None):
        knots = [float(t) for t in knots]
        if len(knots) != len(omegas) or not knots or knots[0] != 0.0:
            raise InvalidStateError("need matching knots/omegas with knots[0] == 0")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise InvalidStateError("knots must be strictly increasing")
        self.knots = np.array(knots)
        self.omegas = [np.asarray(w, dtype=float) for w in omegas]
        R, _ = project_to_so3(np.eye(3) if R0 is None else np.asarray(R0, float))
        self.R_starts = [R]
        for k in range(len(knots) - 1):
            w = self.omegas[k]
            ang = float(np.linalg.norm(w)) * (knots[k + 1] - knots[k])
            if ang > 0.0:
                R = R @ rotation_about(w / np.linalg.norm(w), ang)
            self.R_starts.append(R)

    @classmethod
    def random_bounded(cls, rng: np.random.Generator, t_max: float,
                       omega_bound: float, segment_range=(1.0, 4.0),
                       random_start=True) -> "PiecewiseConstantOmega":
        """Random trajectory with ||omega|| <= omega_bound throughout."""
        starts, omegas = [], []
        t = 0.0
        while t < t_max:
            starts.append(t)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            omegas.append(direction * rng.uniform(0.2, 1.0) * omega_bound)
            t += float(rng.uniform(*segment_range))
        R0 = None
        if random_start:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            R0 = rotation_about(axis, rng.uniform(0.0, math.pi))
        return cls(starts, omegas, R0)

    def rotation(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.knots, t, side="right")) - 1
        k = min(max(k, 0), len(self.omegas) - 1)
        w = self.omegas[k]
        speed = float(np.linalg.norm(w))
        if speed == 0.0:
            return self.R_starts[k]
        return self.R_starts[k] @ rotation_about(w / speed, speed * (t - self.knots[k]))

    def rotations(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        ks = np.clip(np.searchsorted(self.knots, ts, side="right") - 1,
                     0, len(self.omegas) - 1)
        ws = np.stack(self.omegas)[ks]
        speeds = np.linalg.norm(ws, axis=1)
        safe = np.maximum(speeds, 1e-300)
        axes = ws / safe[:, None]
        angles = speeds * (ts - self.knots[ks])
        return np.stack(self.R_starts)[ks] @ rotation_about_many(axes, angles)

    def omega(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.knots, t, side="right")) - 1
        return self.omegas[min(max(k, 0), len(self.omegas) - 1)]


class SampledRotation:
    """Zero-order hold over recorded (t, R) samples.

    Intended for re-driving the streaming lift filter from a trace; the hold
    keeps queries between samples well-defined but adds no smoothness.
    """

    def __init__(self, ts, Rs):
        self.ts = np.asarray(ts, dtype=float)
        if len(self.ts) == 0 or np.any(np.diff(self.ts) < 0.0):
            raise InvalidStateError("sample times must be non-empty and non-decreasing")
        self.Rs = [np.asarray(R, dtype=float) for R in Rs]
        if len(self.Rs) != len(self.ts):
            raise InvalidStateError("sample times and rotations must align")

    def rotation(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.ts, t, side="right")) - 1
        return self.Rs[min(max(k, 0), len(self.Rs) - 1)]
