"""Attitude representations on S3, SO(3), and the compactified MRP space.

Conventions used throughout the package:

* quaternions are scalar-first pairs (q0, q1) with q0**2 + ||q1||**2 = 1;
* rotation matrices map body-frame vectors to the inertial frame;
* the MRP vector is the stereographic image q1 / (1 + q0) of the quaternion,
  extended with an explicit point at infinity at the south pole;
* ``skew(v) @ s == np.cross(v, s)``.

Array-level kernels (``*_array``) operate on plain ndarrays and broadcast
over leading axes; the typed operations wrap them for single values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError, SingularMrpError

# Constructors reject inputs farther than this from the constraint manifold.
CONSTRUCTION_TOL = 1e-6
# 1 +/- q0 below this counts as a projection pole (maps to infinity).
POLE_TOL = 1e-12
# Inertia tensors must be symmetric to this tolerance.
INERTIA_SYMMETRY_TOL = 1e-12


# ---------------------------------------------------------------------------
# array kernels


def skew(v) -> np.ndarray:
    """Return the 3x3 antisymmetric matrix A with A @ s = v x s.

    Args:
        v: length-3 vector.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise InvalidStateError(f"skew expects a finite 3-vector, got {v!r}")
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rot_from_quat_array(q) -> np.ndarray:
    """Rotation matrices from unit quaternions, shape (..., 4) -> (..., 3, 3).

    Evaluates I + 2*q0*[q1]x + 2*[q1]x^2 in expanded form; callers must pass
    unit-norm rows.
    """
    q = np.asarray(q, dtype=float)
    q0, q1, q2, q3 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1.0 - 2.0 * (q2 * q2 + q3 * q3)
    out[..., 0, 1] = 2.0 * (q1 * q2 - q0 * q3)
    out[..., 0, 2] = 2.0 * (q1 * q3 + q0 * q2)
    out[..., 1, 0] = 2.0 * (q1 * q2 + q0 * q3)
    out[..., 1, 1] = 1.0 - 2.0 * (q1 * q1 + q3 * q3)
    out[..., 1, 2] = 2.0 * (q2 * q3 - q0 * q1)
    out[..., 2, 0] = 2.0 * (q1 * q3 - q0 * q2)
    out[..., 2, 1] = 2.0 * (q2 * q3 + q0 * q1)
    out[..., 2, 2] = 1.0 - 2.0 * (q1 * q1 + q2 * q2)
    return out


def canonical_quat(q) -> np.ndarray:
    """Flip the sign of q so its first component of magnitude > 1e-12 is positive."""
    q = np.asarray(q, dtype=float)
    for c in q:
        if abs(c) > 1e-12:
            return -q if c < 0.0 else q
    return q


def quat_from_rot(R) -> np.ndarray:
    """One quaternion of the antipodal pair representing R, canonical sign.

    Uses the max-of-four-squares extraction: the largest of 1 + trace and
    1 + 2*R[i, i] - trace seeds the division, which keeps every divisor
    >= 1 and the extraction well conditioned near pi rotations.
    """
    r00, r11, r22 = R[0][0], R[1][1], R[2][2]
    tr = r00 + r11 + r22
    c0 = 1.0 + tr
    c1 = 1.0 + 2.0 * r00 - tr
    c2 = 1.0 + 2.0 * r11 - tr
    c3 = 1.0 + 2.0 * r22 - tr
    k = max(range(4), key=lambda i: (c0, c1, c2, c3)[i])
    if k == 0:
        s = 2.0 * math.sqrt(c0)
        q = (0.25 * s, (R[2][1] - R[1][2]) / s, (R[0][2] - R[2][0]) / s,
             (R[1][0] - R[0][1]) / s)
    elif k == 1:
        s = 2.0 * math.sqrt(c1)
        q = ((R[2][1] - R[1][2]) / s, 0.25 * s, (R[0][1] + R[1][0]) / s,
             (R[0][2] + R[2][0]) / s)
    elif k == 2:
        s = 2.0 * math.sqrt(c2)
        q = ((R[0][2] - R[2][0]) / s, (R[0][1] + R[1][0]) / s, 0.25 * s,
             (R[1][2] + R[2][1]) / s)
    else:
        s = 2.0 * math.sqrt(c3)
        q = ((R[1][0] - R[0][1]) / s, (R[0][2] + R[2][0]) / s,
             (R[1][2] + R[2][1]) / s, 0.25 * s)
    arr = np.array(q)
    arr /= math.sqrt(float(arr @ arr))
    return canonical_quat(arr)


def quat_from_rot_array(R) -> np.ndarray:
    """Vectorized max-of-four-squares extraction, shape (..., 3, 3) -> (..., 4).

    Returns the sign-canonical representative of each rotation (same
    convention as :func:`quat_from_rot`).
    """
    R = np.asarray(R, dtype=float)
    r00, r11, r22 = R[..., 0, 0], R[..., 1, 1], R[..., 2, 2]
    tr = r00 + r11 + r22
    cands = np.stack([1.0 + tr, 1.0 + 2.0 * r00 - tr,
                      1.0 + 2.0 * r11 - tr, 1.0 + 2.0 * r22 - tr], axis=-1)
    branch = np.argmax(cands, axis=-1)
    s = 2.0 * np.sqrt(np.take_along_axis(cands, branch[..., None], axis=-1)[..., 0])
    q = np.empty(R.shape[:-2] + (4,))

    a = R[..., 2, 1] - R[..., 1, 2]
    b = R[..., 0, 2] - R[..., 2, 0]
    c = R[..., 1, 0] - R[..., 0, 1]
    p01 = R[..., 0, 1] + R[..., 1, 0]
    p02 = R[..., 0, 2] + R[..., 2, 0]
    p12 = R[..., 1, 2] + R[..., 2, 1]

    m0 = branch == 0
    q[..., 0] = np.where(m0, 0.25 * s, 0.0)
    q[..., 1] = np.where(m0, a / s, 0.0)
    q[..., 2] = np.where(m0, b / s, 0.0)
    q[..., 3] = np.where(m0, c / s, 0.0)
    m1 = branch == 1
    q[..., 0] = np.where(m1, a / s, q[..., 0])
    q[..., 1] = np.where(m1, 0.25 * s, q[..., 1])
    q[..., 2] = np.where(m1, p01 / s, q[..., 2])
    q[..., 3] = np.where(m1, p02 / s, q[..., 3])
    m2 = branch == 2
    q[..., 0] = np.where(m2, b / s, q[..., 0])
    q[..., 1] = np.where(m2, p01 / s, q[..., 1])
    q[..., 2] = np.where(m2, 0.25 * s, q[..., 2])
    q[..., 3] = np.where(m2, p12 / s, q[..., 3])
    m3 = branch == 3
    q[..., 0] = np.where(m3, c / s, q[..., 0])
    q[..., 1] = np.where(m3, p02 / s, q[..., 1])
    q[..., 2] = np.where(m3, p12 / s, q[..., 2])
    q[..., 3] = np.where(m3, 0.25 * s, q[..., 3])

    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    lead = np.abs(q) > 1e-12
    first = np.argmax(lead, axis=-1)
    sign = np.sign(np.take_along_axis(q, first[..., None], axis=-1)[..., 0])
    return q * np.where(sign == 0.0, 1.0, sign)[..., None]


def rot_from_mrp_array(v) -> np.ndarray:
    """Rotation matrices from finite MRP vectors, shape (..., 3) -> (..., 3, 3)."""
    v = np.asarray(v, dtype=float)
    n2 = np.sum(v * v, axis=-1)[..., None, None]
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1] = -z
    S[..., 0, 2] = y
    S[..., 1, 0] = z
    S[..., 1, 2] = -x
    S[..., 2, 0] = -y
    S[..., 2, 1] = x
    S2 = S @ S
    return np.eye(3) + (8.0 * S2 + 4.0 * (1.0 - n2) * S) / (1.0 + n2) ** 2


def quat_from_mrp_array(v) -> np.ndarray:
    """Unit quaternions ((1-|v|^2)/(1+|v|^2), 2v/(1+|v|^2)), shape (..., 3) -> (..., 4)."""
    v = np.asarray(v, dtype=float)
    n2 = np.sum(v * v, axis=-1)
    out = np.empty(v.shape[:-1] + (4,))
    out[..., 0] = (1.0 - n2) / (1.0 + n2)
    out[..., 1:] = 2.0 * v / (1.0 + n2)[..., None]
    return out


def mrp_from_quat_array(q) -> np.ndarray:
    """Finite-branch stereographic projection q1/(1+q0), shape (..., 4) -> (..., 3).

    Callers must keep q0 away from -1; the typed :func:`mrp_from_quat` handles
    the pole.
    """
    q = np.asarray(q, dtype=float)
    return q[..., 1:] / (1.0 + q[..., 0])[..., None]


def shadow_array(v) -> np.ndarray:
    """Shadow-set counterparts -v/||v||^2 of finite nonzero MRP vectors."""
    v = np.asarray(v, dtype=float)
    return -v / np.sum(v * v, axis=-1)[..., None]


def project_to_so3(M) -> tuple[np.ndarray, float]:
    """Nearest rotation matrix to M (Frobenius) and the correction distance."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        R = (U * np.array([1.0, 1.0, -1.0])) @ Vt
    return R, float(np.linalg.norm(R - M))


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class UnitQuaternion:
    """Point on S3 with scalar part q0 and vector part q1.

    Construction renormalizes the pair and rejects inputs whose norm is
    farther than 1e-6 from 1.
    """

    q0: float
    q1: np.ndarray

    def __post_init__(self):
        q1 = np.asarray(self.q1, dtype=float)
        q0 = float(self.q0)
        if q1.shape != (3,) or not (math.isfinite(q0) and np.all(np.isfinite(q1))):
            raise InvalidStateError("quaternion components must be a finite scalar and 3-vector")
        norm = math.sqrt(q0 * q0 + float(q1 @ q1))
        if abs(norm - 1.0) > CONSTRUCTION_TOL:
            raise InvalidStateError(f"quaternion norm {norm} is farther than {CONSTRUCTION_TOL} from 1")
        object.__setattr__(self, "q0", q0 / norm)
        object.__setattr__(self, "q1", q1 / norm)
        self.q1.setflags(write=False)

    @classmethod
    def from_array(cls, arr) -> "UnitQuaternion":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (4,):
            raise InvalidStateError(f"expected shape (4,), got {arr.shape}")
        return cls(arr[0], arr[1:])

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.q0], self.q1))

    def dot(self, other: "UnitQuaternion") -> float:
        return float(self.q0 * other.q0 + self.q1 @ other.q1)

    def __neg__(self) -> "UnitQuaternion":
        return UnitQuaternion(-self.q0, -self.q1)

    def __repr__(self):
        return f"UnitQuaternion(q0={self.q0!r}, q1={self.q1.tolist()!r})"


NORTH_POLE = UnitQuaternion(1.0, np.zeros(3))
SOUTH_POLE = UnitQuaternion(-1.0, np.zeros(3))


@dataclass(frozen=True, eq=False)
class RotationMatrix:
    """Element of SO(3); body-to-inertial direction cosine matrix.

    Construction projects the input to the nearest orthogonal matrix and
    rejects inputs farther than 1e-6 from SO(3).
    """

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise InvalidStateError("rotation matrix must be a finite 3x3 array")
        ortho = np.linalg.norm(m.T @ m - np.eye(3))
        det = np.linalg.det(m)
        if ortho > CONSTRUCTION_TOL or abs(det - 1.0) > CONSTRUCTION_TOL:
            raise InvalidStateError(
                f"matrix is not a rotation: ||R'R - I||={ortho:.3e}, det={det:.6f}")
        projected, _ = project_to_so3(m)
        object.__setattr__(self, "m", projected)
        self.m.setflags(write=False)

    @classmethod
    def identity(cls) -> "RotationMatrix":
        return cls(np.eye(3))

    def as_array(self) -> np.ndarray:
        return self.m

    def __repr__(self):
        return f"RotationMatrix({self.m.tolist()!r})"


@dataclass(frozen=True, eq=False)
class Mrp:
    """Modified Rodrigues parameters: a finite 3-vector or the point at infinity.

    Infinity is an explicit tag; the finite variant never stores non-finite
    components.
    """

    vec: np.ndarray | None

    def __post_init__(self):
        if self.vec is None:
            return
        vec = np.asarray(self.vec, dtype=float)
        if vec.shape != (3,):
            raise InvalidStateError(f"MRP vector must have shape (3,), got {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise InvalidStateError("finite MRP variant cannot hold non-finite components")
        object.__setattr__(self, "vec", vec)
        self.vec.setflags(write=False)

    @classmethod
    def finite(cls, vec) -> "Mrp":
        return cls(np.asarray(vec, dtype=float))

    @classmethod
    def infinity(cls) -> "Mrp":
        return cls(None)

    @property
    def is_finite(self) -> bool:
        return self.vec is not None

    def norm(self) -> float:
        if self.vec is None:
            return math.inf
        return float(np.linalg.norm(self.vec))

    def as_array(self) -> np.ndarray:
        if self.vec is None:
            raise SingularMrpError("the point at infinity has no coordinate vector")
        return self.vec

    def __eq__(self, other):
        if not isinstance(other, Mrp):
            return NotImplemented
        if self.vec is None or other.vec is None:
            return self.vec is None and other.vec is None
        return bool(np.array_equal(self.vec, other.vec))

    def __repr__(self):
        return "Mrp(inf)" if self.vec is None else f"Mrp({self.vec.tolist()!r})"


MRP_INFINITY = Mrp.infinity()


@dataclass(frozen=True, eq=False)
class AngularVelocity:
    """Body-frame angular velocity in rad/s."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != (3,) or not np.all(np.isfinite(w)):
            raise InvalidStateError("angular velocity must be a finite 3-vector")
        object.__setattr__(self, "w", w)
        self.w.setflags(write=False)


@dataclass(frozen=True, eq=False)
class InertiaTensor:
    """Symmetric positive-definite inertia tensor in kg*m^2."""

    j: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.j, dtype=float)
        if j.shape != (3, 3) or not np.all(np.isfinite(j)):
            raise InvalidStateError("inertia tensor must be a finite 3x3 array")
        if np.max(np.abs(j - j.T)) > INERTIA_SYMMETRY_TOL:
            raise InvalidStateError("inertia tensor must be symmetric")
        if np.min(np.linalg.eigvalsh(j)) <= 0.0:
            raise InvalidStateError("inertia tensor must be positive definite")
        object.__setattr__(self, "j", j)
        self.j.setflags(write=False)


# ---------------------------------------------------------------------------
# maps between the three spaces


def quat_to_rotation(q: UnitQuaternion) -> RotationMatrix:
    """Rotation matrix I + 2*q0*[q1]x + 2*[q1]x^2 of a unit quaternion."""
    return RotationMatrix(rot_from_quat_array(q.as_array()))


def rotation_to_quats(R) -> tuple[UnitQuaternion, UnitQuaternion]:
    """Both unit quaternions representing R, as an exact antipodal pair.

    Accepts a RotationMatrix or a raw 3x3 array; raw input is validated.
    """
    if not isinstance(R, RotationMatrix):
        R = RotationMatrix(R)
    q = UnitQuaternion.from_array(quat_from_rot(R.m))
    return q, -q


def mrp_from_quat(q: UnitQuaternion) -> Mrp:
    """Stereographic projection q1/(1+q0); infinity at the south pole."""
    if 1.0 + q.q0 < POLE_TOL:
        return MRP_INFINITY
    return Mrp.finite(q.q1 / (1.0 + q.q0))


def shadow_mrp_from_quat(q: UnitQuaternion) -> Mrp:
    """Shadow-set projection -q1/(1-q0); infinity at the north pole."""
    if 1.0 - q.q0 < POLE_TOL:
        return MRP_INFINITY
    return Mrp.finite(-q.q1 / (1.0 - q.q0))


def shadow(v: Mrp) -> Mrp:
    """Switch between the original and shadow MRP sets.

    Maps finite nonzero v to -v/||v||^2, the origin to infinity, and infinity
    to the origin; it is an involution on the finite nonzero vectors.
    """
    if not v.is_finite:
        return Mrp.finite(np.zeros(3))
    if float(v.vec @ v.vec) == 0.0:
        return MRP_INFINITY
    return Mrp.finite(shadow_array(v.vec))


def mrp_kinematics_matrix(v: Mrp) -> np.ndarray:
    """Matrix T(v) with d(mrp)/dt = T(v) @ omega for body rates omega.

    T(v) = ((1 - ||v||^2) I + 2 [v]x + 2 v v') / 4. Undefined at infinity;
    the lifting filter never flows there because set switching happens at
    norm 1 + delta.
    """
    if not v.is_finite:
        raise SingularMrpError("MRP kinematics are undefined at the point at infinity")
    vec = v.vec
    n2 = float(vec @ vec)
    return ((1.0 - n2) * np.eye(3) + 2.0 * skew(vec) + 2.0 * np.outer(vec, vec)) / 4.0


def mrp_to_rotation(v: Mrp) -> RotationMatrix:
    """Rotation matrix of an MRP value; the identity at infinity.

    Both MRP sets of one attitude map to the same rotation:
    mrp_to_rotation(v) == mrp_to_rotation(shadow(v)).
    """
    if not v.is_finite:
        return RotationMatrix.identity()
    return RotationMatrix(rot_from_mrp_array(v.vec))


def stereo_inv(v: Mrp) -> UnitQuaternion:
    """Inverse stereographic map from the MRP space onto S3.

    Finite v goes to ((1-||v||^2)/(1+||v||^2), 2v/(1+||v||^2)); infinity goes
    to the south pole. Finite input never lands exactly on the south pole.
    """
    if not v.is_finite:
        return SOUTH_POLE
    return UnitQuaternion.from_array(quat_from_mrp_array(v.vec))


def stereo(q: UnitQuaternion) -> Mrp:
    """Stereographic projection S3 -> MRP space; exact inverse of stereo_inv."""
    return mrp_from_quat(q)


def geodesic_quat_distance(a: UnitQuaternion, b: UnitQuaternion) -> float:
    """Distance 1 - a'b between unit quaternions, in [0, 2]."""
    return min(max(1.0 - a.dot(b), 0.0), 2.0)
