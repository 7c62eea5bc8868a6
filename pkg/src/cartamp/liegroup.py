"""SO(3) maps and the Jacobians of rotated points and rotation traces.

Rotations are plain 3x3 numpy arrays and axis-angle vectors are length-3
arrays. Poses are ``(p, R)`` tuples: position in the parent frame and the
rotation of the child axes in the parent frame.

The exponential-map Jacobian uses the coefficient ``(theta - sin theta) /
theta**3`` on the squared cross-product term. A variant with ``1 - sin theta``
in the numerator shows up in some write-ups; it does not tend to the identity
as theta -> 0 and fails finite-difference checks, so it is not used here.

Axis-angle parameters are singular at rotations of k*pi. Nothing here
reparameterizes around them; the solver relies on random restarts if an
iterate lands on one.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

EXP_SERIES_THRESHOLD = 1e-7
DEXP_IDENTITY_THRESHOLD = 1e-4
# log switches to the axis-from-diagonal branch once cos(theta) < -0.999,
# i.e. theta > pi - 0.0447.
LOG_NEAR_PI_COS = -0.999

Pose = tuple[np.ndarray, np.ndarray]


def skew(v) -> np.ndarray:
    """Cross-product matrix ``[v]x`` so that ``skew(v) @ u == cross(v, u)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _rodrigues(x: float, y: float, z: float, a: float, b: float) -> np.ndarray:
    """I + a K + b K^2 for K = [(x, y, z)]x, written out entrywise."""
    xx, yy, zz, xy, xz, yz = x * x, y * y, z * z, x * y, x * z, y * z
    return np.array(
        [
            [1.0 - b * (yy + zz), b * xy - a * z, b * xz + a * y],
            [b * xy + a * z, 1.0 - b * (xx + zz), b * yz - a * x],
            [b * xz - a * y, b * yz + a * x, 1.0 - b * (xx + yy)],
        ]
    )


def exp_so3(omega) -> np.ndarray:
    """Rodrigues' formula. Below 1e-7 rad the second-order series is used."""
    x, y, z = (float(v) for v in omega)
    theta = math.sqrt(x * x + y * y + z * z)
    if theta < EXP_SERIES_THRESHOLD:
        return _rodrigues(x, y, z, 1.0, 0.5)
    return _rodrigues(x, y, z, math.sin(theta) / theta, (1.0 - math.cos(theta)) / (theta * theta))


def log_so3(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`exp_so3` returning an angle in ``[0, pi]``.

    The angle comes from ``atan2`` of the skew and trace parts, which keeps
    full precision at both ends of the range. Near pi the axis is read from
    the symmetric part of ``R`` instead of the (vanishing) skew part.
    """
    R = np.asarray(R, dtype=float)
    v = 0.5 * vee(R - R.T)
    s = float(np.linalg.norm(v))
    c = 0.5 * (np.trace(R) - 1.0)
    c = min(1.0, max(-1.0, c))
    theta = float(np.arctan2(s, c))
    if theta < 1e-12:
        return v.copy()
    if c > LOG_NEAR_PI_COS:
        return v * (theta / s)
    S = 0.5 * (R + R.T)
    aat = (S - c * np.eye(3)) / (1.0 - c)
    k = int(np.argmax(np.diag(aat)))
    axis = aat[:, k] / np.sqrt(aat[k, k])
    axis /= np.linalg.norm(axis)
    if s > 0.0:
        if axis @ v < 0.0:
            axis = -axis
    elif axis[k] < 0.0:
        axis = -axis
    return axis * theta


def dexp_so3(omega) -> np.ndarray:
    """Left Jacobian of the exponential map.

    Relates a perturbation ``delta`` of ``omega`` to the world-frame rotation
    vector of ``exp(omega + delta) exp(omega)^T``. Returns the identity below
    1e-4 rad.
    """
    x, y, z = (float(v) for v in omega)
    t2 = x * x + y * y + z * z
    theta = math.sqrt(t2)
    if theta < DEXP_IDENTITY_THRESHOLD:
        return np.eye(3)
    a = (1.0 - math.cos(theta)) / t2
    b = (theta - math.sin(theta)) / (t2 * theta)
    return _rodrigues(x, y, z, a, b)


def rotate_point_jacobian(omega, p) -> np.ndarray:
    """d(exp(omega) p) / d omega, a 3x3 matrix."""
    Rp = exp_so3(omega) @ np.asarray(p, dtype=float)
    return -skew(Rp) @ dexp_so3(omega)


def angle_between(R1: np.ndarray, R2: np.ndarray) -> float:
    """Angle of ``R1^T R2`` from its trace, in ``[0, pi]``."""
    c = 0.5 * (np.sum(R1 * R2) - 1.0)
    return float(np.arccos(min(1.0, max(-1.0, c))))


class TraceForm(enum.Enum):
    """How a relative rotation depends on one exponential-map factor ``X``."""

    CONST = "const"  # A
    BXC = "bxc"  # B X C
    AXINVB = "axinvb"  # A X^-1 B
    AXINVBXC = "axinvbxc"  # A X^-1 B X C


def dtrace_composed(form: TraceForm, A, B, C, omega) -> np.ndarray:
    """Matrix derivative d tr(M) / dX at ``X = exp(omega)`` for the given form.

    Unused factors may be passed as ``None``.
    """
    if form is TraceForm.CONST:
        return np.zeros((3, 3))
    X = exp_so3(omega)
    Xinv = X.T
    if form is TraceForm.BXC:
        return (C @ B).T
    if form is TraceForm.AXINVB:
        return -(Xinv @ B @ A @ Xinv).T
    if form is TraceForm.AXINVBXC:
        return (C @ A @ Xinv @ B - Xinv @ B @ X @ C @ A @ Xinv).T
    raise ValueError(f"unknown trace form {form!r}")


def trace_gradient(dtr_dX: np.ndarray, omega) -> np.ndarray:
    """Chain a matrix derivative d tr / dX through ``X = exp(omega)``.

    Uses ``dX/d omega_i = [dexp(omega) e_i]x X``.
    """
    X = exp_so3(omega)
    J = dexp_so3(omega)
    return np.array([np.sum(dtr_dX * (skew(J[:, i]) @ X)) for i in range(3)])


@dataclass
class RelPose:
    """Position plus axis-angle rotation of a frame in its parent."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.r = np.asarray(self.r, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.r))):
            raise ValueError("RelPose components must be finite")

    @classmethod
    def from_vector(cls, v) -> RelPose:
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    @classmethod
    def from_pose(cls, pose: Pose) -> RelPose:
        return cls(pose[0], log_so3(pose[1]))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.r])

    def pose(self) -> Pose:
        return self.p.copy(), exp_so3(self.r)


def compose(a: Pose, b: Pose) -> Pose:
    return a[0] + a[1] @ b[0], a[1] @ b[1]


def invert(a: Pose) -> Pose:
    Rt = a[1].T
    return -Rt @ a[0], Rt


def identity_pose() -> Pose:
    return np.zeros(3), np.eye(3)


def homogeneous(pose: Pose) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = pose[1]
    T[:3, 3] = pose[0]
    return T
