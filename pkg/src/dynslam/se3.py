"""SE(3) / SO(3) arithmetic for rigid-body poses and points.

Twists are ordered ``[rotation | translation]``. The array kernels at the top
of the module broadcast over leading batch dimensions so that factors can be
linearized in bulk; :class:`Pose` wraps a single transform for everything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

# Angles below these use Taylor series for the trig coefficients.
_SMALL_ANGLE = 1e-4
_SERIES_ANGLE = 0.1
# log is rejected at or beyond pi - this.
NEAR_PI = 1e-6
ORTHO_TOL = 1e-9


class NearSingularityError(ValueError):
    """Raised by the SE(3)/SO(3) log when the rotation angle is too close to pi."""


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector (batched over leading axes)."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def vee(W: np.ndarray) -> np.ndarray:
    return np.stack([W[..., 2, 1], W[..., 0, 2], W[..., 1, 0]], axis=-1)


def _coeffs(theta: np.ndarray):
    """sin(t)/t, (1-cos t)/t^2, (t-sin t)/t^3 with series near zero."""
    t2 = theta * theta
    small = theta < _SMALL_ANGLE
    mid = theta < _SERIES_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(safe) / safe)
    half = np.sin(0.5 * safe) / safe
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, 2.0 * half * half)
    safe_mid = np.where(mid, 1.0, theta)
    c = np.where(
        mid,
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2**3 / 362880.0,
        (safe_mid - np.sin(safe_mid)) / safe_mid**3,
    )
    return a, b, c


def so3_exp(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    a, b, _ = _coeffs(theta)
    W = hat(w)
    eye = np.broadcast_to(np.eye(3), W.shape)
    return eye + a[..., None, None] * W + b[..., None, None] * (W @ W)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R; raises NearSingularityError close to pi."""
    R = np.asarray(R, dtype=float)
    s = 0.5 * vee(R - np.swapaxes(R, -1, -2))
    sin_t = np.linalg.norm(s, axis=-1)
    cos_t = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(sin_t, cos_t)
    if np.any(theta >= np.pi - NEAR_PI):
        raise NearSingularityError(
            f"rotation angle {float(np.max(theta)):.9f} rad is within {NEAR_PI} of pi"
        )
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, sin_t)
    scale = np.where(small, 1.0 + theta * theta / 6.0, theta / safe)
    return scale[..., None] * s


def so3_jr(w: np.ndarray) -> np.ndarray:
    """Right Jacobian of SO(3)."""
    theta = np.linalg.norm(w, axis=-1)
    _, b, c = _coeffs(theta)
    W = hat(w)
    eye = np.broadcast_to(np.eye(3), W.shape)
    return eye - b[..., None, None] * W + c[..., None, None] * (W @ W)


def so3_jr_inv(w: np.ndarray) -> np.ndarray:
    """Inverse right Jacobian of SO(3)."""
    theta = np.linalg.norm(w, axis=-1)
    t2 = theta * theta
    mid = theta < _SERIES_ANGLE
    safe = np.where(mid, 1.0, theta)
    d = np.where(
        mid,
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2**3 / 1209600.0,
        1.0 / (safe * safe) - (1.0 + np.cos(safe)) / (2.0 * safe * np.sin(safe)),
    )
    W = hat(w)
    eye = np.broadcast_to(np.eye(3), W.shape)
    return eye + 0.5 * W + d[..., None, None] * (W @ W)


def _q_left(rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Translational coupling block of the SE(3) left Jacobian."""
    theta = np.linalg.norm(phi, axis=-1)
    t2 = theta * theta
    mid = theta < _SERIES_ANGLE
    safe = np.where(mid, 1.0, theta)
    _, _, c1 = _coeffs(theta)
    c2 = np.where(
        mid,
        1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0 - t2**3 / 3628800.0,
        (safe * safe + 2.0 * np.cos(safe) - 2.0) / (2.0 * safe**4),
    )
    c3 = np.where(
        mid,
        1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0,
        -0.5
        * (
            (1.0 - 0.5 * safe * safe - np.cos(safe)) / safe**4
            - 3.0 * (safe - np.sin(safe) - safe**3 / 6.0) / safe**5
        ),
    )
    P = hat(phi)
    Rh = hat(rho)
    PR = P @ Rh
    RP = Rh @ P
    PRP = PR @ P
    PP = P @ P
    c1 = c1[..., None, None]
    c2 = c2[..., None, None]
    c3 = c3[..., None, None]
    return (
        0.5 * Rh
        + c1 * (PR + RP + PRP)
        + c2 * (PP @ Rh + RP @ P - 3.0 * PRP)
        + c3 * (PRP @ P + PP @ Rh @ P)
    )


def se3_exp(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form exponential; returns (R, t)."""
    xi = np.asarray(xi, dtype=float)
    w, v = xi[..., :3], xi[..., 3:]
    theta = np.linalg.norm(w, axis=-1)
    a, b, c = _coeffs(theta)
    W = hat(w)
    WW = W @ W
    eye = np.broadcast_to(np.eye(3), W.shape)
    R = eye + a[..., None, None] * W + b[..., None, None] * WW
    V = eye + b[..., None, None] * W + c[..., None, None] * WW
    t = np.einsum("...ij,...j->...i", V, v)
    return R, t


def se3_log(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Coupled SE(3) log; returns the [rotation | translation] twist."""
    w = so3_log(R)
    theta = np.linalg.norm(w, axis=-1)
    t2 = theta * theta
    mid = theta < _SERIES_ANGLE
    safe = np.where(mid, 1.0, theta)
    d = np.where(
        mid,
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2**3 / 1209600.0,
        1.0 / (safe * safe) - (1.0 + np.cos(safe)) / (2.0 * safe * np.sin(safe)),
    )
    W = hat(w)
    eye = np.broadcast_to(np.eye(3), W.shape)
    V_inv = eye - 0.5 * W + d[..., None, None] * (W @ W)
    v = np.einsum("...ij,...j->...i", V_inv, np.asarray(t, dtype=float))
    return np.concatenate([w, v], axis=-1)


def se3_jr_inv(xi: np.ndarray) -> np.ndarray:
    """Inverse right Jacobian of SE(3) for the [rotation | translation] twist."""
    xi = np.asarray(xi, dtype=float)
    w, v = xi[..., :3], xi[..., 3:]
    Ji = so3_jr_inv(w)
    Q = _q_left(-v, -w)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = Ji
    out[..., 3:, 3:] = Ji
    out[..., 3:, :3] = -Ji @ Q @ Ji
    return out


def adjoint(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Adjoint of (R, t) acting on [rotation | translation] twists."""
    out = np.zeros(R.shape[:-2] + (6, 6))
    out[..., :3, :3] = R
    out[..., 3:, 3:] = R
    out[..., 3:, :3] = hat(t) @ R
    return out


def compose_rt(R1, t1, R2, t2):
    return R1 @ R2, np.einsum("...ij,...j->...i", R1, t2) + t1


def inverse_rt(R, t):
    Rt = np.swapaxes(R, -1, -2)
    return Rt, -np.einsum("...ij,...j->...i", Rt, t)


def act_rt(R, t, p):
    return np.einsum("...ij,...j->...i", R, p) + t


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``p -> R p + t``.

    ``quat`` caches the (x, y, z, w) quaternion a pose was parsed from, so that
    writing it back out reproduces the input bytes.
    """

    R: np.ndarray
    t: np.ndarray
    quat: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        t = np.array(self.t, dtype=float).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL or np.linalg.det(R) < 0:
            raise ValueError("rotation is not orthonormal with determinant +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> Pose:
        return cls(np.eye(3), np.array([x, y, z], dtype=float))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_quat(cls, t, q) -> Pose:
        """Build from translation and an (x, y, z, w) quaternion."""
        q = np.array(q, dtype=float)
        return cls(Rotation.from_quat(q).as_matrix(), t, quat=q)

    @classmethod
    def rot_x(cls, angle: float) -> Pose:
        return cls(so3_exp(np.array([angle, 0.0, 0.0])), np.zeros(3))

    @classmethod
    def rot_z(cls, angle: float) -> Pose:
        return cls(so3_exp(np.array([0.0, 0.0, angle])), np.zeros(3))

    @classmethod
    def exp(cls, xi) -> Pose:
        R, t = se3_exp(np.asarray(xi, dtype=float))
        return cls(R, t)

    def log(self) -> np.ndarray:
        return se3_log(self.R, self.t)

    def as_quat(self) -> np.ndarray:
        """(x, y, z, w) quaternion with w >= 0."""
        if self.quat is not None:
            return self.quat
        q = Rotation.from_matrix(self.R).as_quat()
        return -q if q[3] < 0 else q

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def inverse(self) -> Pose:
        return Pose(*inverse_rt(self.R, self.t))

    def compose(self, other: Pose) -> Pose:
        return Pose(*compose_rt(self.R, self.t, other.R, other.t))

    def __matmul__(self, other):
        if isinstance(other, Pose):
            return self.compose(other)
        return self.act(other)

    def act(self, p) -> np.ndarray:
        """Transform a point (or an (N, 3) array of points)."""
        return np.asarray(p, dtype=float) @ self.R.T + self.t

    def angle(self) -> float:
        c = 0.5 * (np.trace(self.R) - 1.0)
        return float(np.arccos(np.clip(c, -1.0, 1.0)))

    def allclose(self, other: Pose, atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.R, other.R, rtol=0, atol=atol)
            and np.allclose(self.t, other.t, rtol=0, atol=atol)
        )

    def __repr__(self):
        return f"Pose(rotvec={np.round(so3_log_safe(self.R), 6)}, t={np.round(self.t, 6)})"


def so3_log_safe(R):
    return Rotation.from_matrix(R).as_rotvec()


def exp_hat(xi) -> Pose:
    return Pose.exp(xi)


def log_vee(p: Pose) -> np.ndarray:
    return p.log()


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def frame_change_motion(body_motion: Pose, ref_pose: Pose) -> Pose:
    """Express a body-frame motion in the frame that ``ref_pose`` lives in.

    Returns ``ref_pose @ body_motion @ ref_pose^-1``.
    """
    return ref_pose @ body_motion @ ref_pose.inverse()


def transform_point(motion: Pose, p) -> np.ndarray:
    return motion.act(p)


def random_pose(rng: np.random.Generator, max_angle: float = 3.0, scale: float = 5.0) -> Pose:
    """Uniform axis, uniform angle below ``max_angle``, Gaussian translation."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    return Pose(so3_exp(axis * angle), rng.normal(scale=scale, size=3))
