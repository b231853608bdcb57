"""Residuals for world-centric and object-centric dynamic SLAM graphs.

Every kernel is batched: pose arguments arrive as ``(R, t)`` stacks, points as
``(N, 3)`` arrays. Jacobians are taken with respect to right perturbations
``P exp(delta)`` for poses and additive updates for points.
"""

from __future__ import annotations

import enum

import numpy as np

from .graph import Factor, Key, NoiseModel
from .se3 import Pose, act_rt, adjoint, compose_rt, hat, inverse_rt, se3_jr_inv, se3_log


class FactorKind(enum.Enum):
    PointMeasurementWorld = "PointMeasurementFactor"
    CameraOdometry = "OdometryFactor"
    WorldMotionTernary = "WorldMotionFactor"
    MotionSmoothing = "SmoothingFactor"
    PointMeasurementObjectCentric = "ObjectPointMeasurementFactor"
    ObjectCentricMotion = "ObjectCentricMotionFactor"
    ObjectKinematic = "ObjectKinematicFactor"
    PriorPose = "PosePrior"
    PriorPoint = "PointPrior"


def _mv(R, p):
    return np.einsum("nij,nj->ni", R, p)


def _eye(n, d):
    return np.broadcast_to(np.eye(d), (n, d, d))


def _point_jac(R, p):
    """d(P exp(delta) p) / d delta = R [-p^, I]."""
    n = p.shape[0]
    J = np.empty((n, 3, 6))
    J[:, :, :3] = -R @ hat(p)
    J[:, :, 3:] = R
    return J


def _inverse_point_jac(q):
    """d(exp(-delta) P^-1 m) / d delta with q = P^-1 m: [q^, -I]."""
    n = q.shape[0]
    J = np.empty((n, 3, 6))
    J[:, :, :3] = hat(q)
    J[:, :, 3:] = -np.eye(3)
    return J


class PointMeasurementFactor(Factor):
    """Camera-frame point observation of a world point: ``z - X^-1 m``."""

    slot_is_pose = (True, False)
    dim = 3
    measurement_fields = ("z",)

    def __init__(self, camera: Key, point: Key, z, noise: NoiseModel):
        super().__init__((camera, point), noise, z=np.asarray(z, dtype=float))

    @classmethod
    def kernel(cls, args, meas, want_jac=True):
        (R, t), m = args
        Ri, ti = inverse_rt(R, t)
        q = act_rt(Ri, ti, m)
        r = meas["z"] - q
        if not want_jac:
            return r, None
        return r, [-_inverse_point_jac(q), -Ri]


class OdometryFactor(Factor):
    """``log(X_k^-1 X_{k-1} T)`` between consecutive camera poses."""

    slot_is_pose = (True, True)
    dim = 6
    measurement_fields = ("T",)

    def __init__(self, prev: Key, cur: Key, T: Pose, noise: NoiseModel):
        super().__init__((prev, cur), noise, T=T)

    @classmethod
    def kernel(cls, args, meas, want_jac=True):
        (R0, t0), (R1, t1) = args
        RT, tT = meas["T"]
        Ri, ti = inverse_rt(R1, t1)
        ER, Et = compose_rt(*compose_rt(Ri, ti, R0, t0), RT, tT)
        r = se3_log(ER, Et)
        if not want_jac:
            return r, None
        Jinv = se3_jr_inv(r)
        J_prev = Jinv @ adjoint(*inverse_rt(RT, tT))
        J_cur = -Jinv @ adjoint(*inverse_rt(ER, Et))
        return r, [J_prev, J_cur]


class WorldMotionFactor(Factor):
    """Ternary rigid-motion factor ``m_k - H m_{k-1}`` on world points."""

    slot_is_pose = (False, False, True)
    dim = 3

    def __init__(self, point_k: Key, point_km1: Key, motion: Key, noise: NoiseModel):
        super().__init__((point_k, point_km1, motion), noise)

    @classmethod
    def kernel(cls, args, meas, want_jac=True):
        mk, mkm1, (RH, tH) = args
        r = mk - act_rt(RH, tH, mkm1)
        if not want_jac:
            return r, None
        n = r.shape[0]
        return r, [_eye(n, 3), -RH, -_point_jac(RH, mkm1)]


class SmoothingFactor(Factor):
    """``log(H_a^-1 H_b)`` between consecutive motions of one object."""

    slot_is_pose = (True, True)
    dim = 6

    def __init__(self, motion_a: Key, motion_b: Key, noise: NoiseModel):
        super().__init__((motion_a, motion_b), noise)

    @classmethod
    def kernel(cls, args, meas, want_jac=True):
        (Ra, ta), (Rb, tb) = args
        ER, Et = compose_rt(*inverse_rt(Ra, ta), Rb, tb)
        r = se3_log(ER, Et)
        if not want_jac:
            return r, None
        Jinv = se3_jr_inv(r)
        return r, [-Jinv @ adjoint(*inverse_rt(ER, Et)), Jinv]


class ObjectPointMeasurementFactor(Factor):
    """Observation of an object-frame point: ``z - X^-1 L m_L``."""

    slot_is_pose = (True, True, False)
    dim = 3
    measurement_fields = ("z",)

    def __init__(self, camera: Key, object_pose: Key, point: Key, z, noise: NoiseModel):
        super().__init__((camera, object_pose, point), noise, z=np.asarray(z, dtype=float))

    @classmethod
    def kernel(cls, args, meas, want_jac=True):
        (RX, tX), (RL, tL), m = args
        Ri, ti = inverse_rt(RX, tX)
        w = act_rt(RL, tL, m)
        q = act_rt(Ri, ti, w)
        r = meas["z"] - q
        if not want_jac:
            return r, None
        J_X = -_inverse_point_jac(q)
        J_L = -Ri @ _point_jac(RL, m)
        J_m = -Ri @ RL
        return r, [J_X, J_L, J_m]


class ObjectCentricMotionFactor(Factor):
    """``(L_k - H L_{k-1}) [m_L, 1]``, truncated to three rows.

    The matrix difference is kept on purpose: it is not an SE(3) constraint
    and the comparison against :class:`ObjectKinematicFactor` depends on it.
    """

    slot_is_pose = (True, True, True, False)
    dim = 3

    def __init__(self, pose_k: Key, pose_km1: Key, motion: Key, point: Key, noise: NoiseModel):
        super().__init__((pose_k, pose_km1, motion, point), noise)

    @classmethod
    def kernel(cls, args, meas, want_jac=True):
        (Rk, tk), (Rp, tp), (RH, tH), m = args
        # (L_k - H L_{k-1}) as 3x4 blocks acting on [m, 1]
        RHL, tHL = compose_rt(RH, tH, Rp, tp)
        r = _mv(Rk - RHL, m) + (tk - tHL)
        if not want_jac:
            return r, None
        J_k = _point_jac(Rk, m)
        J_p = -RH @ _point_jac(Rp, m)
        J_H = -_point_jac(RH, act_rt(Rp, tp, m))
        J_m = Rk - RHL
        return r, [J_k, J_p, J_H, J_m]


class ObjectKinematicFactor(Factor):
    """``log(L_k^-1 H L_{k-1})``: object pose change explained by the world motion."""

    slot_is_pose = (True, True, True)
    dim = 6

    def __init__(self, pose_k: Key, pose_km1: Key, motion: Key, noise: NoiseModel):
        super().__init__((pose_k, pose_km1, motion), noise)

    @classmethod
    def kernel(cls, args, meas, want_jac=True):
        (Rk, tk), (Rp, tp), (RH, tH) = args
        ER, Et = compose_rt(*compose_rt(*inverse_rt(Rk, tk), RH, tH), Rp, tp)
        r = se3_log(ER, Et)
        if not want_jac:
            return r, None
        Jinv = se3_jr_inv(r)
        J_k = -Jinv @ adjoint(*inverse_rt(ER, Et))
        J_p = Jinv
        J_H = Jinv @ adjoint(*inverse_rt(Rp, tp))
        return r, [J_k, J_p, J_H]


class PosePrior(Factor):
    """``log(prior^-1 P)``."""

    slot_is_pose = (True,)
    dim = 6
    measurement_fields = ("prior",)

    def __init__(self, key: Key, prior: Pose, noise: NoiseModel):
        super().__init__((key,), noise, prior=prior)

    @classmethod
    def kernel(cls, args, meas, want_jac=True):
        ((R, t),) = args
        ER, Et = compose_rt(*inverse_rt(*meas["prior"]), R, t)
        r = se3_log(ER, Et)
        if not want_jac:
            return r, None
        return r, [se3_jr_inv(r)]


class PointPrior(Factor):
    """``p - prior``."""

    slot_is_pose = (False,)
    dim = 3
    measurement_fields = ("prior",)

    def __init__(self, key: Key, prior, noise: NoiseModel):
        super().__init__((key,), noise, prior=np.asarray(prior, dtype=float))

    @classmethod
    def kernel(cls, args, meas, want_jac=True):
        (p,) = args
        r = p - meas["prior"]
        if not want_jac:
            return r, None
        return r, [_eye(r.shape[0], 3)]


FACTOR_CLASSES = {
    FactorKind.PointMeasurementWorld: PointMeasurementFactor,
    FactorKind.CameraOdometry: OdometryFactor,
    FactorKind.WorldMotionTernary: WorldMotionFactor,
    FactorKind.MotionSmoothing: SmoothingFactor,
    FactorKind.PointMeasurementObjectCentric: ObjectPointMeasurementFactor,
    FactorKind.ObjectCentricMotion: ObjectCentricMotionFactor,
    FactorKind.ObjectKinematic: ObjectKinematicFactor,
    FactorKind.PriorPose: PosePrior,
    FactorKind.PriorPoint: PointPrior,
}


# Plain-function forms of the residuals, for single evaluations.

def point_measurement_residual(X_k: Pose, m_W, z) -> np.ndarray:
    return np.asarray(z, dtype=float) - X_k.inverse().act(m_W)


def odometry_residual(X_km1: Pose, X_k: Pose, T: Pose) -> np.ndarray:
    return (X_k.inverse() @ X_km1 @ T).log()


def world_motion_ternary_residual(m_k, m_km1, H: Pose) -> np.ndarray:
    return np.asarray(m_k, dtype=float) - H.act(m_km1)


def motion_smoothing_residual(H_a: Pose, H_b: Pose) -> np.ndarray:
    return (H_a.inverse() @ H_b).log()


def object_centric_point_residual(X_k: Pose, L_k: Pose, m_L, z) -> np.ndarray:
    return np.asarray(z, dtype=float) - X_k.inverse().act(L_k.act(m_L))


def object_centric_motion_residual(L_k: Pose, L_km1: Pose, H: Pose, m_L) -> np.ndarray:
    D = L_k.matrix() - (H @ L_km1).matrix()
    return (D @ np.append(np.asarray(m_L, dtype=float), 1.0))[:3]


def object_kinematic_residual(L_k: Pose, L_km1: Pose, H: Pose) -> np.ndarray:
    return (L_k.inverse() @ H @ L_km1).log()
