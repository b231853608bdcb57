"""Synthetic dynamic scenes standing in for a visual front-end."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import SceneDataset
from .graph import Values
from .se3 import Pose, se3_exp

STREAMS = {"scene": 0, "perturbation": 1}


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Named, independent sub-stream of a single experiment seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[name],)))


@dataclass
class ObjectSpec:
    initial_pose: Pose
    twist: np.ndarray  # body-frame twist per step, [rot | trans]
    num_points: int = 25
    radius: float = 1.5
    twist_ramp: np.ndarray = field(default_factory=lambda: np.zeros(6))  # added per step

    def __post_init__(self):
        self.twist = np.asarray(self.twist, dtype=float).reshape(6)
        self.twist_ramp = np.asarray(self.twist_ramp, dtype=float).reshape(6)


@dataclass
class NoiseSpec:
    measurement: float = 0.05
    odometry_rot: float = 0.01
    odometry_trans: float = 0.02
    motion_init_rot: float = 0.02
    motion_init_trans: float = 0.1
    # Point initial values are built from measurements, so the dataset has no
    # slot for this; it is validated and passed on to perturb_values by callers.
    point_init: float = 0.0

    @classmethod
    def zero(cls) -> NoiseSpec:
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def default_objects() -> list[ObjectSpec]:
    def at(x, y, z, yaw):
        return Pose(se3_exp(np.array([0, 0, yaw, 0, 0, 0]))[0], [x, y, z])

    return [
        ObjectSpec(at(6.0, 4.0, 0.0, 0.0), [0.0, 0.0, 0.0, 1.2, 0.0, 0.0]),
        ObjectSpec(at(10.0, -5.0, 0.5, 1.2), [0.0, 0.0, 0.06, 0.8, 0.0, 0.0]),
        ObjectSpec(at(24.0, 3.0, 0.0, np.pi - 0.2), [0.01, 0.0, -0.04, 0.6, 0.05, 0.0]),
    ]


@dataclass
class SceneConfig:
    steps: int = 20
    camera_path: str = "straight"
    camera_speed: float = 1.0
    camera_yaw_rate: float = 0.03
    objects: list[ObjectSpec] = field(default_factory=default_objects)
    static_points: int = 150
    static_volume: tuple[tuple[float, float], ...] = ((-5.0, 30.0), (-12.0, 12.0), (-2.0, 4.0))
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    name: str = "sim"

    def validate(self) -> None:
        errors = []
        if self.steps < 2:
            errors.append(f"steps: need at least 2 time-steps, got {self.steps}")
        if self.camera_path not in ("straight", "arc"):
            errors.append(f"camera_path: expected straight or arc, got {self.camera_path!r}")
        for name, val in vars(self.noise).items():
            if val < 0:
                errors.append(f"noise.{name}: must be >= 0, got {val}")
        if self.static_points < 0:
            errors.append("static_points: must be >= 0")
        for n, obj in enumerate(self.objects):
            if obj.num_points < 1:
                errors.append(f"objects[{n}].num_points: must be >= 1")
            if obj.radius <= 0:
                errors.append(f"objects[{n}].radius: must be > 0")
        if errors:
            raise ValueError("; ".join(errors))


def _noisy_pose(rng, p: Pose, sig_rot: float, sig_trans: float) -> Pose:
    xi = np.concatenate([rng.normal(scale=sig_rot, size=3), rng.normal(scale=sig_trans, size=3)])
    return p @ Pose.exp(xi)


def _sample_ball(rng, n: int, radius: float) -> np.ndarray:
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * radius * rng.uniform(size=(n, 1)) ** (1.0 / 3.0)


def generate(c: SceneConfig) -> SceneDataset:
    c.validate()
    rng = rng_stream(c.seed, "scene")
    K, nz = c.steps, c.noise
    d = SceneDataset(name=c.name)

    step_twist = np.array([0.0, 0.0, c.camera_yaw_rate if c.camera_path == "arc" else 0.0,
                           c.camera_speed, 0.0, 0.0])
    cams = [Pose.identity()]
    for _ in range(1, K):
        cams.append(cams[-1] @ Pose.exp(step_twist))

    lo, hi = np.array(c.static_volume, dtype=float).T
    static = rng.uniform(lo, hi, size=(c.static_points, 3))
    locals_ = [_sample_ball(rng, obj.num_points, obj.radius) for obj in c.objects]

    for k in range(K):
        d.gt_cam[k] = cams[k]
    for i, m in enumerate(static):
        d.gt_point[(i, 0)] = m

    next_id = c.static_points
    for n, (obj, pts) in enumerate(zip(c.objects, locals_)):
        j = n + 1
        ids = list(range(next_id, next_id + len(pts)))
        next_id += len(pts)
        L = obj.initial_pose
        for k in range(K):
            if k > 0:
                prev = L
                L = prev @ Pose.exp(obj.twist + (k - 1) * obj.twist_ramp)
                # world motion via the kinematic identity H = L_k L_{k-1}^-1
                d.gt_motion[(j, k)] = L @ prev.inverse()
            d.gt_obj[(j, k)] = L
            world = L.act(pts)
            for i, w in zip(ids, world):
                d.gt_point[(i, k)] = w
                d.tracklet_object[i] = j

    # front-end outputs, in a fixed order for reproducibility
    d.cam_init[0] = cams[0]
    for k in range(1, K):
        T = _noisy_pose(rng, cams[k - 1].inverse() @ cams[k], nz.odometry_rot, nz.odometry_trans)
        d.odometry[k] = T
        d.cam_init[k] = d.cam_init[k - 1] @ T
    for (j, k) in sorted(d.gt_motion):
        d.motion_init[(j, k)] = _noisy_pose(rng, d.gt_motion[(j, k)], nz.motion_init_rot, nz.motion_init_trans)
    for k in range(K):
        Xi = cams[k].inverse()
        for i in range(c.static_points):
            d.static_meas[(i, k)] = Xi.act(static[i]) + rng.normal(scale=nz.measurement, size=3)
        for i in sorted(d.tracklet_object):
            d.dynamic_meas[(i, k)] = Xi.act(d.gt_point[(i, k)]) + rng.normal(scale=nz.measurement, size=3)
    return d


def perturb_values(
    v: Values,
    sigma_pose: tuple[float, float],
    sigma_point: float,
    seed: int | np.random.Generator = 0,
) -> Values:
    """Right-perturb poses by Gaussian twists and offset points by Gaussian noise.

    ``sigma_pose`` is (rotation rad, translation m) per axis.
    """
    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(seed, "perturbation")
    sr, st = sigma_pose
    if min(sr, st, sigma_point) < 0:
        raise ValueError("sigmas must be >= 0")
    delta = np.zeros(v.dim)
    for key in v:
        off = v.offset(key)
        if key.is_pose:
            delta[off:off + 3] = rng.normal(scale=sr, size=3)
            delta[off + 3:off + 6] = rng.normal(scale=st, size=3)
        else:
            delta[off:off + 3] = rng.normal(scale=sigma_point, size=3)
    return v.retract(delta)
