"""Assemble a dataset into world-centric or object-centric factor graphs."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .dataset import SceneDataset
from .factors import (
    ObjectCentricMotionFactor,
    ObjectKinematicFactor,
    ObjectPointMeasurementFactor,
    OdometryFactor,
    PointMeasurementFactor,
    PosePrior,
    SmoothingFactor,
    WorldMotionFactor,
)
from .graph import (
    CameraPose,
    DynamicPointLocal,
    DynamicPointWorld,
    Graph,
    NoiseModel,
    ObjectMotion,
    ObjectPose,
    StaticPoint,
    Values,
)
from .se3 import Pose


class DatasetError(ValueError):
    pass


class Formulation(str, enum.Enum):
    WORLD_CENTRIC = "world"
    OBJECT_CENTRIC_BASE = "oc-base"
    OBJECT_CENTRIC_WITH_OKF = "oc-okf"
    OBJECT_CENTRIC_ONLY_OKF = "oc-only-okf"

    @property
    def object_centric(self) -> bool:
        return self is not Formulation.WORLD_CENTRIC


@dataclass(frozen=True)
class NoiseConfig:
    """Per-factor standard deviations."""

    point: float = 0.05
    odometry: tuple[float, float] = (0.01, 0.02)
    motion: float = 0.05
    object_motion: float = 0.05
    smoothing: tuple[float, float] = (0.04, 0.2)
    kinematic: tuple[float, float] = (0.02, 0.05)
    prior: float = 1e-4


@dataclass(frozen=True)
class BuildOptions:
    noise: NoiseConfig = NoiseConfig()
    # "centroid" or "ground_truth": where object-pose priors (and the first
    # object pose initial value) come from.
    object_prior: str = "centroid"
    object_priors: bool = True


@dataclass
class BuiltProblem:
    formulation: Formulation
    graph: Graph
    initial: Values
    manifest: dict = field(default_factory=dict)


def centroid_init(points) -> Pose:
    """Identity rotation, translation at the arithmetic mean of ``points``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise DatasetError("centroid of an empty point set")
    return Pose(np.eye(3), pts.mean(axis=0))


def _check(d: SceneDataset):
    if d.num_steps < 2:
        raise DatasetError(f"need at least 2 time-steps, dataset has {d.num_steps}")


def _common(d: SceneDataset, opts: BuildOptions, graph: Graph, init: dict):
    """Camera prior, odometry and static-point measurements shared by all formulations."""
    nz = opts.noise
    prior = NoiseModel.isotropic(6, nz.prior)
    odom = NoiseModel.twist(*nz.odometry)
    meas = NoiseModel.isotropic(3, nz.point)
    for k in d.steps:
        init[CameraPose(k)] = d.cam_init[k]
    graph.add(PosePrior(CameraPose(0), d.cam_init[0], prior))
    for k in sorted(d.odometry):
        graph.add(OdometryFactor(CameraPose(k - 1), CameraPose(k), d.odometry[k], odom))
    for (i, k) in sorted(d.static_meas):
        z = d.static_meas[(i, k)]
        key = StaticPoint(i)
        if key not in init:
            init[key] = d.cam_init[k].act(z)
        graph.add(PointMeasurementFactor(CameraPose(k), key, z, meas))


def _motion_steps(d: SceneDataset, j: int) -> list[int]:
    """Steps k with a motion variable (k-1 -> k) for object j."""
    tracks = d.object_tracks(j)
    out = []
    for k in sorted(tracks):
        if k - 1 in tracks and set(tracks[k]) & set(tracks[k - 1]):
            out.append(k)
    return out


def _motion_init(d: SceneDataset, j: int, k: int) -> Pose:
    try:
        return d.motion_init[(j, k)]
    except KeyError:
        raise DatasetError(f"no initial motion for object {j} at step {k}") from None


def _add_motions(d, opts, graph, init):
    smooth = NoiseModel.twist(*opts.noise.smoothing)
    for j in d.objects:
        steps = _motion_steps(d, j)
        for k in steps:
            init[ObjectMotion(j, k)] = _motion_init(d, j, k)
        for k in steps:
            if k - 1 in steps:
                graph.add(SmoothingFactor(ObjectMotion(j, k - 1), ObjectMotion(j, k), smooth))


def _manifest(problem: BuiltProblem, single: list[int]) -> None:
    problem.manifest.update(
        formulation=problem.formulation.value,
        variables=problem.initial.counts(),
        num_variables=len(problem.initial),
        tangent_dim=problem.initial.dim,
        factors=dict(sorted(Counter(type(f).__name__ for f in problem.graph).items())),
        num_factors=len(problem.graph),
        single_observation_tracklets=single,
    )


def build_world_centric(d: SceneDataset, opts: BuildOptions = BuildOptions()) -> BuiltProblem:
    _check(d)
    graph, init = Graph(), {}
    _common(d, opts, graph, init)
    meas = NoiseModel.isotropic(3, opts.noise.point)
    ternary = NoiseModel.isotropic(3, opts.noise.motion)
    for (i, k) in sorted(d.dynamic_meas):
        z = d.dynamic_meas[(i, k)]
        key = DynamicPointWorld(i, k)
        init[key] = d.cam_init[k].act(z)
        graph.add(PointMeasurementFactor(CameraPose(k), key, z, meas))
    _add_motions(d, opts, graph, init)
    single = []
    for i in d.dynamic_tracklets():
        j = d.tracklet_object[i]
        steps = d.tracklet_steps(i)
        if len(steps) == 1:
            single.append(i)
        for k in steps:
            if k - 1 in steps:
                graph.add(WorldMotionFactor(DynamicPointWorld(i, k), DynamicPointWorld(i, k - 1),
                                            ObjectMotion(j, k), ternary))
    problem = BuiltProblem(Formulation.WORLD_CENTRIC, graph, Values(init))
    _manifest(problem, single)
    return problem


def build_object_centric(
    d: SceneDataset,
    variant: Formulation = Formulation.OBJECT_CENTRIC_BASE,
    opts: BuildOptions = BuildOptions(),
) -> BuiltProblem:
    variant = Formulation(variant)
    if not variant.object_centric:
        raise ValueError(f"{variant.value} is not an object-centric formulation")
    _check(d)
    if opts.object_prior not in ("centroid", "ground_truth"):
        raise ValueError(f"object_prior must be centroid or ground_truth, got {opts.object_prior!r}")
    use_motion = variant in (Formulation.OBJECT_CENTRIC_BASE, Formulation.OBJECT_CENTRIC_WITH_OKF)
    use_okf = variant in (Formulation.OBJECT_CENTRIC_WITH_OKF, Formulation.OBJECT_CENTRIC_ONLY_OKF)
    nz = opts.noise
    graph, init = Graph(), {}
    _common(d, opts, graph, init)
    meas = NoiseModel.isotropic(3, nz.point)
    oc_motion = NoiseModel.isotropic(3, nz.object_motion)
    okf = NoiseModel.twist(*nz.kinematic)
    prior = NoiseModel.isotropic(6, nz.prior)

    single = []
    for j in d.objects:
        tracks = d.object_tracks(j)
        gaps = sorted(set(range(min(tracks), max(tracks) + 1)) - set(tracks))
        if gaps:
            raise DatasetError(f"object {j} has no points at step(s) {gaps} inside its trajectory")
        for k in sorted(tracks):
            world = [d.cam_init[k].act(d.dynamic_meas[(i, k)]) for i in tracks[k]]
            init[ObjectPose(j, k)] = centroid_init(world)
        k0 = min(tracks)
        if opts.object_prior == "ground_truth":
            if (j, k0) not in d.gt_obj:
                raise DatasetError(f"ground-truth pose of object {j} at step {k0} not in dataset")
            anchor = d.gt_obj[(j, k0)]
            # The prior fixes the object frame; "identity rotation" is taken relative
            # to it so the initial trajectory does not jump by the anchor rotation.
            for k in tracks:
                init[ObjectPose(j, k)] = Pose(anchor.R, init[ObjectPose(j, k)].t)
            init[ObjectPose(j, k0)] = anchor
        if opts.object_priors:
            graph.add(PosePrior(ObjectPose(j, k0), init[ObjectPose(j, k0)], prior))

    for (i, k) in sorted(d.dynamic_meas):
        j = d.tracklet_object[i]
        z = d.dynamic_meas[(i, k)]
        key = DynamicPointLocal(i, j)
        if key not in init:
            # first observation: m_L = L_k^-1 X_k z
            init[key] = init[ObjectPose(j, k)].inverse().act(d.cam_init[k].act(z))
        graph.add(ObjectPointMeasurementFactor(CameraPose(k), ObjectPose(j, k), key, z, meas))

    _add_motions(d, opts, graph, init)
    for i in d.dynamic_tracklets():
        j = d.tracklet_object[i]
        steps = d.tracklet_steps(i)
        if len(steps) == 1:
            single.append(i)
        if not use_motion:
            continue
        for k in steps:
            if k - 1 in steps:
                graph.add(ObjectCentricMotionFactor(ObjectPose(j, k), ObjectPose(j, k - 1),
                                                    ObjectMotion(j, k), DynamicPointLocal(i, j), oc_motion))
    if use_okf:
        for j in d.objects:
            for k in _motion_steps(d, j):
                graph.add(ObjectKinematicFactor(ObjectPose(j, k), ObjectPose(j, k - 1), ObjectMotion(j, k), okf))

    problem = BuiltProblem(variant, graph, Values(init))
    _manifest(problem, single)
    problem.manifest["object_prior"] = opts.object_prior if opts.object_priors else "none"
    return problem


def build(d: SceneDataset, formulation: Formulation | str, opts: BuildOptions = BuildOptions()) -> BuiltProblem:
    formulation = Formulation(formulation)
    if formulation is Formulation.WORLD_CENTRIC:
        return build_world_centric(d, opts)
    return build_object_centric(d, formulation, opts)


def ground_truth_values(d: SceneDataset, problem: BuiltProblem) -> Values:
    """Ground-truth assignment for every variable of ``problem``.

    Object-frame points come from the ground-truth object pose at the
    tracklet's first observation.
    """
    out = {}
    for key in problem.initial:
        kind = key.kind.name
        if kind == "CAMERA_POSE":
            out[key] = d.gt_cam[key.a]
        elif kind == "OBJECT_MOTION":
            out[key] = d.gt_motion[(key.a, key.b)]
        elif kind == "OBJECT_POSE":
            out[key] = d.gt_obj[(key.a, key.b)]
        elif kind == "STATIC_POINT":
            out[key] = d.gt_point[(key.a, 0)]
        elif kind == "DYNAMIC_POINT_WORLD":
            out[key] = d.gt_point[(key.a, key.b)]
        else:
            i, j = key.a, key.b
            k0 = d.tracklet_steps(i)[0]
            out[key] = d.gt_obj[(j, k0)].inverse().act(d.gt_point[(i, k0)])
    return Values(out)
