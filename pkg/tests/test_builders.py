from __future__ import annotations

import numpy as np
import pytest

from dynslam.builders import (
    BuildOptions,
    DatasetError,
    Formulation,
    build,
    build_object_centric,
    build_world_centric,
    centroid_init,
    ground_truth_values,
)
from dynslam.dataset import SceneDataset
from dynslam.graph import CameraPose, ObjectPose
from dynslam.se3 import Pose

from .conftest import trans


def hand_scene(steps=3, static=3, dynamic=1, dynamic_steps=None) -> SceneDataset:
    """Tiny hand-written dataset: camera moving along x, one object moving along y."""
    d = SceneDataset(name="hand")
    for k in range(steps):
        d.cam_init[k] = trans(k, 0, 0)
        if k:
            d.odometry[k] = trans(1, 0, 0)
            d.motion_init[(1, k)] = trans(0, 1, 0)
        for i in range(static):
            d.static_meas[(i, k)] = np.array([i + 2.0 - k, 1.0, 0.5])
    for n in range(dynamic):
        i = static + n
        d.tracklet_object[i] = 1
        for k in (dynamic_steps or range(steps)):
            d.dynamic_meas[(i, k)] = np.array([3.0 + n - k, 2.0 + k, 0.0])
    return d


def counts(problem):
    return problem.initial.counts(), problem.graph.counts()


def test_world_centric_fig2_topology():
    keys, factors = counts(build_world_centric(hand_scene()))
    assert keys["CAMERA_POSE"] == 3 and keys["STATIC_POINT"] == 3
    assert keys["DYNAMIC_POINT_WORLD"] == 3 and keys["OBJECT_MOTION"] == 2
    assert factors == {
        "PosePrior": 1,
        "OdometryFactor": 2,
        "PointMeasurementFactor": 12,  # 9 static + 3 dynamic
        "WorldMotionFactor": 2,
        "SmoothingFactor": 1,
    }


def test_world_centric_two_step_single_point():
    keys, factors = counts(build_world_centric(hand_scene(steps=2, static=0)))
    assert keys["CAMERA_POSE"] == 2 and keys["DYNAMIC_POINT_WORLD"] == 2 and keys["OBJECT_MOTION"] == 1
    assert factors["WorldMotionFactor"] == 1 and "SmoothingFactor" not in factors


def test_single_time_step_is_rejected():
    with pytest.raises(DatasetError):
        build_world_centric(hand_scene(steps=1))
    with pytest.raises(DatasetError):
        build_object_centric(hand_scene(steps=1), Formulation.OBJECT_CENTRIC_BASE)


def test_object_centric_fig3_variants():
    d = hand_scene()
    keys, base = counts(build(d, "oc-base"))
    assert keys["CAMERA_POSE"] == 3 and keys["STATIC_POINT"] == 3
    assert keys["DYNAMIC_POINT_LOCAL"] == 1 and keys["OBJECT_POSE"] == 3 and keys["OBJECT_MOTION"] == 2
    assert base == {
        "PosePrior": 2,  # camera + first object pose
        "OdometryFactor": 2,
        "PointMeasurementFactor": 9,
        "ObjectPointMeasurementFactor": 3,
        "ObjectCentricMotionFactor": 2,
        "SmoothingFactor": 1,
    }
    _, okf = counts(build(d, "oc-okf"))
    assert okf == {**base, "ObjectKinematicFactor": 2}
    _, only = counts(build(d, "oc-only-okf"))
    assert only.get("ObjectCentricMotionFactor", 0) == 0 and only["ObjectKinematicFactor"] == 2


def test_shared_subgraphs_identical(noisy_scene):
    def shared(p):
        return [(type(f).__name__, f.keys, repr(f)) for f in p.graph
                if type(f).__name__ in ("OdometryFactor", "PointMeasurementFactor") and
                f.keys[1].kind.name == "STATIC_POINT" or type(f).__name__ == "OdometryFactor"]
    ref = shared(build(noisy_scene, "world"))
    for f in list(Formulation)[1:]:
        assert shared(build(noisy_scene, f)) == ref


def test_variable_count_contrast(noisy_scene):
    d = noisy_scene
    wc = build(d, "world").manifest
    oc = build(d, "oc-base").manifest
    assert wc["variables"]["DYNAMIC_POINT_WORLD"] == len(d.dynamic_meas)
    assert oc["variables"]["DYNAMIC_POINT_LOCAL"] == len(d.dynamic_tracklets())
    for m in (wc, oc):
        assert m["num_variables"] == sum(m["variables"].values())
        assert m["num_factors"] == sum(m["factors"].values())


def test_every_factor_key_is_initialized(small_noisy_scene):
    for f in Formulation:
        p = build(small_noisy_scene, f)
        assert p.graph.keys() <= set(p.initial)


def test_single_observation_tracklet_flagged():
    d = hand_scene(dynamic=2, dynamic_steps=None)
    # second dynamic tracklet only at k=1
    for k in (0, 2):
        del d.dynamic_meas[(4, k)]
    wc = build_world_centric(d)
    assert wc.manifest["single_observation_tracklets"] == [4]
    assert wc.graph.counts()["WorldMotionFactor"] == 2
    oc = build(d, "oc-base")
    assert oc.manifest["single_observation_tracklets"] == [4]
    assert oc.initial.counts()["OBJECT_POSE"] == 3


def test_gap_in_tracklet_only_links_consecutive_pairs():
    d = hand_scene(steps=4, dynamic=2)
    del d.dynamic_meas[(3, 2)]
    wc = build_world_centric(d)
    # tracklet 3 links (0,1) only since (1,3) is not consecutive; tracklet 4 links all three pairs
    assert wc.graph.counts()["WorldMotionFactor"] == 4
    assert wc.initial.counts()["OBJECT_MOTION"] == 3
    oc = build(d, "oc-base")
    assert oc.graph.counts()["ObjectCentricMotionFactor"] == 4


def test_object_without_points_at_a_step_is_a_dataset_error():
    d = hand_scene(steps=3)
    del d.dynamic_meas[(3, 1)]
    with pytest.raises(DatasetError):
        build(d, "oc-base")


# -- initialization -------------------------------------------------------------------

def test_centroid_examples():
    assert centroid_init([(1, 1, 1), (3, 1, 1)]).allclose(trans(2, 1, 1), 1e-15)
    assert centroid_init([(0, 0, 0)]).allclose(Pose.identity(), 0)
    assert centroid_init([(1, 0, 0), (-1, 0, 0), (0, 3, 0), (0, -3, 0)]).allclose(Pose.identity(), 0)
    with pytest.raises(DatasetError):
        centroid_init([])


def test_object_pose_initialization(small_noisy_scene):
    d = small_noisy_scene
    p = build(d, "oc-base")
    for k in d.steps:
        pts = [d.cam_init[k] @ d.dynamic_meas[(i, k)] for i in d.object_tracks(1)[k]]
        L = p.initial[ObjectPose(1, k)]
        np.testing.assert_allclose(L.t, np.mean(pts, axis=0), atol=1e-12)
        np.testing.assert_array_equal(L.R, np.eye(3))


def test_ground_truth_prior_anchors_first_pose(small_noisy_scene):
    d = small_noisy_scene
    p = build(d, "oc-base", BuildOptions(object_prior="ground_truth"))
    assert p.initial[ObjectPose(1, 0)].allclose(d.gt_obj[(1, 0)], 0)
    # later poses: centroid translation, rotation of the anchored frame
    np.testing.assert_allclose(p.initial[ObjectPose(1, 2)].R, d.gt_obj[(1, 0)].R)


def test_camera_prior_identical_across_formulations(small_noisy_scene):
    priors = []
    for f in Formulation:
        p = build(small_noisy_scene, f)
        cam = [g for g in p.graph if type(g).__name__ == "PosePrior" and g.keys[0] == CameraPose(0)]
        assert len(cam) == 1
        priors.append(repr(cam[0]))
    assert len(set(priors)) == 1


def test_no_object_priors_option(small_noisy_scene):
    p = build(small_noisy_scene, "oc-okf", BuildOptions(object_priors=False))
    assert p.graph.counts()["PosePrior"] == 1
    assert p.manifest["object_prior"] == "none"


def test_ground_truth_values_cover_problem(small_noisy_scene):
    p = build(small_noisy_scene, "world")
    gt = ground_truth_values(small_noisy_scene, p)
    assert set(gt) == set(p.initial)
