from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynslam.builders import build, ground_truth_values
from dynslam.evaluation import (
    EvaluationError,
    camera_rpe,
    object_motion_rpe,
    object_pose_rpe,
    propagate_object_trajectory,
    propagate_objects,
    rpe,
    win_fractions,
)
from dynslam.results import compute_metrics, metrics_tables
from dynslam.se3 import Pose, random_pose

from .conftest import rz, trans

I = Pose.identity()


def test_rpe_examples():
    s = rpe(I, I)
    assert (s.E_t, s.E_r) == (0.0, 0.0)
    s = rpe(I, trans(3, 4, 0))
    assert s.E_t == pytest.approx(5.0) and s.E_r == 0.0
    s = rpe(rz(90), I)
    assert s.E_r == pytest.approx(90.0, rel=1e-12) and s.E_t == 0.0


@given(st.floats(1e-3, np.pi - 1e-3))
@settings(max_examples=50, deadline=None)
def test_rpe_degrees(theta):
    assert rpe(Pose.rot_z(theta), I).E_r == pytest.approx(np.degrees(theta), rel=1e-9)


def test_rpe_symmetry(rng):
    for _ in range(50):
        A, B = random_pose(rng), random_pose(rng)
        assert rpe(A, B).E_r == pytest.approx(rpe(B, A).E_r, abs=1e-9)
        T = trans(*rng.normal(size=3))
        assert rpe(A, A @ T).E_t == pytest.approx(rpe(A @ T, A).E_t, rel=1e-12)


def test_rpe_bounds(rng):
    for _ in range(100):
        s = rpe(random_pose(rng), random_pose(rng))
        assert s.E_t >= 0 and 0 <= s.E_r <= 180


# -- camera ---------------------------------------------------------------------------

def test_camera_rpe_identical_trajectory(rng):
    traj = {k: random_pose(rng) for k in range(5)}
    r = camera_rpe(traj, traj)
    assert len(r) == 4 and r.mean_t == 0.0 and r.mean_r == 0.0


def test_camera_rpe_constant_forward_bias():
    gt = {k: trans(k, 0, 0) for k in range(6)}
    est = {k: trans(1.1 * k, 0, 0) for k in range(6)}
    assert camera_rpe(est, gt).mean_t == pytest.approx(0.1)


def test_camera_rpe_pair_count_and_mismatch():
    gt = {k: trans(k, 0, 0) for k in range(3)}
    assert len(camera_rpe(gt, gt)) == 2
    with pytest.raises(EvaluationError):
        camera_rpe({0: I, 1: I}, gt)
    with pytest.raises(EvaluationError):
        camera_rpe({0: I}, {0: I})


# -- motion ---------------------------------------------------------------------------

def test_motion_rpe_examples(rng):
    gt = {(1, k): random_pose(rng) for k in range(1, 5)}
    assert object_motion_rpe(gt, gt).mean_t == 0.0
    est = {jk: H @ trans(0.1, 0, 0) for jk, H in gt.items()}
    assert object_motion_rpe(est, gt).per_object[1].mean_t == pytest.approx(0.1)


def test_motion_sequence_mean_is_mean_of_objects():
    gt = {(1, 1): I, (1, 2): I, (2, 1): I}
    est = {(1, 1): trans(0.2, 0, 0), (1, 2): trans(0.2, 0, 0), (2, 1): trans(0, 0.4, 0)}
    assert object_motion_rpe(est, gt).mean_t == pytest.approx(0.3)


def test_missing_motion_is_reported():
    with pytest.raises(EvaluationError, match=r"\(1, 2\)"):
        object_motion_rpe({(1, 1): I}, {(1, 1): I, (1, 2): I})


# -- propagation ----------------------------------------------------------------------

def test_propagate_examples(rng):
    start = random_pose(rng)
    assert all(p.allclose(start, 1e-15) for p in propagate_object_trajectory(start, [I, I, I]))
    out = propagate_object_trajectory(I, [trans(1, 0, 0), trans(1, 0, 0)])
    np.testing.assert_allclose([p.t for p in out], [[1, 0, 0], [2, 0, 0]])


def test_propagate_ground_truth(noisy_scene):
    d = noisy_scene
    for j in d.objects:
        motions = [d.gt_motion[(j, k)] for k in range(1, d.num_steps)]
        poses = propagate_object_trajectory(d.gt_obj[(j, 0)], motions)
        for k, L in enumerate(poses, start=1):
            assert np.abs(L.matrix() - d.gt_obj[(j, k)].matrix()).max() < 1e-9


def test_propagated_pose_rpe_is_zero(noisy_scene):
    d = noisy_scene
    starts = {j: (0, d.gt_obj[(j, 0)]) for j in d.objects}
    poses = propagate_objects(d.gt_motion, starts)
    r = object_pose_rpe(poses, d.gt_obj, propagated=True)
    assert r.propagated and r.mean_t < 1e-9 and r.mean_r < 1e-6


def test_single_step_object_is_untracked():
    r = object_pose_rpe({(4, 3): I}, {(4, 3): I})
    assert r.untracked == [4] and len(r.per_object[4]) == 0


# -- metrics and tables ---------------------------------------------------------------

def test_ground_truth_estimates_give_zero_tables(noisy_scene):
    p = build(noisy_scene, "world")
    m = compute_metrics(ground_truth_values(noisy_scene, p), noisy_scene)
    assert m.propagated
    for row in [m.camera, m.motion_mean, m.pose_mean, *m.motion, *m.pose]:
        assert row[2] < 1e-6 and row[3] < 1e-9
    table = metrics_tables(m)
    assert "propagated" in table and "noisy|1" in table


def test_object_centric_metrics_not_propagated(noisy_scene):
    p = build(noisy_scene, "oc-okf")
    m = compute_metrics(ground_truth_values(noisy_scene, p), noisy_scene)
    assert not m.propagated


# -- win fractions --------------------------------------------------------------------

def test_win_fraction_ties_split():
    a = {1: 0.1, 2: 0.2, 3: 0.3}
    assert win_fractions(a, a) == (0.5, 0.5)
    w, l = win_fractions(a, {1: 0.2, 2: 0.1, 3: 0.3})
    assert w == pytest.approx(0.5) and w + l == 1.0
    assert win_fractions({1: 0.0}, {1: 1.0}) == (1.0, 0.0)
