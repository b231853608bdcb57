from __future__ import annotations

import numpy as np
import pytest

from dynslam.se3 import Pose
from dynslam.simulator import NoiseSpec, ObjectSpec, SceneConfig, generate


def rz(deg: float) -> Pose:
    return Pose.rot_z(np.radians(deg))


def trans(x, y, z) -> Pose:
    return Pose.from_translation(x, y, z)


def toy_config(steps=2, noise=None, seed=3, points=6, static=10) -> SceneConfig:
    """Small scene: one object, a handful of points, everything in view."""
    obj = ObjectSpec(Pose(Pose.rot_z(0.4).R, [5.0, 2.0, 0.0]), [0.0, 0.0, 0.05, 0.7, 0.0, 0.0],
                     num_points=points, radius=1.0)
    return SceneConfig(steps=steps, objects=[obj], static_points=static,
                       static_volume=((0.0, 10.0), (-5.0, 5.0), (-1.0, 2.0)),
                       noise=noise if noise is not None else NoiseSpec.zero(), seed=seed, name="toy")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def zero_noise_scene():
    return generate(SceneConfig(noise=NoiseSpec.zero(), seed=7, name="clean"))


@pytest.fixture(scope="session")
def noisy_scene():
    return generate(SceneConfig(seed=11, name="noisy"))


@pytest.fixture(scope="session")
def small_noisy_scene():
    return generate(toy_config(steps=5, noise=NoiseSpec(), seed=4, points=8, static=20))


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(test_acceptance.RESULTS):
        ok, detail = test_acceptance.RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
