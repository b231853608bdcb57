from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynslam import dataset as dio
from dynslam.dataset import DatasetFormatError
from dynslam.graph import CameraPose, Values
from dynslam.results import (
    ESTIMATES_HEADER,
    compute_metrics,
    metrics_to_text,
    parse_estimates,
    parse_metrics,
    serialize_estimates,
    write_results,
)
from dynslam.se3 import Pose
from dynslam.simulator import NoiseSpec, SceneConfig, generate

from .conftest import toy_config


@pytest.fixture(scope="module")
def text():
    return dio.serialize(generate(SceneConfig(seed=21)))


def test_identity_camera_record():
    d = dio.parse("CAM_INIT 0 0 0 0 0 0 0 1\n")
    assert d.cam_init[0].allclose(Pose.identity(), 0)


def test_dynamic_measurement_record():
    d = dio.parse("CAM_INIT 0 0 0 0 0 0 0 1\nDYN_MEAS 7 2 3 1.0 2.0 3.0\n")
    assert d.tracklet_object[7] == 2
    np.testing.assert_array_equal(d.dynamic_meas[(7, 3)], [1, 2, 3])


def test_round_trip_is_byte_identical(text):
    once = dio.serialize(dio.parse(text))
    assert once == text
    assert dio.serialize(dio.parse(once)) == once


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=5, deadline=None)
def test_round_trip_any_seed(seed):
    d = generate(toy_config(steps=3, noise=NoiseSpec(), seed=seed))
    t = dio.serialize(d)
    assert dio.serialize(dio.parse(t)) == t


def test_parse_is_order_insensitive(text):
    header, *body = text.splitlines()
    rng = np.random.default_rng(0)
    shuffled = "\n".join([header, *rng.permutation(body)]) + "\n"
    assert dio.serialize(dio.parse(shuffled)) == text


def test_records_sorted_by_tag_then_index(text):
    recs = [line.split() for line in text.splitlines()[1:]]
    keys = [(r[0], tuple(int(x) for x in r[1:4] if x.lstrip("-").isdigit())) for r in recs]
    assert [k[0] for k in keys] == sorted(k[0] for k in keys)


def _mutations(text):
    lines = text.splitlines()
    seen = set()
    for n, line in enumerate(lines):
        tag = line.split()[0]
        if line.startswith("#") or tag in seen:
            continue
        seen.add(tag)
        yield tag, n + 1, lines[:n] + [line + " 0.5"] + lines[n + 1:]
        yield tag, n + 1, lines[:n] + [line.rsplit(" ", 1)[0]] + lines[n + 1:]


def test_every_record_type_rejects_mutated_arity(text):
    tags = set()
    for tag, lineno, lines in _mutations(text):
        tags.add(tag)
        with pytest.raises(DatasetFormatError) as exc:
            dio.parse("\n".join(lines))
        assert exc.value.line == lineno
        assert f"line {lineno}" in str(exc.value)
    assert tags == set(dio._GRAMMAR)


@pytest.mark.parametrize("bad, match", [
    ("FOO 1 2 3", "unknown tag"),
    ("CAM_INIT 1 0 0 0 0 0 0 1.1", "quaternion"),
    ("CAM_INIT x 0 0 0 0 0 0 1", "CAM_INIT"),
    ("CAM_INIT -1 0 0 0 0 0 0 1", "negative"),
    ("STATIC_MEAS 0 0 nan 0 0", "non-finite"),
    ("ODOM 0 2 0 0 0 0 0 0 1", "k_prev"),
])
def test_malformed_lines(bad, match):
    with pytest.raises(DatasetFormatError, match=match) as exc:
        dio.parse("CAM_INIT 0 0 0 0 0 0 0 1\n# comment\n" + bad + "\n")
    assert exc.value.line == 3


def test_duplicate_key_reports_both_lines():
    src = "CAM_INIT 0 0 0 0 0 0 0 1\nCAM_INIT 0 1 0 0 0 0 0 1\n"
    with pytest.raises(DatasetFormatError, match="first on line 1") as exc:
        dio.parse(src)
    assert exc.value.line == 2


def test_tracklet_may_not_change_object():
    src = "CAM_INIT 0 0 0 0 0 0 0 1\nCAM_INIT 1 0 0 0 0 0 0 1\nDYN_MEAS 4 1 0 1 1 1\nDYN_MEAS 4 2 1 1 1 1\n"
    with pytest.raises(DatasetFormatError, match="tracklet 4") as exc:
        dio.parse(src)
    assert exc.value.line == 4


def test_quaternion_slightly_off_unit_is_accepted():
    q = np.array([0, 0, 0, 1 + 5e-7])
    d = dio.parse("CAM_INIT 0 0 0 0 " + " ".join(map(str, q)) + "\n")
    np.testing.assert_allclose(d.cam_init[0].R, np.eye(3), atol=1e-12)


def test_load_save(tmp_path):
    d = generate(toy_config())
    dio.save(d, tmp_path / "scene.txt")
    back = dio.load(tmp_path / "scene.txt")
    assert back.name == "scene" and back.digest() == d.digest()


# -- result files ------------------------------------------------------------------

def test_empty_estimates_is_header_only():
    assert serialize_estimates(Values()) == ESTIMATES_HEADER + "\n"


def test_estimates_round_trip(small_noisy_scene):
    from dynslam.builders import build

    for f in ("world", "oc-base"):
        v = build(small_noisy_scene, f).initial
        back = parse_estimates(serialize_estimates(v))
        assert set(back) == set(v)
        for k in v:
            if k.kind == CameraPose(0).kind:
                assert np.abs(back[k].matrix() - v[k].matrix()).max() <= 1e-15
            elif k.is_pose:
                assert back[k].allclose(v[k], 1e-15)
            else:
                np.testing.assert_array_equal(back[k], v[k])


def test_metrics_rows_per_sequence_object(noisy_scene):
    from dynslam.builders import build, ground_truth_values

    p = build(noisy_scene, "oc-base")
    m = compute_metrics(ground_truth_values(noisy_scene, p), noisy_scene)
    text = metrics_to_text(m)
    motion = [line for line in text.splitlines() if line.startswith("MOTION ")]
    assert [line.split()[1] for line in motion] == [f"label=noisy|{j}" for j in (1, 2, 3)]
    assert parse_metrics(text) == m


def test_write_results_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match=str(blocker)):
        write_results(blocker / "sub", estimates=Values())
