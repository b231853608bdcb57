from __future__ import annotations

import json
from pathlib import Path

import pytest

from dynslam import dataset as dio
from dynslam.builders import build, ground_truth_values
from dynslam.cli import EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION, main
from dynslam.experiment import ConfigError, ExperimentSpec, parse_scene_config
from dynslam.results import serialize_estimates

SMALL = """\
# a quick scene
steps = 4
static_points = 25
objects = 2
object.0.num_points = 6
object.1.num_points = 6
"""

CLEAN = SMALL + """
noise.measurement = 0
noise.odometry_rot = 0
noise.odometry_trans = 0
noise.motion_init_rot = 0
noise.motion_init_trans = 0
"""


@pytest.fixture
def small(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    data = tmp_path / "small.txt"
    assert main(["generate", "--config", str(cfg), "--out", str(data), "--seed", "3"]) == EXIT_OK
    return data


@pytest.fixture
def solved(small, tmp_path):
    out = tmp_path / "res"
    assert main(["solve", "--dataset", str(small), "--formulation", "all", "--out", str(out)]) == EXIT_OK
    return small, out


def test_generate_default_has_20_cameras(tmp_path, capsys):
    out = tmp_path / "d.txt"
    assert main(["generate", "--out", str(out)]) == EXIT_OK
    assert sum(line.startswith("CAM_INIT ") for line in out.read_text().splitlines()) == 20
    assert "20 steps" in capsys.readouterr().out


def test_generate_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for p in (a, b):
        main(["generate", "--out", str(p), "--seed", "8"])
    assert a.read_bytes() == b.read_bytes()


def test_generate_rejects_single_step(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("steps = 1\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "x.txt")]) == EXIT_VALIDATION
    assert "steps" in capsys.readouterr().err


def test_config_parser():
    c = parse_scene_config(SMALL + "object.1.initial_pose = 1 2 3 0 0 0 1\nobject.1.twist = 0 0 0.1 1 0 0\n"
                           "noise.measurement = 0.01\ncamera_path = arc\n")
    assert c.steps == 4 and len(c.objects) == 2 and c.noise.measurement == 0.01
    assert list(c.objects[1].initial_pose.t) == [1, 2, 3] and c.camera_path == "arc"
    for bad, field in [("bogus = 1", "bogus"), ("noise.nope = 1", "noise.nope"),
                       ("object.5.radius = 1", "object.5"), ("object.0.twist = 1 2", "object.0.twist"),
                       ("noise.measurement = -1", "noise.measurement"), ("steps 3", "line 1")]:
        with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
            parse_scene_config(bad)


def test_solve_all_writes_four_directories(solved):
    data, out = solved
    dirs = sorted(p.name for p in out.iterdir())
    assert dirs == ["oc-base", "oc-okf", "oc-only-okf", "world"]
    digests = set()
    for name in dirs:
        files = {p.name for p in (out / name).iterdir()}
        assert {"estimates.txt", "trace.csv", "manifest.json", "experiment.json"} <= files
        m = json.loads((out / name / "manifest.json").read_text())
        digests.add(m["dataset_sha256"])
        assert m["num_variables"] == sum(m["variables"].values())
        assert m["solver"]["wall_time"] > 0
    assert len(digests) == 1


def test_manifest_counts_follow_counting_rules(solved):
    data, out = solved
    d = dio.load(data)
    wc = json.loads((out / "world" / "manifest.json").read_text())
    oc = json.loads((out / "oc-base" / "manifest.json").read_text())
    assert wc["variables"]["DYNAMIC_POINT_WORLD"] == len(d.dynamic_meas)
    assert oc["variables"]["DYNAMIC_POINT_LOCAL"] == len(d.dynamic_tracklets())
    assert oc["variables"]["OBJECT_POSE"] == len(d.objects) * d.num_steps


def test_zero_noise_world_solve(tmp_path):
    cfg = tmp_path / "clean.cfg"
    cfg.write_text(CLEAN)
    out = tmp_path / "clean"
    assert main(["solve", "--config", str(cfg), "--formulation", "world", "--out", str(out)]) == EXIT_OK
    m = json.loads((out / "world" / "manifest.json").read_text())
    assert m["solver"]["final_chi2"] < 1e-10


def test_eval_ground_truth_estimates_is_zero(small, tmp_path, capsys):
    d = dio.load(small)
    p = build(d, "oc-base")
    est = tmp_path / "gt_est"
    est.mkdir()
    (est / "estimates.txt").write_text(serialize_estimates(ground_truth_values(d, p)))
    assert main(["eval", "--estimates", str(est), "--dataset", str(small)]) == EXIT_OK
    for line in (est / "metrics.txt").read_text().splitlines()[2:]:
        kv = dict(f.split("=", 1) for f in line.split()[1:])
        assert float(kv["E_t_m"]) < 1e-9 and float(kv["E_r_deg"]) < 1e-5
    assert "small|1" in capsys.readouterr().out


def test_eval_world_marks_propagated(solved):
    data, out = solved
    assert main(["eval", "--estimates", str(out / "world"), "--dataset", str(data)]) == EXIT_OK
    pose_rows = [line for line in (out / "world" / "metrics.txt").read_text().splitlines()
                 if line.startswith("POSE")]
    assert pose_rows and all("propagated=1" in line for line in pose_rows)
    assert "propagated" in (out / "world" / "tables.txt").read_text()


def test_eval_without_ground_truth(small, tmp_path, capsys):
    stripped = tmp_path / "nogt.txt"
    stripped.write_text("".join(line for line in small.read_text().splitlines(True) if not line.startswith("GT_")))
    assert main(["eval", "--estimates", str(tmp_path), "--dataset", str(stripped)]) == EXIT_VALIDATION
    assert "ground-truth" in capsys.readouterr().err


def test_compare_with_itself(solved, capsys):
    _, out = solved
    capsys.readouterr()
    assert main(["compare", str(out / "world"), str(out / "world")]) == EXIT_OK
    report = capsys.readouterr().out
    for line in report.splitlines():
        if line.startswith("world ") and "camera" in line or "obj_" in line:
            assert line.split()[-2:] == ["+0.0000", "+0.0000"]
        if line.startswith("  world "):
            assert line.split()[1:] == ["world=0.50", "world=0.50"]


def test_compare_four_formulations(solved, capsys):
    _, out = solved
    dirs = [str(out / f) for f in ("world", "oc-base", "oc-okf", "oc-only-okf")]
    capsys.readouterr()
    assert main(["compare", *dirs]) == EXIT_OK
    report = capsys.readouterr().out
    for f in ("world", "oc-base", "oc-okf", "oc-only-okf"):
        for metric in ("camera", "obj_motion", "obj_pose"):
            assert sum(1 for line in report.splitlines() if line.split()[:2] == [f, metric]) == 1
    assert "sign_flips" in report and "rejected" in report


def test_compare_rejects_different_datasets(solved, tmp_path, capsys):
    data, out = solved
    other = tmp_path / "other"
    main(["generate", "--out", str(tmp_path / "o.txt"), "--config", str(tmp_path / "small.cfg"), "--seed", "4"])
    main(["solve", "--dataset", str(tmp_path / "o.txt"), "--formulation", "world", "--out", str(other)])
    assert main(["compare", str(out / "world"), str(other / "world")]) == EXIT_VALIDATION
    assert "dataset_sha256" in capsys.readouterr().err


def test_indeterminate_exit_code(small, tmp_path, capsys):
    code = main(["solve", "--dataset", str(small), "--formulation", "oc-base", "--no-object-priors",
                 "--out", str(tmp_path / "r")])
    assert code == EXIT_SOLVER
    assert "prior on the first pose" in capsys.readouterr().err


def test_solver_overrides_and_bad_values(small, tmp_path):
    out = tmp_path / "r"
    assert main(["solve", "--dataset", str(small), "--formulation", "world", "--max-iters", "1",
                 "--lambda-init", "0.1", "--out", str(out)]) == EXIT_OK
    m = json.loads((out / "world" / "manifest.json").read_text())
    assert m["solver_config"]["lambda_init"] == 0.1 and m["solver"]["iterations"] <= 1
    assert main(["solve", "--dataset", str(small), "--lambda-init", "-1", "--out", str(out)]) == EXIT_VALIDATION
    assert main(["solve", "--dataset", str(tmp_path / "missing.txt"), "--out", str(out)]) == EXIT_VALIDATION


def test_saved_spec_reruns_identically(small, tmp_path):
    a = tmp_path / "a"
    assert main(["solve", "--dataset", str(small), "--formulation", "oc-okf", "--out", str(a),
                 "--perturb-pose", "0.01", "0.05", "--seed", "2"]) == EXIT_OK
    spec = ExperimentSpec.from_json((a / "oc-okf" / "experiment.json").read_text())
    assert spec.perturb_pose == (0.01, 0.05) and spec.seed == 2
    b = tmp_path / "b"
    assert main(["solve", "--spec", str(a / "oc-okf" / "experiment.json"), "--out", str(b)]) == EXIT_OK
    for name in ("estimates.txt", "metrics.txt"):
        assert (a / "oc-okf" / name).read_bytes() == (b / "oc-okf" / name).read_bytes()


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "dynslam", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "generate" in r.stdout
