"""Scene datasets and the tagged text graph-file format.

One record per line, whitespace separated, ``#`` starts a comment::

    CAM_INIT k tx ty tz qx qy qz qw
    ODOM k_prev k tx ty tz qx qy qz qw
    MOTION_INIT j k_prev k tx ty tz qx qy qz qw
    STATIC_MEAS i k x y z
    DYN_MEAS i j k x y z
    GT_CAM k tx ty tz qx qy qz qw
    GT_OBJ j k tx ty tz qx qy qz qw
    GT_MOTION j k_prev k tx ty tz qx qy qz qw
    GT_POINT i k x y z

Static ground-truth points are written once with ``k = 0``. Numbers are
printed with 17 significant digits so that every double survives a round trip.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .se3 import Pose

HEADER = "# dynslam graph file v1"

# tag -> (number of integer indices, payload kind)
_GRAMMAR = {
    "CAM_INIT": (1, "pose"),
    "ODOM": (2, "pose"),
    "MOTION_INIT": (3, "pose"),
    "STATIC_MEAS": (2, "point"),
    "DYN_MEAS": (3, "point"),
    "GT_CAM": (1, "pose"),
    "GT_OBJ": (2, "pose"),
    "GT_MOTION": (3, "pose"),
    "GT_POINT": (2, "point"),
}
_PAYLOAD = {"pose": 7, "point": 3}
QUAT_TOL = 1e-6


class DatasetFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class SceneDataset:
    """Front-end output plus optional ground truth.

    Motions and odometry are keyed by the later step ``k`` of the
    ``k - 1 -> k`` pair; measurements by ``(tracklet, step)``.
    """

    cam_init: dict[int, Pose] = field(default_factory=dict)
    odometry: dict[int, Pose] = field(default_factory=dict)
    motion_init: dict[tuple[int, int], Pose] = field(default_factory=dict)
    static_meas: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    dynamic_meas: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    tracklet_object: dict[int, int] = field(default_factory=dict)
    gt_cam: dict[int, Pose] = field(default_factory=dict)
    gt_obj: dict[tuple[int, int], Pose] = field(default_factory=dict)
    gt_motion: dict[tuple[int, int], Pose] = field(default_factory=dict)
    gt_point: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    name: str = "seq"

    @property
    def num_steps(self) -> int:
        return max(self.cam_init) + 1 if self.cam_init else 0

    @property
    def steps(self) -> list[int]:
        return sorted(self.cam_init)

    @property
    def objects(self) -> list[int]:
        return sorted(set(self.tracklet_object.values()))

    @property
    def has_ground_truth(self) -> bool:
        return bool(self.gt_cam)

    def object_tracks(self, j: int) -> dict[int, list[int]]:
        """step -> sorted tracklet ids of object ``j`` observed at that step."""
        out: dict[int, list[int]] = {}
        for (i, k) in sorted(self.dynamic_meas):
            if self.tracklet_object[i] == j:
                out.setdefault(k, []).append(i)
        return out

    def tracklet_steps(self, i: int) -> list[int]:
        meas = self.dynamic_meas if i in self.tracklet_object else self.static_meas
        return sorted(k for (ii, k) in meas if ii == i)

    def static_tracklets(self) -> list[int]:
        return sorted({i for (i, _) in self.static_meas})

    def dynamic_tracklets(self) -> list[int]:
        return sorted(self.tracklet_object)

    def gt_object_steps(self, j: int) -> list[int]:
        return sorted(k for (jj, k) in self.gt_obj if jj == j)

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _pose_fields(p: Pose) -> list[str]:
    return [_fmt(v) for v in p.t] + [_fmt(v) for v in p.as_quat()]


def _records(d: SceneDataset):
    for k, p in d.cam_init.items():
        yield "CAM_INIT", (k,), _pose_fields(p)
    for k, p in d.odometry.items():
        yield "ODOM", (k - 1, k), _pose_fields(p)
    for (j, k), p in d.motion_init.items():
        yield "MOTION_INIT", (j, k - 1, k), _pose_fields(p)
    for (i, k), z in d.static_meas.items():
        yield "STATIC_MEAS", (i, k), [_fmt(v) for v in z]
    for (i, k), z in d.dynamic_meas.items():
        yield "DYN_MEAS", (i, d.tracklet_object[i], k), [_fmt(v) for v in z]
    for k, p in d.gt_cam.items():
        yield "GT_CAM", (k,), _pose_fields(p)
    for (j, k), p in d.gt_obj.items():
        yield "GT_OBJ", (j, k), _pose_fields(p)
    for (j, k), p in d.gt_motion.items():
        yield "GT_MOTION", (j, k - 1, k), _pose_fields(p)
    for (i, k), m in d.gt_point.items():
        yield "GT_POINT", (i, k), [_fmt(v) for v in m]


def serialize(d: SceneDataset) -> str:
    recs = sorted(_records(d), key=lambda r: (r[0], r[1]))
    lines = [HEADER]
    lines += [" ".join([tag, *map(str, idx), *vals]) for tag, idx, vals in recs]
    return "\n".join(lines) + "\n"


def _parse_pose(vals: list[float], line: int) -> Pose:
    q = np.array(vals[3:7])
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) > QUAT_TOL:
        raise DatasetFormatError(f"quaternion norm {norm!r} is not unit", line)
    return Pose.from_quat(vals[:3], q)


def parse(text: str, name: str = "seq") -> SceneDataset:
    d = SceneDataset(name=name)
    seen: dict[tuple, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].split()
        if not body:
            continue
        tag, rest = body[0], body[1:]
        if tag not in _GRAMMAR:
            raise DatasetFormatError(f"unknown tag {tag!r}", lineno)
        n_idx, kind = _GRAMMAR[tag]
        want = n_idx + _PAYLOAD[kind]
        if len(rest) != want:
            raise DatasetFormatError(f"{tag} expects {want} fields, got {len(rest)}", lineno)
        try:
            idx = tuple(int(s) for s in rest[:n_idx])
            vals = [float(s) for s in rest[n_idx:]]
        except ValueError as exc:
            raise DatasetFormatError(f"{tag}: {exc}", lineno) from None
        if any(i < 0 for i in idx):
            raise DatasetFormatError(f"{tag}: negative index", lineno)
        if not np.all(np.isfinite(vals)):
            raise DatasetFormatError(f"{tag}: non-finite value", lineno)
        dup_key = (tag, idx) if tag != "DYN_MEAS" else (tag, idx[0], idx[2])
        if dup_key in seen:
            raise DatasetFormatError(f"duplicate {tag} {' '.join(map(str, idx))} (first on line {seen[dup_key]})", lineno)
        seen[dup_key] = lineno
        if tag in ("ODOM", "MOTION_INIT", "GT_MOTION") and idx[-2] != idx[-1] - 1:
            raise DatasetFormatError(f"{tag}: k_prev must equal k - 1", lineno)

        if kind == "pose":
            p = _parse_pose(vals, lineno)
            if tag == "CAM_INIT":
                d.cam_init[idx[0]] = p
            elif tag == "ODOM":
                d.odometry[idx[1]] = p
            elif tag == "MOTION_INIT":
                d.motion_init[(idx[0], idx[2])] = p
            elif tag == "GT_CAM":
                d.gt_cam[idx[0]] = p
            elif tag == "GT_OBJ":
                d.gt_obj[idx] = p
            else:
                d.gt_motion[(idx[0], idx[2])] = p
        else:
            z = np.array(vals)
            if tag == "STATIC_MEAS":
                d.static_meas[idx] = z
            elif tag == "DYN_MEAS":
                i, j, k = idx
                if d.tracklet_object.setdefault(i, j) != j:
                    raise DatasetFormatError(
                        f"tracklet {i} moved from object {d.tracklet_object[i]} to {j}", lineno
                    )
                d.dynamic_meas[(i, k)] = z
            else:
                d.gt_point[idx] = z
    overlap = {i for (i, _) in d.static_meas} & set(d.tracklet_object)
    if overlap:
        raise DatasetFormatError(f"tracklets {sorted(overlap)} are both static and dynamic")
    if d.cam_init and sorted(d.cam_init) != list(range(d.num_steps)):
        raise DatasetFormatError("CAM_INIT steps must be 0..K-1 without gaps")
    return d


def load(path: str | Path) -> SceneDataset:
    path = Path(path)
    return parse(path.read_text(), name=path.stem)


def save(d: SceneDataset, path: str | Path) -> None:
    Path(path).write_text(serialize(d))
