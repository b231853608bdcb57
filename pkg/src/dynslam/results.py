"""Estimates, metrics and trace files written by a solve/eval run."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetFormatError, SceneDataset, _fmt, _parse_pose, _pose_fields
from .evaluation import (
    camera_rpe,
    extract_cameras,
    extract_motions,
    extract_object_poses,
    object_motion_rpe,
    object_pose_rpe,
    propagate_objects,
)
from .graph import (
    CameraPose,
    DynamicPointLocal,
    DynamicPointWorld,
    KeyKind,
    ObjectMotion,
    ObjectPose,
    StaticPoint,
    Values,
)
from .solver import SolveTrace, trace_to_csv

ESTIMATES_HEADER = "# dynslam estimates v1"
METRICS_HEADER = "# dynslam metrics v1; E_r in degrees, E_t in meters; means are arithmetic over samples"

ESTIMATES_FILE = "estimates.txt"
METRICS_FILE = "metrics.txt"
TABLES_FILE = "tables.txt"
TRACE_FILE = "trace.csv"
MANIFEST_FILE = "manifest.json"


def serialize_estimates(v: Values) -> str:
    lines = [ESTIMATES_HEADER]
    for key in v:  # sorted key order
        val = v[key]
        if key.kind == KeyKind.CAMERA_POSE:
            lines.append(" ".join(["EST_CAM", str(key.a), *_pose_fields(val)]))
        elif key.kind == KeyKind.OBJECT_POSE:
            lines.append(" ".join(["EST_OBJ", str(key.a), str(key.b), *_pose_fields(val)]))
        elif key.kind == KeyKind.OBJECT_MOTION:
            lines.append(" ".join(["EST_MOTION", str(key.a), str(key.b - 1), str(key.b), *_pose_fields(val)]))
        elif key.kind == KeyKind.STATIC_POINT:
            lines.append(" ".join(["EST_POINT", "S", str(key.a), *map(_fmt, val)]))
        elif key.kind == KeyKind.DYNAMIC_POINT_WORLD:
            lines.append(" ".join(["EST_POINT", "D", str(key.a), str(key.b), *map(_fmt, val)]))
        else:
            lines.append(" ".join(["EST_POINT", "M", str(key.a), str(key.b), *map(_fmt, val)]))
    return "\n".join(lines) + "\n"


_EST_ARITY = {"EST_CAM": 8, "EST_OBJ": 9, "EST_MOTION": 10}
_POINT_ARITY = {"S": 4, "D": 5, "M": 5}


def parse_estimates(text: str) -> Values:
    items = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        f = raw.split("#", 1)[0].split()
        if not f:
            continue
        tag, rest = f[0], f[1:]
        try:
            if tag in _EST_ARITY:
                if len(rest) != _EST_ARITY[tag]:
                    raise DatasetFormatError(f"{tag} expects {_EST_ARITY[tag]} fields, got {len(rest)}", lineno)
                n = len(rest) - 7
                idx = [int(s) for s in rest[:n]]
                pose = _parse_pose([float(s) for s in rest[n:]], lineno)
                if tag == "EST_CAM":
                    key = CameraPose(idx[0])
                elif tag == "EST_OBJ":
                    key = ObjectPose(idx[0], idx[1])
                else:
                    key = ObjectMotion(idx[0], idx[2])
                items[key] = pose
            elif tag == "EST_POINT":
                kind = rest[0] if rest else ""
                if kind not in _POINT_ARITY or len(rest) != _POINT_ARITY[kind] + 1:
                    raise DatasetFormatError("malformed EST_POINT record", lineno)
                n = _POINT_ARITY[kind] - 3
                idx = [int(s) for s in rest[1:1 + n]]
                xyz = np.array([float(s) for s in rest[1 + n:]])
                ctor = {"S": StaticPoint, "D": DynamicPointWorld, "M": DynamicPointLocal}[kind]
                items[ctor(*idx)] = xyz
            else:
                raise DatasetFormatError(f"unknown tag {tag!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, DatasetFormatError):
                raise
            raise DatasetFormatError(str(exc), lineno) from None
    return Values(items)


@dataclass
class Metrics:
    """RPE summary rows. Each row: (label, object id or None, E_r deg, E_t m, samples)."""

    sequence: str
    camera: tuple
    motion: list[tuple] = field(default_factory=list)
    motion_mean: tuple = ()
    pose: list[tuple] = field(default_factory=list)
    pose_mean: tuple = ()
    propagated: bool = False

    def per_object(self, section: str, column: str = "E_t") -> dict[int, float]:
        col = 3 if column == "E_t" else 2
        return {r[1]: r[col] for r in getattr(self, section) if r[4] > 0}


def compute_metrics(v: Values, d: SceneDataset) -> Metrics:
    """Camera, object-motion and object-pose RPE of ``v`` against the dataset ground truth.

    Without object-pose estimates the object trajectories are propagated from
    the estimated motions, starting at the ground-truth first pose.
    """
    if not d.has_ground_truth:
        raise ValueError("dataset has no ground truth")
    seq = d.name
    cam = camera_rpe(extract_cameras(v), d.gt_cam)
    motions = extract_motions(v)
    gt_motion = {jk: d.gt_motion[jk] for jk in motions if jk in d.gt_motion}
    mot = object_motion_rpe(motions, gt_motion)

    poses = extract_object_poses(v)
    propagated = not poses
    if propagated:
        starts = {}
        for (j, k) in sorted(motions):
            if j not in starts or k - 1 < starts[j][0]:
                starts[j] = (k - 1, d.gt_obj[(j, k - 1)])
        poses = propagate_objects(motions, starts)
    gt_pose = {jk: d.gt_obj[jk] for jk in poses if jk in d.gt_obj}
    pose = object_pose_rpe(poses, gt_pose, propagated=propagated)

    def rows(res):
        return [(f"{seq}|{j}", j, s.mean_r, s.mean_t, len(s)) for j, s in sorted(res.per_object.items())]

    return Metrics(
        sequence=seq,
        camera=(seq, None, cam.mean_r, cam.mean_t, len(cam)),
        motion=rows(mot),
        motion_mean=(f"{seq}|mean", None, mot.mean_r, mot.mean_t, sum(len(s) for s in mot.per_object.values())),
        pose=rows(pose),
        pose_mean=(f"{seq}|mean", None, pose.mean_r, pose.mean_t, sum(len(s) for s in pose.per_object.values())),
        propagated=propagated,
    )


def _row_line(tag, row, extra=""):
    label, j, er, et, n = row
    obj = "" if j is None else f" obj={j}"
    return f"{tag} label={label}{obj} E_r_deg={_fmt(er)} E_t_m={_fmt(et)} n={n}{extra}"


def metrics_to_text(m: Metrics) -> str:
    prop = f" propagated={int(m.propagated)}"
    lines = [METRICS_HEADER, f"SEQUENCE name={m.sequence}", _row_line("CAMERA", m.camera)]
    lines += [_row_line("MOTION", r) for r in m.motion]
    lines.append(_row_line("MOTION_MEAN", m.motion_mean))
    lines += [_row_line("POSE", r, prop) for r in m.pose]
    lines.append(_row_line("POSE_MEAN", m.pose_mean, prop))
    return "\n".join(lines) + "\n"


def parse_metrics(text: str) -> Metrics:
    m = Metrics(sequence="", camera=())
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        tag, *pairs = line.split()
        kv = dict(p.split("=", 1) for p in pairs)
        if tag == "SEQUENCE":
            m.sequence = kv["name"]
            continue
        row = (kv["label"], int(kv["obj"]) if "obj" in kv else None,
               float(kv["E_r_deg"]), float(kv["E_t_m"]), int(kv["n"]))
        if "propagated" in kv:
            m.propagated = kv["propagated"] == "1"
        if tag == "CAMERA":
            m.camera = row
        elif tag == "MOTION":
            m.motion.append(row)
        elif tag == "MOTION_MEAN":
            m.motion_mean = row
        elif tag == "POSE":
            m.pose.append(row)
        elif tag == "POSE_MEAN":
            m.pose_mean = row
        else:
            raise ValueError(f"unknown metrics tag {tag!r}")
    return m


def _table(title, header, rows):
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    out = [title]
    for n, r in enumerate(cells):
        out.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        if n == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


def metrics_tables(m: Metrics) -> str:
    def fmt(r, marker=""):
        return [r[0], f"{r[2]:.4f}", f"{r[3]:.4f}", r[4]] + ([marker] if marker is not None else [])

    hdr = ["Seq|obj", "E_r(deg)", "E_t(m)", "n"]
    parts = [
        _table("Camera RPE (M = X_{k-1}^-1 X_k)", ["Seq", "E_r(deg)", "E_t(m)", "n"], [fmt(m.camera, None)]),
        _table("Object motion RPE (M = world-frame motion)", hdr,
               [fmt(r, None) for r in m.motion] + [fmt(m.motion_mean, None)]),
    ]
    marker = "propagated" if m.propagated else ""
    parts.append(_table("Object pose RPE (M = L_{k-1}^-1 L_k)", hdr + ["source"],
                        [fmt(r, marker) for r in m.pose] + [fmt(m.pose_mean, marker)]))
    return "\n\n".join(parts) + "\n"


def write_results(out_dir: str | Path, estimates: Values | None = None, metrics: Metrics | None = None,
                  trace: SolveTrace | None = None) -> list[Path]:
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if estimates is not None:
            written.append(_write(out / ESTIMATES_FILE, serialize_estimates(estimates)))
        if metrics is not None:
            written.append(_write(out / METRICS_FILE, metrics_to_text(metrics)))
            written.append(_write(out / TABLES_FILE, metrics_tables(metrics)))
        if trace is not None:
            written.append(_write(out / TRACE_FILE, trace_to_csv(trace)))
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return written


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path
