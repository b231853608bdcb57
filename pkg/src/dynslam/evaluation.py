"""Relative pose error for cameras, object motions and object poses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .graph import KeyKind, Values
from .se3 import Pose


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class RpeSample:
    E_t: float  # meters
    E_r: float  # degrees
    entity: object = None
    step: int | None = None


def rpe(M: Pose, M_gt: Pose, entity=None, step=None) -> RpeSample:
    """Error of ``E = M^-1 M_gt``: translation norm and rotation angle in degrees."""
    E = M.inverse() @ M_gt
    c = np.clip(0.5 * (np.trace(E.R) - 1.0), -1.0, 1.0)
    return RpeSample(float(np.linalg.norm(E.t)), float(np.degrees(np.arccos(c))), entity, step)


@dataclass
class RpeSeries:
    samples: list[RpeSample] = field(default_factory=list)

    @property
    def mean_t(self) -> float:
        return float(np.mean([s.E_t for s in self.samples])) if self.samples else float("nan")

    @property
    def mean_r(self) -> float:
        return float(np.mean([s.E_r for s in self.samples])) if self.samples else float("nan")

    def __len__(self):
        return len(self.samples)


@dataclass
class ObjectRpe:
    """Per-object RPE series plus the cross-object mean of per-object means."""

    per_object: dict[int, RpeSeries] = field(default_factory=dict)
    untracked: list[int] = field(default_factory=list)
    propagated: bool = False

    def _tracked(self):
        return [s for s in self.per_object.values() if len(s)]

    @property
    def mean_t(self) -> float:
        t = self._tracked()
        return float(np.mean([s.mean_t for s in t])) if t else float("nan")

    @property
    def mean_r(self) -> float:
        t = self._tracked()
        return float(np.mean([s.mean_r for s in t])) if t else float("nan")


def camera_rpe(est: Mapping[int, Pose], gt: Mapping[int, Pose]) -> RpeSeries:
    """RPE of consecutive relative camera poses ``X_{k-1}^-1 X_k``."""
    if sorted(est) != sorted(gt):
        raise EvaluationError(f"camera steps differ: estimate has {len(est)}, ground truth {len(gt)}")
    steps = sorted(gt)
    if len(steps) < 2:
        raise EvaluationError("camera RPE needs at least two steps")
    out = RpeSeries()
    for a, b in zip(steps, steps[1:]):
        out.samples.append(rpe(est[a].inverse() @ est[b], gt[a].inverse() @ gt[b], "camera", b))
    return out


def object_motion_rpe(est: Mapping[tuple[int, int], Pose], gt: Mapping[tuple[int, int], Pose]) -> ObjectRpe:
    """RPE of world-frame object motions keyed by (object, step)."""
    missing = sorted(set(gt) - set(est))
    if missing:
        raise EvaluationError(f"estimate lacks motions for (object, step) {missing[:5]}")
    out = ObjectRpe()
    for (j, k) in sorted(gt):
        out.per_object.setdefault(j, RpeSeries()).samples.append(rpe(est[(j, k)], gt[(j, k)], j, k))
    return out


def propagate_object_trajectory(start: Pose, motions) -> list[Pose]:
    """``L_k = H_{k-1,k} L_{k-1}``; returns the poses after each motion."""
    out, L = [], start
    for H in motions:
        L = H @ L
        out.append(L)
    return out


def propagate_objects(
    motions: Mapping[tuple[int, int], Pose], starts: Mapping[int, tuple[int, Pose]]
) -> dict[tuple[int, int], Pose]:
    """Object trajectories from per-step motions, seeded with ``starts[j] = (k0, L_k0)``.

    Propagation stops at the first missing motion.
    """
    out = {}
    for j, (k0, L) in starts.items():
        out[(j, k0)] = L
        k = k0 + 1
        while (j, k) in motions:
            L = motions[(j, k)] @ L
            out[(j, k)] = L
            k += 1
    return out


def object_pose_rpe(est: Mapping[tuple[int, int], Pose], gt: Mapping[tuple[int, int], Pose],
                    propagated: bool = False) -> ObjectRpe:
    """RPE of consecutive relative object poses ``L_{k-1}^-1 L_k``."""
    missing = sorted(set(gt) - set(est))
    if missing:
        raise EvaluationError(f"estimate lacks object poses for (object, step) {missing[:5]}")
    out = ObjectRpe(propagated=propagated)
    by_obj: dict[int, list[int]] = {}
    for (j, k) in gt:
        by_obj.setdefault(j, []).append(k)
    for j in sorted(by_obj):
        steps = sorted(by_obj[j])
        series = out.per_object.setdefault(j, RpeSeries())
        for a, b in zip(steps, steps[1:]):
            if b != a + 1:
                continue
            series.samples.append(rpe(est[(j, a)].inverse() @ est[(j, b)], gt[(j, a)].inverse() @ gt[(j, b)], j, b))
        if not series.samples:
            out.untracked.append(j)
    return out


def extract_cameras(v: Values) -> dict[int, Pose]:
    return {k.a: v[k] for k in v if k.kind == KeyKind.CAMERA_POSE}


def extract_motions(v: Values) -> dict[tuple[int, int], Pose]:
    return {(k.a, k.b): v[k] for k in v if k.kind == KeyKind.OBJECT_MOTION}


def extract_object_poses(v: Values) -> dict[tuple[int, int], Pose]:
    return {(k.a, k.b): v[k] for k in v if k.kind == KeyKind.OBJECT_POSE}


def win_fractions(a: Mapping[int, float], b: Mapping[int, float]) -> tuple[float, float]:
    """Fraction of shared objects where ``a`` beats ``b`` (lower error); ties split."""
    common = sorted(set(a) & set(b))
    if not common:
        return float("nan"), float("nan")
    wins = sum(1.0 if a[j] < b[j] else 0.5 if a[j] == b[j] else 0.0 for j in common)
    return wins / len(common), 1.0 - wins / len(common)
