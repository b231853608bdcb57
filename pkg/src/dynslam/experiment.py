"""Scene config files, experiment specs, and the solve/eval/compare pipeline."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import dataset as dio
from .builders import BuildOptions, Formulation, build
from .dataset import SceneDataset
from .evaluation import win_fractions
from .results import (
    MANIFEST_FILE,
    METRICS_FILE,
    TRACE_FILE,
    Metrics,
    compute_metrics,
    parse_estimates,
    parse_metrics,
    write_results,
)
from .se3 import Pose
from .simulator import NoiseSpec, ObjectSpec, SceneConfig, default_objects, perturb_values, rng_stream
from .solver import SolverConfig, SolveTrace, parse_trace_csv, solve


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- scene config

def _extra_object(n: int) -> ObjectSpec:
    sign = 1.0 if n % 2 == 0 else -1.0
    pose = Pose(Pose.rot_z(0.3 * n).R, [8.0 + 6.0 * n, sign * 5.0, 0.0])
    return ObjectSpec(pose, [0.0, 0.0, 0.03 * sign, 0.8, 0.0, 0.0])


def _floats(key, value, n=None):
    try:
        vals = [float(x) for x in value.split()]
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {value!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def parse_scene_config(text: str) -> SceneConfig:
    """``key = value`` lines; keys mirror :class:`SceneConfig` fields.

    Objects: ``objects = N`` selects how many (defaults first), then
    ``object.<n>.initial_pose = tx ty tz qx qy qz qw``, ``object.<n>.twist``,
    ``object.<n>.twist_ramp`` (6 numbers each), ``object.<n>.num_points``,
    ``object.<n>.radius``. Noise fields use ``noise.<name>``.
    """
    raw: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        raw[k] = (lineno, v)

    cfg = SceneConfig()
    noise = NoiseSpec()
    n_obj = len(cfg.objects)
    if "objects" in raw:
        try:
            n_obj = int(raw.pop("objects")[1])
        except ValueError:
            raise ConfigError("objects: expected an integer") from None
        if n_obj < 0:
            raise ConfigError("objects: must be >= 0")
    objects = (default_objects() + [_extra_object(n) for n in range(3, max(n_obj, 3))])[:n_obj]

    scalar = {f.name: f.type for f in fields(SceneConfig)}
    for key, (lineno, value) in sorted(raw.items(), key=lambda kv: kv[1][0]):
        if key.startswith("noise."):
            name = key[len("noise."):]
            if name not in {f.name for f in fields(NoiseSpec)}:
                raise ConfigError(f"{key}: unknown noise field")
            setattr(noise, name, _floats(key, value, 1)[0])
        elif key.startswith("object."):
            parts = key.split(".")
            if len(parts) != 3 or not parts[1].isdigit():
                raise ConfigError(f"{key}: expected object.<index>.<field>")
            n, name = int(parts[1]), parts[2]
            if n >= len(objects):
                raise ConfigError(f"{key}: object index {n} out of range (objects = {len(objects)})")
            obj = objects[n]
            if name == "initial_pose":
                v = _floats(key, value, 7)
                q = np.array(v[3:])
                if abs(np.linalg.norm(q) - 1.0) > 1e-6:
                    raise ConfigError(f"{key}: quaternion is not unit norm")
                obj.initial_pose = Pose.from_quat(v[:3], q)
            elif name in ("twist", "twist_ramp"):
                setattr(obj, name, np.array(_floats(key, value, 6)))
            elif name == "num_points":
                obj.num_points = int(_floats(key, value, 1)[0])
            elif name == "radius":
                obj.radius = _floats(key, value, 1)[0]
            else:
                raise ConfigError(f"{key}: unknown object field {name!r}")
        elif key in ("steps", "static_points", "seed"):
            try:
                setattr(cfg, key, int(value))
            except ValueError:
                raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
        elif key in ("camera_speed", "camera_yaw_rate"):
            setattr(cfg, key, _floats(key, value, 1)[0])
        elif key in ("camera_path", "name"):
            setattr(cfg, key, value)
        elif key == "static_volume":
            v = _floats(key, value, 6)
            cfg.static_volume = ((v[0], v[1]), (v[2], v[3]), (v[4], v[5]))
        else:
            hint = " (not settable from a config file)" if key in scalar else ""
            raise ConfigError(f"{key}: unknown config key{hint}")
    cfg.objects = objects
    cfg.noise = noise
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


# ---------------------------------------------------------------- experiments

FORMULATION_CHOICES = [f.value for f in Formulation] + ["all"]


@dataclass
class ExperimentSpec:
    dataset: str
    formulation: str = "all"
    out: str = "results"
    seed: int = 0
    solver: dict = field(default_factory=dict)
    object_prior: str = "auto"
    object_priors: bool = True
    perturb_pose: tuple[float, float] = (0.0, 0.0)
    perturb_point: float = 0.0

    def formulations(self) -> list[Formulation]:
        if self.formulation == "all":
            return list(Formulation)
        return [Formulation(self.formulation)]

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def to_json(self) -> str:
        d = asdict(self)
        d["perturb_pose"] = list(self.perturb_pose)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ExperimentSpec:
        d = json.loads(text)
        d["perturb_pose"] = tuple(d.get("perturb_pose", (0.0, 0.0)))
        return cls(**d)


def build_options(spec: ExperimentSpec, d: SceneDataset) -> BuildOptions:
    prior = spec.object_prior
    if prior == "auto":
        prior = "ground_truth" if d.gt_obj else "centroid"
    return BuildOptions(object_prior=prior, object_priors=spec.object_priors)


@dataclass
class RunResult:
    formulation: Formulation
    values: object
    trace: SolveTrace
    manifest: dict
    metrics: Metrics | None = None


def solve_dataset(d: SceneDataset, formulation: Formulation, spec: ExperimentSpec,
                  digest: str = "") -> RunResult:
    problem = build(d, formulation, build_options(spec, d))
    init = problem.initial
    sr, st = spec.perturb_pose
    if sr > 0 or st > 0 or spec.perturb_point > 0:
        # Same perturbation stream for every formulation; keys differ so the draws do too.
        init = perturb_values(init, (sr, st), spec.perturb_point, rng_stream(spec.seed, "perturbation"))
    problem.initial = init
    values, trace = solve(problem, spec.solver_config())
    manifest = dict(problem.manifest)
    manifest.update(
        dataset=spec.dataset,
        dataset_sha256=digest,
        solver=trace.summary(),
        solver_config=asdict(spec.solver_config()),
    )
    metrics = compute_metrics(values, d) if d.has_ground_truth else None
    return RunResult(Formulation(formulation), values, trace, manifest, metrics)


def write_run(run: RunResult, out_dir: Path, spec: ExperimentSpec) -> None:
    write_results(out_dir, estimates=run.values, metrics=run.metrics, trace=run.trace)
    (out_dir / MANIFEST_FILE).write_text(json.dumps(run.manifest, indent=2, sort_keys=True, default=str) + "\n")
    (out_dir / "experiment.json").write_text(replace(spec, formulation=run.formulation.value).to_json())


def run_solve(spec: ExperimentSpec) -> list[RunResult]:
    """Load the dataset once and solve every requested formulation from it."""
    path = Path(spec.dataset)
    raw = path.read_bytes()
    d = dio.parse(raw.decode(), name=path.stem)
    digest = hashlib.sha256(raw).hexdigest()
    out = Path(spec.out)
    runs = []
    for f in spec.formulations():
        run = solve_dataset(d, f, spec, digest)
        write_run(run, out / f.value, spec)
        runs.append(run)
    return runs


def run_eval(estimates_path: Path, d: SceneDataset, out_dir: Path) -> Metrics:
    values = parse_estimates(Path(estimates_path).read_text())
    metrics = compute_metrics(values, d)
    write_results(out_dir, metrics=metrics)
    return metrics


# ---------------------------------------------------------------- comparison

@dataclass
class Compared:
    name: str
    metrics: Metrics
    trace: SolveTrace
    digest: str


def load_result_dir(path: Path) -> Compared:
    path = Path(path)
    manifest = json.loads((path / MANIFEST_FILE).read_text())
    metrics = parse_metrics((path / METRICS_FILE).read_text())
    trace = parse_trace_csv((path / TRACE_FILE).read_text())
    name = manifest.get("formulation", path.name)
    return Compared(name, metrics, trace, manifest.get("dataset_sha256", ""))


def compare(results: list[Compared]) -> str:
    """Side-by-side metrics, solver effort, and pairwise per-object win fractions."""
    if len(results) < 2:
        raise ValueError("compare needs at least two result directories")
    digests = {r.digest for r in results}
    if len(digests) != 1:
        raise ValueError("result directories come from different datasets (dataset_sha256 mismatch)")
    base = results[0]
    lines = ["# dynslam comparison; deltas are relative to the first result", ""]
    lines.append(f"{'formulation':<14} {'metric':<12} {'E_r(deg)':>10} {'E_t(m)':>10} {'dE_r':>10} {'dE_t':>10}")
    for r in results:
        for label, row, ref in (
            ("camera", r.metrics.camera, base.metrics.camera),
            ("obj_motion", r.metrics.motion_mean, base.metrics.motion_mean),
            ("obj_pose", r.metrics.pose_mean, base.metrics.pose_mean),
        ):
            lines.append(f"{r.name:<14} {label:<12} {row[2]:>10.4f} {row[3]:>10.4f} "
                         f"{row[2] - ref[2]:>+10.4f} {row[3] - ref[3]:>+10.4f}")
    lines += ["", f"{'formulation':<14} {'iterations':>10} {'steps':>6} {'rejected':>8} {'sign_flips':>10} {'final_chi2':>14}"]
    for r in results:
        t = r.trace
        lines.append(f"{r.name:<14} {t.iterations:>10} {t.steps:>6} {t.rejected:>8} {t.sign_flips():>10} {t.final_chi2:>14.6g}")
    lines += ["", "per-object win fraction (row beats column; ties split)"]
    for section in ("motion", "pose"):
        for col in ("E_t", "E_r"):
            lines.append(f"[{section} {col}]")
            for a in results:
                cells = []
                for b in results:
                    frac, _ = win_fractions(a.metrics.per_object(section, col), b.metrics.per_object(section, col))
                    cells.append(f"{b.name}={frac:.2f}")
                lines.append(f"  {a.name:<14} " + " ".join(cells))
    return "\n".join(lines) + "\n"
