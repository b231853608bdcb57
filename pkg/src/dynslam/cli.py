"""Command line: generate, solve, eval, compare."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset as dio
from .builders import DatasetError
from .dataset import DatasetFormatError
from .experiment import (
    FORMULATION_CHOICES,
    ConfigError,
    ExperimentSpec,
    compare,
    load_result_dir,
    parse_scene_config,
    run_eval,
    run_solve,
)
from .results import metrics_tables
from .simulator import SceneConfig, generate
from .solver import IndeterminateSystemError

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER = 0, 1, 2


def _generate_to(config: str | None, seed: int | None, out: Path):
    cfg = parse_scene_config(Path(config).read_text()) if config else SceneConfig()
    if seed is not None:
        cfg.seed = seed
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    d = generate(cfg)
    d.name = out.stem
    out.parent.mkdir(parents=True, exist_ok=True)
    dio.save(d, out)
    return d


def cmd_generate(args) -> int:
    out = Path(args.out)
    d = _generate_to(args.config, args.seed, out)
    print(f"wrote {out}: {d.num_steps} steps, {len(d.static_tracklets())} static points, "
          f"{len(d.dynamic_tracklets())} dynamic tracklets on {len(d.objects)} objects, "
          f"{len(d.static_meas) + len(d.dynamic_meas)} measurements")
    return EXIT_OK


def cmd_solve(args) -> int:
    if args.spec:
        spec = ExperimentSpec.from_json(Path(args.spec).read_text())
        if args.out != "results":
            spec = replace(spec, out=args.out)
    else:
        if args.dataset and args.config:
            raise ConfigError("give either --dataset or --config, not both")
        if args.config:
            # Simulate once into the output directory; every formulation reads that file.
            path = Path(args.out) / "dataset.txt"
            _generate_to(args.config, args.seed, path)
            args.dataset = str(path)
        if not args.dataset:
            raise ConfigError("--dataset (or --config / --spec) is required")
        solver = {}
        if args.lambda_init is not None:
            solver["lambda_init"] = args.lambda_init
        if args.max_iters is not None:
            solver["max_iterations"] = args.max_iters
        spec = ExperimentSpec(
            dataset=args.dataset,
            formulation=args.formulation,
            out=args.out,
            seed=args.seed or 0,
            solver=solver,
            object_prior=args.object_prior,
            object_priors=not args.no_object_priors,
            perturb_pose=tuple(args.perturb_pose),
            perturb_point=args.perturb_point,
        )
    runs = run_solve(spec)
    for run in runs:
        s = run.trace.summary()
        print(f"{run.formulation.value:<12} vars={run.manifest['num_variables']:<6} "
              f"factors={run.manifest['num_factors']:<6} iterations={s['iterations']:<4} "
              f"steps={s['steps']:<4} rejected={s['rejected_steps']:<3} chi2={s['final_chi2']:.6g} "
              f"time={s['wall_time']:.2f}s")
    return EXIT_OK


def cmd_eval(args) -> int:
    d = dio.load(args.dataset)
    if not d.has_ground_truth:
        raise DatasetFormatError(f"{args.dataset} has no ground-truth records (GT_CAM/GT_OBJ/GT_MOTION)")
    est = Path(args.estimates)
    if est.is_dir():
        est = est / "estimates.txt"
    out = Path(args.out) if args.out else est.parent
    metrics = run_eval(est, d, out)
    print(metrics_tables(metrics), end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    report = compare([load_result_dir(Path(p)) for p in args.results])
    if args.out:
        Path(args.out).write_text(report)
    print(report, end="")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynslam", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a scene and write a dataset file")
    g.add_argument("--config", help="scene config (key = value lines)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="build and optimize one or all formulations")
    s.add_argument("--dataset")
    s.add_argument("--config", help="scene config; the dataset is simulated into OUT/dataset.txt")
    s.add_argument("--spec", help="rerun a saved experiment.json")
    s.add_argument("--formulation", choices=FORMULATION_CHOICES, default="all")
    s.add_argument("--out", default="results")
    s.add_argument("--seed", type=int, default=None, help="seed for the perturbation stream")
    s.add_argument("--lambda-init", type=float)
    s.add_argument("--max-iters", type=int)
    s.add_argument("--object-prior", choices=["auto", "centroid", "ground_truth"], default="auto")
    s.add_argument("--no-object-priors", action="store_true",
                   help="drop first-object-pose priors (object-centric graphs become indeterminate)")
    s.add_argument("--perturb-pose", type=float, nargs=2, default=(0.0, 0.0), metavar=("ROT", "TRANS"))
    s.add_argument("--perturb-point", type=float, default=0.0)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="RPE metrics of estimates against dataset ground truth")
    e.add_argument("--estimates", required=True, help="estimates.txt or a result directory")
    e.add_argument("--dataset", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="compare evaluated result directories")
    c.add_argument("results", nargs="+")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except IndeterminateSystemError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, DatasetFormatError, DatasetError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
