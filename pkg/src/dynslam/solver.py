"""Levenberg-Marquardt with per-step chi-squared tracing.

A *step* is one solve of the damped normal equations; an *iteration* is one
relinearization, which happens only after an accepted step. Row 0 of every
trace is the initial state (no linear solve).
"""

from __future__ import annotations

import bisect
import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .builders import BuiltProblem
from .graph import Graph, Values

log = logging.getLogger(__name__)

PRIOR_HINT = (
    "object-centric graphs need a prior on the first pose of each object trajectory "
    "to fix the gauge of object poses and object-frame points"
)


class IndeterminateSystemError(RuntimeError):
    """The Gauss-Newton system is rank deficient at the current estimate."""

    def __init__(self, message: str, keys=(), iteration: int = 0):
        self.keys = list(keys)
        self.iteration = iteration
        super().__init__(message)


@dataclass
class SolverConfig:
    lambda_init: float = 1e-5
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    max_iterations: int = 100
    relative_tol: float = 1e-6
    absolute_tol: float = 1e-10
    max_lambda: float = 1e8
    # pivot / diagonal ratio below which the undamped system counts as singular
    rank_tol: float = 1e-10
    check_rank: bool = True

    def __post_init__(self):
        if self.lambda_up <= 1 or self.lambda_down <= 1:
            raise ValueError("lambda factors must be > 1")
        for name in ("lambda_init", "relative_tol", "absolute_tol", "max_lambda", "rank_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass
class TraceRow:
    step: int
    iteration: int
    lam: float
    chi2_before: float
    chi2_after: float
    accepted: bool


@dataclass
class SolveTrace:
    rows: list[TraceRow] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    reason: str = ""
    wall_time: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.rows) - 1 if self.rows else 0

    @property
    def rejected(self) -> int:
        return sum(1 for r in self.rows[1:] if not r.accepted)

    @property
    def initial_chi2(self) -> float:
        return self.rows[0].chi2_before

    @property
    def final_chi2(self) -> float:
        for r in reversed(self.rows):
            if r.accepted:
                return r.chi2_after
        return self.rows[0].chi2_before

    def error_changes(self) -> np.ndarray:
        chi = np.array([r.chi2_after for r in self.rows])
        return np.concatenate([[0.0], chi[:-1] - chi[1:]]) if len(chi) else chi

    def sign_flips(self) -> int:
        """Number of sign changes in the error-change sequence (zeros ignored)."""
        s = np.sign(self.error_changes()[1:])
        s = s[s != 0]
        return int(np.sum(s[1:] != s[:-1]))

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "steps": self.steps,
            "rejected_steps": self.rejected,
            "initial_chi2": self.initial_chi2,
            "final_chi2": self.final_chi2,
            "converged": self.converged,
            "reason": self.reason,
            "sign_flips": self.sign_flips(),
            "wall_time": self.wall_time,
        }


TRACE_COLUMNS = ("step", "iteration", "lambda", "chi2_before", "chi2_after", "error_change", "accepted")


def export_trace(t: SolveTrace) -> list[dict]:
    """Per-step rows; ``error_change`` is chi2_{n-1} - chi2_n over the chi2_after column."""
    out = []
    for row, change in zip(t.rows, t.error_changes()):
        out.append({
            "step": row.step,
            "iteration": row.iteration,
            "lambda": row.lam,
            "chi2_before": row.chi2_before,
            "chi2_after": row.chi2_after,
            "error_change": float(change),
            "accepted": row.accepted,
        })
    return out


def trace_to_csv(t: SolveTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in export_trace(t):
        w.writerow([
            r["step"], r["iteration"], repr(r["lambda"]), repr(r["chi2_before"]),
            repr(r["chi2_after"]), repr(r["error_change"]), int(r["accepted"]),
        ])
    return buf.getvalue()


def parse_trace_csv(text: str) -> SolveTrace:
    reader = csv.DictReader(io.StringIO(text))
    t = SolveTrace()
    for r in reader:
        t.rows.append(TraceRow(int(r["step"]), int(r["iteration"]), float(r["lambda"]),
                               float(r["chi2_before"]), float(r["chi2_after"]), bool(int(r["accepted"]))))
    t.iterations = max((r.iteration for r in t.rows), default=0)
    return t


def _key_of_column(values: Values, col: int):
    keys = list(values)
    offsets = [values.offset(k) for k in keys]
    i = bisect.bisect_right(offsets, col) - 1
    return keys[i] if i >= 0 else None


def _factorize(A: sp.csc_matrix):
    # symmetric minimum-degree ordering; diagonal pivots only
    return splu(
        A,
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )


def _null_columns(A: sp.csc_matrix) -> np.ndarray:
    """Columns carrying the (near) null space of a unit-diagonal PSD matrix.

    A lightly regularized solve against a fixed right-hand side amplifies the
    null-space components by ~1/eps.
    """
    n = A.shape[0]
    b = np.cos(np.arange(n) * 0.7) + 1.5
    try:
        x = _factorize((A + 1e-9 * sp.identity(n)).tocsc()).solve(b)
    except RuntimeError:
        return np.arange(0)
    mag = np.abs(x)
    return np.flatnonzero(mag >= 0.1 * mag.max())


def check_determinate(JtJ: sp.csc_matrix, values: Values, tol: float, iteration: int = 0) -> None:
    """Raise IndeterminateSystemError if the undamped normal matrix is singular."""
    diag = JtJ.diagonal()
    dead = np.flatnonzero(diag <= 0)
    if dead.size == 0:
        # Unit-diagonal scaling keeps the pivot test independent of units.
        s = 1.0 / np.sqrt(diag)
        S = sp.diags(s)
        A = (S @ JtJ @ S).tocsc()
        try:
            lu = _factorize(A)
        except RuntimeError:
            pivots = None
        else:
            pivots = np.abs(lu.U.diagonal())
        if pivots is not None and not (pivots < tol).any():
            return
        dead = _null_columns(A)
    keys = sorted({_key_of_column(values, int(c)) for c in dead} - {None})
    shown = ", ".join(map(str, keys[:8])) + (" ..." if len(keys) > 8 else "")
    raise IndeterminateSystemError(
        f"indeterminate linear system at iteration {iteration}"
        + (f"; unconstrained directions involve {shown}" if keys else "; factorization failed")
        + f". Hint: {PRIOR_HINT}",
        keys=keys,
        iteration=iteration,
    )


def solve(problem: BuiltProblem | tuple[Graph, Values], config: SolverConfig = SolverConfig()):
    """Run LM; returns ``(values, trace)``."""
    if isinstance(problem, BuiltProblem):
        graph, values = problem.graph, problem.initial
    else:
        graph, values = problem
    t0 = time.perf_counter()
    plan = graph.plan(values)
    trace = SolveTrace()
    lam = config.lambda_init
    system = plan.linearize(values)
    chi2 = system.chi2
    trace.rows.append(TraceRow(0, 0, lam, chi2, chi2, True))

    def finish(reason, converged):
        trace.reason = reason
        trace.converged = converged
        trace.wall_time = time.perf_counter() - t0
        log.debug("LM stopped: %s after %d iterations, chi2=%g", reason, trace.iterations, trace.final_chi2)
        return values, trace

    if chi2 < config.absolute_tol:
        return finish("absolute", True)
    if config.max_iterations == 0:
        return finish("max_iterations", False)

    step = 0
    while True:
        J = system.jacobian
        JtJ = (J.T @ J).tocsc()
        g = J.T @ system.residual
        if config.check_rank:
            check_determinate(JtJ, values, config.rank_tol, trace.iterations)
        D = sp.diags(JtJ.diagonal())
        while True:
            step += 1
            try:
                delta = _factorize((JtJ + lam * D).tocsc()).solve(-g)
            except RuntimeError as exc:
                raise IndeterminateSystemError(
                    f"damped system singular at step {step}: {exc}. Hint: {PRIOR_HINT}",
                    iteration=trace.iterations,
                ) from None
            candidate = values.retract(delta)
            new_chi2 = plan.chi2(candidate)
            accepted = bool(np.isfinite(new_chi2) and new_chi2 < chi2)
            trace.rows.append(TraceRow(step, trace.iterations + (1 if accepted else 0), lam, chi2, new_chi2, accepted))
            if accepted:
                break
            lam *= config.lambda_up
            if lam > config.max_lambda:
                return finish("max_lambda", False)

        rel_decrease = (chi2 - new_chi2) / chi2
        values, chi2 = candidate, new_chi2
        trace.iterations += 1
        lam /= config.lambda_down
        if chi2 < config.absolute_tol:
            return finish("absolute", True)
        if rel_decrease < config.relative_tol:
            return finish("relative", True)
        if trace.iterations >= config.max_iterations:
            return finish("max_iterations", False)
        system = plan.linearize(values)


def config_dict(c: SolverConfig) -> dict:
    return asdict(c)
