"""Experiment harness: method sweeps and the stopping-criterion study.

Each problem has a fixed protocol (engine, start point, derivative scheme
and which quadrature role the swept method plays):

* toy: BFGS from ``u = 0``; the method computes gradient and objective.
* additive: projected BFGS from ``u = 0.5``; gradients always use 10-sample
  Monte Carlo and the swept method computes the objective.
* control: Newton from ``u = 0``; the method computes gradient, Hessian and
  objective.

Both quadratic problems use central differences with step ``1e-3``: the
cost is quadratic in ``u``, so the stencil has no truncation error and a
large step keeps rounding small.
"""

from __future__ import annotations

import csv
import io
import json
import subprocess
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import LineSearchFailed, NoProgress, SingularHessian
from .methods import AdaptiveSG, MonteCarlo, make_method
from .problems import Problem, get_problem
from .solver import DerivativeScheme, SolverConfig, SolverTrace, dtom_surrogate_solve, solve
from .stopping import QuadraticFit, quadratic_fit, replay

__all__ = [
    "ExperimentSpec",
    "ResultRow",
    "Protocol",
    "protocol_for",
    "run_single",
    "run_experiment",
    "write_results",
    "StudyEntry",
    "stopping_study",
    "write_study",
]

RESULT_COLUMNS = ["method", "param", "avg_points", "u_error", "f_error", "iterations"]


@dataclass
class ExperimentSpec:
    problem: str
    method: str
    sweep: Sequence[float]
    seed: int = 0
    out: str | None = None
    repetitions: int = 10
    cap: int = 8
    scheme: str | None = None
    stencil: str | None = None
    max_iters: int | None = None

    def __post_init__(self):
        if len(self.sweep) == 0:
            raise ValueError("sweep must not be empty")


@dataclass
class ResultRow:
    method: str
    param: float
    avg_points: float
    u_error: float
    f_error: float
    iterations: float
    wall_time: float = 0.0

    def csv_fields(self) -> list[str]:
        return [self.method, repr(float(self.param)), repr(self.avg_points), repr(self.u_error),
                repr(self.f_error), repr(float(self.iterations))]


@dataclass(frozen=True)
class Protocol:
    engine: str
    u0: np.ndarray
    role: str
    scheme: DerivativeScheme
    grad_tol: float
    max_iters: int


def protocol_for(problem: Problem, scheme: str | None = None, stencil: str | None = None,
                 max_iters: int | None = None) -> Protocol:
    name = problem.name
    if name.startswith("additive"):
        base = Protocol("projected_bfgs", np.full(problem.n, 0.5), "objective",
                        DerivativeScheme(), 1e-9, 50)
    elif name.startswith("control") or "lq" in problem.meta:
        base = Protocol("newton", np.zeros(problem.n), "gradient",
                        DerivativeScheme(stencil="central", fd_step=1e-3), 1e-9, 5)
    else:
        base = Protocol("bfgs", np.zeros(problem.n), "gradient",
                        DerivativeScheme(stencil="central", fd_step=1e-3), 1e-9, 20)
    if scheme is not None or stencil is not None:
        mode = scheme or base.scheme.mode
        st = stencil or base.scheme.stencil
        fd = base.scheme.fd_step if st == base.scheme.stencil else None
        base = Protocol(base.engine, base.u0, base.role, DerivativeScheme(mode, st, fd), base.grad_tol, base.max_iters)
    if max_iters is not None:
        base = Protocol(base.engine, base.u0, base.role, base.scheme, base.grad_tol, max_iters)
    return base


def _config(problem: Problem, proto: Protocol, method, seed: int, stream: int) -> SolverConfig:
    if proto.role == "objective":
        grad = MonteCarlo(10, seed, 1000 + stream)
        return SolverConfig(engine=proto.engine, quad=grad, objective_quad=method, scheme=proto.scheme,
                            grad_tol=proto.grad_tol, max_iters=proto.max_iters, on_line_search_failure="stop")
    return SolverConfig(engine=proto.engine, quad=method, scheme=proto.scheme, grad_tol=proto.grad_tol,
                        max_iters=proto.max_iters, on_line_search_failure="stop")


def run_single(problem: Problem, method_id: str, param: float, seed: int = 0, stream: int = 0,
               proto: Protocol | None = None, cap: int = 8) -> tuple[np.ndarray, SolverTrace]:
    proto = proto or protocol_for(problem)
    method = make_method(method_id, param, seed, stream, cap)
    if method_id == "dtom_mc":
        cfg = SolverConfig(engine=proto.engine,
                           scheme=DerivativeScheme("quad-then-diff", "central", proto.scheme.fd_step),
                           grad_tol=proto.grad_tol, max_iters=proto.max_iters, on_line_search_failure="stop")
        return dtom_surrogate_solve(problem, proto.u0, method, cfg)
    cfg = _config(problem, proto, method, seed, stream)
    try:
        return solve(problem, proto.u0, cfg)
    except (SingularHessian, NoProgress, LineSearchFailed) as exc:
        trace = getattr(exc, "trace", None)
        if trace is None or not trace.records:
            raise
        trace.message = f"{type(exc).__name__}: {exc}"
        return trace.final.u.copy(), trace


def _row(problem: Problem, method_id: str, param: float, u: np.ndarray, trace: SolverTrace, role: str) -> ResultRow:
    u_err = float(np.linalg.norm(u - problem.u_star)) if problem.u_star is not None else float("nan")
    f_bar = trace.final.objective
    f_err = abs(f_bar - problem.f_star) if (f_bar is not None and problem.f_star is not None) else float("nan")
    pts = trace.average_points(role) or trace.average_points()
    return ResultRow(method_id, param, pts, u_err, f_err, trace.iterations)


def run_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    """One row per sweep value; Monte Carlo rows average ``spec.repetitions`` seeded runs."""
    problem = get_problem(spec.problem)
    make_method(spec.method, spec.sweep[0], spec.seed)  # validates the id early
    proto = protocol_for(problem, spec.scheme, spec.stencil, spec.max_iters)
    stochastic = spec.method in ("mc", "dtom_mc") or proto.role == "objective"
    reps = spec.repetitions if stochastic else 1
    rows = []
    for param in spec.sweep:
        t0 = time.perf_counter()
        runs = []
        for rep in range(reps):
            u, trace = run_single(problem, spec.method, param, spec.seed, rep, proto, spec.cap)
            runs.append(_row(problem, spec.method, param, u, trace, proto.role))
        row = ResultRow(
            spec.method,
            param,
            float(np.mean([r.avg_points for r in runs])),
            float(np.mean([r.u_error for r in runs])),
            float(np.mean([r.f_error for r in runs])),
            float(np.mean([r.iterations for r in runs])),
            time.perf_counter() - t0,
        )
        rows.append(row)
    if spec.out:
        write_results(spec, rows, spec.out)
    return rows


def _git_hash() -> str | None:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def results_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def write_results(spec: ExperimentSpec, rows: Sequence[ResultRow], out: str | Path) -> Path:
    """``results.csv`` is deterministic; wall times live in ``run.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(rows))
    meta = {
        "config": {k: (list(v) if k == "sweep" else v) for k, v in asdict(spec).items()},
        "seed": spec.seed,
        "git": _git_hash(),
        "wall_time": [r.wall_time for r in rows],
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out / "results.csv"


@dataclass
class StudyEntry:
    epsilon: float
    family: str
    iterations: list[int]
    true_error: list[float]
    surrogate: list[float]
    probe: list[float]
    monitor_fired: bool
    stop_index: int
    true_argmin: int
    halted: str
    fit: QuadraticFit | None = None
    fit_note: str = ""

    @property
    def probe_range(self) -> float:
        return float(np.ptp(self.probe)) if self.probe else 0.0


def stopping_study(problem: str | Problem = "toy", epsilons: Sequence[float] = (1.0, 0.1),
                   families: Sequence[str] = ("tra", "cc", "gp"), probe_epsilon: float | None = None,
                   max_iters: int = 8, cap: int = 8, u0=None) -> list[StudyEntry]:
    """Run BFGS for a fixed number of iterations per configuration and replay the trend monitor.

    When the monitor never fires (the solver halted first, or every probe
    improved) the stop index is the best probe seen, which is the iterate
    the monitor would hand back.
    """
    prob = get_problem(problem) if isinstance(problem, str) else problem
    if prob.u_star is None:
        raise ValueError("the stopping study needs a reference minimiser")
    start = np.zeros(prob.n) if u0 is None else np.asarray(u0, dtype=float)
    entries = []
    for eps in epsilons:
        for fam in families:
            quad = AdaptiveSG(eps, cap, fam)
            cfg = SolverConfig(engine="bfgs", quad=quad, grad_tol=0.0, max_iters=max_iters,
                               on_line_search_failure="stop")
            _, trace = solve(prob, start, cfg)
            probe = quad.with_epsilon(probe_epsilon if probe_epsilon is not None else eps / 4)
            pv = [probe.integrate(prob, prob.integrand(r.u)).value for r in trace.records]
            errs = [float(np.linalg.norm(r.u - prob.u_star)) for r in trace.records]
            dec = replay(pv)
            stop = dec.at_iteration if dec.stop else int(np.argmin(pv))
            fit, note = None, ""
            try:
                fit = quadratic_fit(list(zip(errs, pv)))
            except Exception as exc:  # fewer than three iterates or a degenerate set
                note = str(exc)
            entries.append(StudyEntry(eps, fam, [r.iteration for r in trace.records], errs,
                                      [r.objective for r in trace.records], pv, dec.stop, stop,
                                      int(np.argmin(errs)), trace.message, fit, note))
    return entries


def write_study(entries: Sequence[StudyEntry], out: str | Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epsilon", "family", "iter", "true_error", "surrogate", "probe"])
    for e in entries:
        for p, err, s, v in zip(e.iterations, e.true_error, e.surrogate, e.probe):
            w.writerow([repr(e.epsilon), e.family, p, repr(err), repr(s), repr(v)])
    (out / "stopping.csv").write_text(buf.getvalue())
    summary = [
        {
            "epsilon": e.epsilon,
            "family": e.family,
            "decision": f"Stop(at_iteration={e.stop_index})",
            "monitor_fired": e.monitor_fired,
            "true_argmin": e.true_argmin,
            "halted": e.halted,
            "fit": None if e.fit is None else {"a": e.fit.a, "b": e.fit.b, "c": e.fit.c, "residual": e.fit.residual},
            "fit_note": e.fit_note,
        }
        for e in entries
    ]
    (out / "stopping.json").write_text(json.dumps(summary, indent=2) + "\n")
