"""Newton-type solvers whose derivatives and objective values are quadratures.

Derivatives come from finite differences of the cost ``h(u, w)``.  In the
default diff-then-quad mode every gradient and Hessian component is its own
integrand with its own (possibly adaptive) quadrature; quad-then-diff
differences whole quadrature values instead.  The two generally pick
different downsets.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import line_search as _wolfe_line_search

from .errors import DomainViolation, LineSearchFailed, NonFiniteValue, NoProgress, SingularHessian
from .methods import AdaptiveSG, QuadratureMethod
from .problems import Problem, projected_box
from .sg_quadrature import QuadResult
from .stopping import Decision, TrendMonitor

__all__ = [
    "SchemeMode",
    "DerivativeScheme",
    "SolverConfig",
    "IterationRecord",
    "SolverTrace",
    "GradientEstimate",
    "HessianEstimate",
    "estimate_gradient",
    "estimate_hessian",
    "newton_solve",
    "bfgs_solve",
    "projected_bfgs_solve",
    "dtom_surrogate_solve",
    "projected_step",
    "solve",
]

_EPS = np.finfo(float).eps


class SchemeMode(str, enum.Enum):
    DIFF_THEN_QUAD = "diff-then-quad"
    QUAD_THEN_DIFF = "quad-then-diff"


@dataclass(frozen=True)
class DerivativeScheme:
    """Finite-difference scheme.

    ``fd_step=None`` picks the usual optimum for the stencil, scaled by
    ``max(1, |u_q|)``: sqrt(eps) for forward gradients, eps**(1/3) for
    central gradients and forward Hessians, eps**(1/4) for central Hessians.
    A given ``fd_step`` is scaled the same way and used for both orders.
    """

    mode: SchemeMode | str = SchemeMode.DIFF_THEN_QUAD
    stencil: str = "forward"
    fd_step: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", SchemeMode(self.mode))
        if self.stencil not in ("forward", "central"):
            raise ValueError(f"stencil must be 'forward' or 'central', got {self.stencil!r}")
        if self.fd_step is not None and not self.fd_step > 0:
            raise ValueError("fd_step must be positive")

    def step(self, u_q: float, order: int = 1) -> float:
        if self.fd_step is not None:
            base = self.fd_step
        elif order == 1:
            base = math.sqrt(_EPS) if self.stencil == "forward" else _EPS ** (1 / 3)
        else:
            base = _EPS ** (1 / 3) if self.stencil == "forward" else _EPS ** 0.25
        return base * max(1.0, abs(u_q))


def _default_quad() -> AdaptiveSG:
    return AdaptiveSG(1e-8, 8)


@dataclass
class SolverConfig:
    engine: str = "bfgs"
    quad: QuadratureMethod = field(default_factory=_default_quad)
    objective_quad: QuadratureMethod | None = None
    hessian_quad: QuadratureMethod | None = None
    per_component: dict[int, QuadratureMethod] | None = None
    schedule: Callable[[int], QuadratureMethod] | None = None
    scheme: DerivativeScheme = field(default_factory=DerivativeScheme)
    grad_tol: float = 1e-8
    max_iters: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    line_search: str = "wolfe"
    H0: np.ndarray | None = None
    monitor: TrendMonitor | None = None
    probe: QuadratureMethod | None = None
    record_objective: bool = True
    on_line_search_failure: str = "raise"
    kappa_max: float = 1e12

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("line-search constants need 0 < c1 < c2 < 1")
        if self.engine not in ("newton", "bfgs", "projected_bfgs"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.line_search not in ("wolfe", "armijo", "exact_quadratic"):
            raise ValueError(f"unknown line search {self.line_search!r}")
        if self.on_line_search_failure not in ("raise", "stop"):
            raise ValueError("on_line_search_failure must be 'raise' or 'stop'")

    def quad_at(self, p: int) -> QuadratureMethod:
        return self.schedule(p) if self.schedule is not None else self.quad

    def objective_at(self, p: int) -> QuadratureMethod:
        return self.objective_quad if self.objective_quad is not None else self.quad_at(p)

    def hessian_at(self, p: int) -> QuadratureMethod:
        return self.hessian_quad if self.hessian_quad is not None else self.quad_at(p)

    def probe_method(self) -> QuadratureMethod:
        if self.probe is not None:
            return self.probe
        base = self.objective_at(0)
        if isinstance(base, AdaptiveSG):
            eps = self.monitor.probe_epsilon if self.monitor and self.monitor.probe_epsilon else base.epsilon / 4
            return base.with_epsilon(eps)
        raise ValueError("a trend monitor on a non-adaptive method needs an explicit probe method")


@dataclass
class IterationRecord:
    iteration: int
    u: np.ndarray
    gradient: np.ndarray
    grad_norm: float
    objective: float | None = None
    kappa: float | None = None
    matrix: np.ndarray | None = None
    points: dict[str, int] = field(default_factory=dict)
    downsets: list | None = None
    probe: float | None = None
    decision: str | None = None
    flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        out = {
            "iter": self.iteration,
            "u": self.u.tolist(),
            "gradient": self.gradient.tolist(),
            "grad_norm": self.grad_norm,
            "objective": self.objective,
            "kappa": self.kappa,
            "matrix": None if self.matrix is None else np.atleast_2d(self.matrix).tolist(),
            "points": self.points,
            "downsets": self.downsets,
            "probe": self.probe,
            "decision": self.decision,
            "flags": self.flags,
        }
        return out


@dataclass
class SolverTrace:
    engine: str
    records: list[IterationRecord] = field(default_factory=list)
    calls: list[tuple[str, int]] = field(default_factory=list)
    converged: bool = False
    stopped_at: int | None = None
    message: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, p: int) -> IterationRecord:
        return self.records[p]

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    @property
    def final(self) -> IterationRecord:
        return self.records[self.stopped_at if self.stopped_at is not None else -1]

    def average_points(self, role: str | None = None) -> float:
        """Mean points per quadrature call, optionally restricted to one role."""
        pts = [n for r, n in self.calls if role is None or r == role]
        return float(np.mean(pts)) if pts else 0.0

    def total_points(self) -> int:
        return int(sum(n for _, n in self.calls))

    def to_jsonl(self, path=None) -> str:
        lines = [json.dumps(r.as_dict()) for r in self.records]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "grad_norm", "objective", "points", "kappa"])
        for r in self.records:
            w.writerow([r.iteration, repr(r.grad_norm), "" if r.objective is None else repr(r.objective),
                        sum(r.points.values()), "" if r.kappa is None else repr(r.kappa)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@dataclass
class GradientEstimate:
    value: np.ndarray
    cost: int
    downsets: list
    flags: list[str] = field(default_factory=list)
    results: list[QuadResult] = field(default_factory=list)

    def __iter__(self) -> Iterator:
        return iter((self.value, self.cost, self.downsets))


@dataclass
class HessianEstimate:
    matrix: np.ndarray
    cost: int
    kappa: float
    flags: list[str] = field(default_factory=list)

    def __iter__(self) -> Iterator:
        return iter((self.matrix, self.cost, self.kappa))


def projected_step(u, box: tuple[Sequence[float] | None, Sequence[float] | None]) -> np.ndarray:
    """Componentwise clamp of ``u`` into ``[lower, upper]``."""
    lower, upper = box
    lower = None if lower is None else np.asarray(lower, dtype=float)
    upper = None if upper is None else np.asarray(upper, dtype=float)
    if lower is not None and upper is not None and np.any(lower > upper):
        raise ValueError("box lower bound exceeds upper bound")
    return projected_box(u, lower, upper)


def _check_domain(problem: Problem, u: np.ndarray) -> None:
    if u.shape != (problem.n,):
        raise DomainViolation(f"u has shape {u.shape}, expected ({problem.n},)")
    if not np.all(np.isfinite(u)):
        raise DomainViolation("u is not finite")
    if problem.u_lower is not None and np.any(u < problem.u_lower):
        raise DomainViolation("u is below the lower bound")
    if problem.u_upper is not None and np.any(u > problem.u_upper):
        raise DomainViolation("u is above the upper bound")


def _fits(problem: Problem, q: int, value: float) -> bool:
    lo = -math.inf if problem.u_lower is None else problem.u_lower[q]
    hi = math.inf if problem.u_upper is None else problem.u_upper[q]
    return lo <= value <= hi


def _sign(problem: Problem, u: np.ndarray, q: int, reach: float, flags: list[str]) -> float:
    """+1 unless a forward step of length ``reach`` leaves the box."""
    if _fits(problem, q, u[q] + reach):
        return 1.0
    if _fits(problem, q, u[q] - reach):
        flags.append(f"backward:{q}")
        return -1.0
    raise DomainViolation(f"box in component {q} is narrower than the FD step")


def _shifted(u: np.ndarray, shifts: dict[int, float]) -> np.ndarray:
    v = u.copy()
    for q, s in shifts.items():
        v[q] += s
    return v


def _stencil_gradient(problem, u, q, scheme, flags):
    """Terms ``[(coef, shifts)]`` of the first-difference stencil for component ``q``."""
    h = scheme.step(u[q], 1)
    if scheme.stencil == "central":
        if _fits(problem, q, u[q] + h) and _fits(problem, q, u[q] - h):
            return [(0.5 / h, {q: h}), (-0.5 / h, {q: -h})]
        flags.append(f"one-sided:{q}")
    s = _sign(problem, u, q, h, flags) * h
    return [(1.0 / s, {q: s}), (-1.0 / s, {})]


def _stencil_hessian(problem, u, i, j, scheme, flags):
    hi = scheme.step(u[i], 2)
    hj = scheme.step(u[j], 2)
    if scheme.stencil == "central":
        inside = all(_fits(problem, k, u[k] + t) for k, t in ((i, hi), (i, -hi), (j, hj), (j, -hj)))
        if i == j and _fits(problem, i, u[i] + hi) and _fits(problem, i, u[i] - hi):
            return [(1 / hi**2, {i: hi}), (-2 / hi**2, {}), (1 / hi**2, {i: -hi})]
        if i != j and inside:
            c = 1 / (4 * hi * hj)
            return [(c, {i: hi, j: hj}), (-c, {i: hi, j: -hj}), (-c, {i: -hi, j: hj}), (c, {i: -hi, j: -hj})]
        flags.append(f"one-sided:{i},{j}")
    if i == j:
        s = _sign(problem, u, i, 2 * hi, flags) * hi
        return [(1 / s**2, {i: 2 * s}), (-2 / s**2, {i: s}), (1 / s**2, {})]
    si = _sign(problem, u, i, hi, flags) * hi
    sj = _sign(problem, u, j, hj, flags) * hj
    c = 1 / (si * sj)
    return [(c, {i: si, j: sj}), (-c, {i: si}), (-c, {j: sj}), (c, {})]


def _combine(problem: Problem, u: np.ndarray, terms) -> Callable[[np.ndarray], np.ndarray]:
    shifted = [(c, _shifted(u, s)) for c, s in terms]

    def g(w):
        total = 0.0
        for c, v in shifted:
            total = total + c * np.asarray(problem.cost(v, w), dtype=float)
        return total

    return g


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NonFiniteValue(f"{what} is not finite")
    return value


def _downset_of(res: QuadResult):
    return None if res.downset is None else json.loads(res.downset.to_json())


class _QuadCache:
    """Quadratures of shifted costs, shared by quad-then-diff stencils."""

    def __init__(self, problem: Problem, u: np.ndarray):
        self.problem, self.u = problem, u
        self.values: dict = {}
        self.cost = 0
        self.results: list[QuadResult] = []

    def get(self, method: QuadratureMethod, shifts: dict[int, float]) -> float:
        key = (id(method), tuple(sorted(shifts.items())))
        if key not in self.values:
            res = method.integrate(self.problem, self.problem.integrand(_shifted(self.u, shifts)))
            self.cost += res.point_count
            self.results.append(res)
            self.values[key] = _finite(res.value, "quadrature value")
        return self.values[key]


def estimate_gradient(problem: Problem, u, scheme: DerivativeScheme | None = None,
                      quad: QuadratureMethod | None = None,
                      per_component: dict[int, QuadratureMethod] | None = None) -> GradientEstimate:
    """Finite-difference gradient of ``F`` with each component integrated separately."""
    scheme = scheme or DerivativeScheme()
    quad = quad or _default_quad()
    u = np.asarray(u, dtype=float)
    _check_domain(problem, u)
    flags: list[str] = []
    shared = quad.frozen(problem)
    per_component = per_component or {}
    out = np.empty(problem.n)
    downsets = []
    results = []
    cost = 0
    cache = _QuadCache(problem, u)
    for q in range(problem.n):
        method = per_component.get(q, shared)
        terms = _stencil_gradient(problem, u, q, scheme, flags)
        if scheme.mode is SchemeMode.DIFF_THEN_QUAD:
            res = method.integrate(problem, _combine(problem, u, terms))
            out[q] = _finite(res.value, f"gradient component {q}")
            cost += res.point_count
            downsets.append(_downset_of(res))
            results.append(res)
        else:
            out[q] = math.fsum(c * cache.get(method, s) for c, s in terms)
            downsets.append(None)
    if scheme.mode is SchemeMode.QUAD_THEN_DIFF:
        cost = cache.cost
        results = cache.results
        downsets = [_downset_of(r) for r in results]
    return GradientEstimate(out, cost, downsets, flags, results)


def hessian_condition(H: np.ndarray) -> float:
    H = np.atleast_2d(H)
    if not np.all(np.isfinite(H)):
        return math.inf
    with np.errstate(divide="ignore"):
        return float(np.linalg.cond(H))


def estimate_hessian(problem: Problem, u, scheme: DerivativeScheme | None = None,
                     quad: QuadratureMethod | None = None,
                     per_component: dict[tuple[int, int], QuadratureMethod] | None = None) -> HessianEstimate:
    """Symmetrised finite-difference Hessian; the condition number rides along."""
    scheme = scheme or DerivativeScheme()
    quad = quad or _default_quad()
    u = np.asarray(u, dtype=float)
    _check_domain(problem, u)
    flags: list[str] = []
    shared = quad.frozen(problem)
    per_component = per_component or {}
    n = problem.n
    H = np.empty((n, n))
    cost = 0
    cache = _QuadCache(problem, u)
    for i in range(n):
        for j in range(i, n):
            method = per_component.get((i, j), shared)
            terms = _stencil_hessian(problem, u, i, j, scheme, flags)
            if scheme.mode is SchemeMode.DIFF_THEN_QUAD:
                res = method.integrate(problem, _combine(problem, u, terms))
                val = _finite(res.value, f"Hessian entry {i},{j}")
                cost += res.point_count
            else:
                val = math.fsum(c * cache.get(method, s) for c, s in terms)
            H[i, j] = H[j, i] = val
    if scheme.mode is SchemeMode.QUAD_THEN_DIFF:
        cost = cache.cost
    H = 0.5 * (H + H.T)
    return HessianEstimate(H, cost, hessian_condition(H), flags)


class _Session:
    """Book-keeping shared by the engines: quadrature calls, monitor, trace."""

    def __init__(self, problem: Problem, cfg: SolverConfig):
        self.problem = problem
        self.cfg = cfg
        self.trace = SolverTrace(cfg.engine)
        self.probe = cfg.probe_method() if cfg.monitor is not None else None

    def gradient(self, u: np.ndarray, p: int) -> GradientEstimate:
        est = estimate_gradient(self.problem, u, self.cfg.scheme, self.cfg.quad_at(p), self.cfg.per_component)
        for res in est.results:
            self.trace.calls.append(("gradient", res.point_count))
        return est

    def objective(self, u: np.ndarray, p: int, role: str = "objective") -> tuple[float, int]:
        res = self.cfg.objective_at(p).integrate(self.problem, self.problem.integrand(u))
        self.trace.calls.append((role, res.point_count))
        return _finite(res.value, "objective"), res.point_count

    def record(self, rec: IterationRecord) -> Decision | None:
        """Append ``rec``; run the trend monitor if configured."""
        dec = None
        if self.cfg.monitor is not None:
            res = self.probe.integrate(self.problem, self.problem.integrand(rec.u))
            rec.probe = res.value
            rec.points["probe"] = res.point_count
            dec = self.cfg.monitor.update(res.value)
            rec.decision = str(dec)
        self.trace.records.append(rec)
        if dec is not None and dec.stop:
            self.trace.stopped_at = dec.at_iteration
            self.trace.message = f"trend monitor stop at iteration {dec.at_iteration}"
        return dec

    def finish(self) -> tuple[np.ndarray, SolverTrace]:
        return self.trace.final.u.copy(), self.trace


def newton_solve(problem: Problem, u0, cfg: SolverConfig | None = None) -> tuple[np.ndarray, SolverTrace]:
    """Discretised Newton: ``u_{p+1} = u_p - H_p^{-1} G_p`` with quadrature-based ``G``, ``H``."""
    cfg = cfg or SolverConfig(engine="newton")
    s = _Session(problem, cfg)
    u = np.asarray(u0, dtype=float).copy()
    _check_domain(problem, u)
    p = 0
    while True:
        g = s.gradient(u, p)
        hq = cfg.hessian_at(p)
        hess = estimate_hessian(problem, u, cfg.scheme, hq)
        s.trace.calls.append(("hessian", hess.cost))
        rec = IterationRecord(p, u.copy(), g.value, float(np.linalg.norm(g.value)), kappa=hess.kappa,
                              matrix=hess.matrix, points={"gradient": g.cost, "hessian": hess.cost},
                              downsets=g.downsets, flags=g.flags + hess.flags)
        if cfg.record_objective:
            rec.objective, rec.points["objective"] = s.objective(u, p)
        dec = s.record(rec)
        if dec is not None and dec.stop:
            break
        if rec.grad_norm <= cfg.grad_tol:
            s.trace.converged = True
            s.trace.message = "gradient tolerance reached"
            break
        if p >= cfg.max_iters:
            s.trace.message = "iteration limit"
            break
        if not hess.kappa <= cfg.kappa_max:
            raise SingularHessian(f"Hessian condition number {hess.kappa:.3g} exceeds {cfg.kappa_max:g}",
                                  hess.kappa)
        lu = linalg.lu_factor(hess.matrix)
        z = linalg.lu_solve(lu, -g.value)
        u_new = projected_step(u + z, (problem.u_lower, problem.u_upper)) if problem.has_box else u + z
        if np.linalg.norm(u_new - u) < 1e-15:
            if cfg.on_line_search_failure == "raise":
                raise NoProgress("Newton step vanished above the gradient tolerance", s.trace)
            s.trace.message = "step vanished"
            break
        u = u_new
        p += 1
    return s.finish()


class _LineProblem:
    """Objective and gradient evaluations along a search, memoised by point."""

    def __init__(self, session: _Session, p: int):
        self.s, self.p = session, p
        self.f: dict[bytes, float] = {}
        self.g: dict[bytes, GradientEstimate] = {}
        self.points = 0

    def fun(self, x) -> float:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if key not in self.f:
            val, n = self.s.objective(x, self.p, role="objective")
            self.points += n
            self.f[key] = val
        return self.f[key]

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if key not in self.g:
            est = self.s.gradient(x, self.p)
            self.points += est.cost
            self.g[key] = est
        return self.g[key].value


def _armijo(lp: _LineProblem, u, v, F, slope, c1, project=None) -> float:
    alpha = 1.0
    for _ in range(60):
        x = u + alpha * v if project is None else project(u + alpha * v)
        decrease = slope * alpha if project is None else float(lp.grad(u) @ (x - u))
        if lp.fun(x) <= F + c1 * decrease:
            return alpha
        alpha *= 0.5
    raise LineSearchFailed("Armijo backtracking found no acceptable step")


def _exact_quadratic(lp: _LineProblem, u, v, F, slope) -> float | None:
    """Exact minimiser along ``v`` when ``F`` is quadratic: three-value parabola."""
    curv = lp.fun(u + v) - F - slope
    if not curv > 0:
        return None
    return -slope / (2.0 * curv)


def _bfgs_update(H: np.ndarray, s: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    sy = float(s @ y)
    if sy <= 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
        return H, False
    rho = 1.0 / sy
    I = np.eye(len(s))
    V = I - rho * np.outer(s, y)
    return V @ H @ V.T + rho * np.outer(s, s), True


def bfgs_solve(problem: Problem, u0, cfg: SolverConfig | None = None) -> tuple[np.ndarray, SolverTrace]:
    """Discretised BFGS on the inverse Hessian with a strong Wolfe line search."""
    cfg = cfg or SolverConfig(engine="bfgs")
    s = _Session(problem, cfg)
    u = np.asarray(u0, dtype=float).copy()
    _check_domain(problem, u)
    n = problem.n
    H = np.eye(n) if cfg.H0 is None else np.array(cfg.H0, dtype=float)
    p = 0
    lp = _LineProblem(s, p)
    F = lp.fun(u)
    G = lp.grad(u)
    pts = {"gradient": lp.points}
    flags: list[str] = []
    while True:
        rec = IterationRecord(p, u.copy(), G.copy(), float(np.linalg.norm(G)), objective=F,
                              matrix=H.copy(), points=pts, flags=flags,
                              downsets=lp.g[u.tobytes()].downsets if u.tobytes() in lp.g else None)
        rec.kappa = hessian_condition(H)
        dec = s.record(rec)
        if dec is not None and dec.stop:
            break
        if rec.grad_norm <= cfg.grad_tol:
            s.trace.converged = True
            s.trace.message = "gradient tolerance reached"
            break
        if p >= cfg.max_iters:
            s.trace.message = "iteration limit"
            break
        flags = []
        v = -H @ G
        slope = float(G @ v)
        if not slope < 0:
            H = np.eye(n)
            v = -G
            slope = float(G @ v)
            flags.append("reset")
        lp = _LineProblem(s, p + 1)
        lp.f[u.tobytes()] = F
        try:
            alpha = _line_search(lp, u, v, F, G, slope, cfg, flags)
        except LineSearchFailed as exc:
            if cfg.on_line_search_failure == "raise":
                exc.trace = s.trace
                raise
            s.trace.message = f"line search failed: {exc}"
            break
        u_new = u + alpha * v
        if np.linalg.norm(u_new - u) <= 1e-12 * max(1.0, float(np.linalg.norm(u))):
            if cfg.on_line_search_failure == "raise":
                raise NoProgress("BFGS step vanished above the gradient tolerance", s.trace)
            s.trace.message = "line search stalled"
            break
        F_new = lp.fun(u_new)
        G_new = lp.grad(u_new)
        H, updated = _bfgs_update(H, u_new - u, G_new - G)
        if not updated:
            flags.append("skip-update")
        u, F, G = u_new, F_new, G_new
        pts = {"line_search": lp.points}
        p += 1
    return s.finish()


def _line_search(lp: _LineProblem, u, v, F, G, slope, cfg: SolverConfig, flags: list[str]) -> float:
    if cfg.line_search == "exact_quadratic":
        alpha = _exact_quadratic(lp, u, v, F, slope)
        if alpha is not None:
            return alpha
        flags.append("exact-fallback")
        return _armijo(lp, u, v, F, slope, cfg.c1)
    if cfg.line_search == "wolfe":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alpha = _wolfe_line_search(lp.fun, lp.grad, u, v, gfk=G, old_fval=F, c1=cfg.c1, c2=cfg.c2)[0]
        if alpha is not None and alpha > 0:
            return float(alpha)
        flags.append("armijo-fallback")
    return _armijo(lp, u, v, F, slope, cfg.c1)


def projected_bfgs_solve(problem: Problem, u0, cfg: SolverConfig | None = None) -> tuple[np.ndarray, SolverTrace]:
    """BFGS restricted to the free variables of a box, with projected Armijo search.

    Variables sitting on a bound with the gradient pushing outward are held
    fixed; convergence is measured by the projected gradient ``u - P(u - G)``.
    """
    cfg = cfg or SolverConfig(engine="projected_bfgs")
    s = _Session(problem, cfg)
    box = (problem.u_lower, problem.u_upper)
    project = lambda x: projected_step(x, box)  # noqa: E731
    u = project(np.asarray(u0, dtype=float).copy())
    n = problem.n
    H = np.eye(n) if cfg.H0 is None else np.array(cfg.H0, dtype=float)
    p = 0
    lp = _LineProblem(s, p)
    F = lp.fun(u)
    G = lp.grad(u)
    pts = {"gradient": lp.points}
    flags: list[str] = []
    lo = np.full(n, -np.inf) if problem.u_lower is None else problem.u_lower
    hi = np.full(n, np.inf) if problem.u_upper is None else problem.u_upper
    while True:
        pg = u - project(u - G)
        rec = IterationRecord(p, u.copy(), G.copy(), float(np.linalg.norm(pg)), objective=F,
                              matrix=H.copy(), points=pts, flags=flags,
                              downsets=lp.g[u.tobytes()].downsets if u.tobytes() in lp.g else None)
        rec.kappa = hessian_condition(H)
        dec = s.record(rec)
        if dec is not None and dec.stop:
            break
        if rec.grad_norm <= cfg.grad_tol:
            s.trace.converged = True
            s.trace.message = "projected gradient tolerance reached"
            break
        if p >= cfg.max_iters:
            s.trace.message = "iteration limit"
            break
        flags = []
        active = ((u <= lo) & (G > 0)) | ((u >= hi) & (G < 0))
        free = ~active
        v = np.zeros(n)
        v[free] = -H[np.ix_(free, free)] @ G[free]
        if not float(G[free] @ v[free]) < 0:
            H = np.eye(n)
            v[free] = -G[free]
            flags.append("reset")
        lp = _LineProblem(s, p + 1)
        lp.f[u.tobytes()] = F
        lp.g[u.tobytes()] = GradientEstimate(G, 0, [])
        try:
            alpha = _armijo(lp, u, v, F, float(G @ v), cfg.c1, project=project)
        except LineSearchFailed as exc:
            if cfg.on_line_search_failure == "raise":
                exc.trace = s.trace
                raise
            s.trace.message = f"line search failed: {exc}"
            break
        u_new = project(u + alpha * v)
        if np.linalg.norm(u_new - u) <= 1e-12 * max(1.0, float(np.linalg.norm(u))):
            if cfg.on_line_search_failure == "raise":
                raise NoProgress("projected step vanished above the tolerance", s.trace)
            s.trace.message = "line search stalled"
            break
        F_new = lp.fun(u_new)
        G_new = lp.grad(u_new)
        H, updated = _bfgs_update(H, u_new - u, G_new - G)
        if not updated:
            flags.append("skip-update")
        u, F, G = u_new, F_new, G_new
        pts = {"line_search": lp.points}
        p += 1
    return s.finish()


def dtom_surrogate_solve(problem: Problem, u0, fixed_quadrature: QuadratureMethod,
                         cfg: SolverConfig | None = None) -> tuple[np.ndarray, SolverTrace]:
    """Discretise-then-optimise baseline: minimise one frozen surrogate ``S(u)``.

    The node set is frozen once, and the gradient is a central difference
    of ``S`` itself.
    """
    frozen = fixed_quadrature.frozen(problem)
    if cfg is None:
        cfg = SolverConfig(engine="projected_bfgs" if problem.has_box else "bfgs",
                           scheme=DerivativeScheme(SchemeMode.QUAD_THEN_DIFF, "central"),
                           grad_tol=1e-10)
    cfg = SolverConfig(**{**cfg.__dict__, "quad": frozen, "objective_quad": frozen, "hessian_quad": frozen,
                          "schedule": None})
    return solve(problem, u0, cfg)


def solve(problem: Problem, u0, cfg: SolverConfig) -> tuple[np.ndarray, SolverTrace]:
    engines = {"newton": newton_solve, "bfgs": bfgs_solve, "projected_bfgs": projected_bfgs_solve}
    return engines[cfg.engine](problem, u0, cfg)
