"""Benchmark stochastic optimisation problems ``min_u E[h(u, W)]``.

Each :class:`Problem` carries a product density on a box, a vectorised cost
``h(u, w)`` and whatever analytic references are known.  Quadrature always
happens on ``[-1, 1]^d``; :func:`map_to_reference` and
:meth:`Problem.reference_integrand` compose the affine map and the density.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import SingularSystem, UnknownProblem
from .rules1d import RuleFamily, make_rule

__all__ = [
    "BetaDensity",
    "Problem",
    "LQControl",
    "toy_problem",
    "additive_problem",
    "lq_control_problem",
    "certainty_equivalence_solution",
    "default_control_fixture",
    "map_to_reference",
    "gaussian_integral_01",
    "get_problem",
    "load_problem_config",
]

Cost = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BetaDensity:
    """Beta(alpha, beta) on [0, 1]; Beta(1, 1) is the uniform density."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Beta parameters must be positive")

    @functools.cached_property
    def log_norm(self) -> float:
        return float(special.gammaln(self.alpha) + special.gammaln(self.beta)
                     - special.gammaln(self.alpha + self.beta))

    def pdf(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        inside = (w >= 0.0) & (w <= 1.0)
        wc = np.clip(w, 0.0, 1.0)
        val = wc ** (self.alpha - 1.0) * (1.0 - wc) ** (self.beta - 1.0) * math.exp(-self.log_norm)
        return np.where(inside, val, 0.0)

    def ppf(self, q: np.ndarray) -> np.ndarray:
        return special.betaincinv(self.alpha, self.beta, q)

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))

    @property
    def second_moment(self) -> float:
        return self.variance + self.mean**2


def map_to_reference(lower: Sequence[float], upper: Sequence[float], w_ref: np.ndarray) -> tuple[np.ndarray, float]:
    """Affine map ``[-1, 1]^d -> [lower, upper]``; returns points and the Jacobian."""
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    half = 0.5 * (hi - lo)
    w = lo + half * (np.asarray(w_ref, dtype=float) + 1.0)
    return w, float(np.prod(half))


@dataclass(frozen=True, eq=False)
class Problem:
    name: str
    d: int
    n: int
    cost: Cost
    marginals: tuple[BetaDensity, ...]
    u_lower: np.ndarray | None = None
    u_upper: np.ndarray | None = None
    u_star: np.ndarray | None = None
    f_star: float | None = None
    exact_objective: Callable[[np.ndarray], float] | None = None
    exact_gradient: Callable[[np.ndarray], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.marginals) != self.d:
            raise ValueError(f"{self.name}: {len(self.marginals)} marginals for d={self.d}")
        _check_normalised(self.marginals)

    @property
    def lower(self) -> np.ndarray:
        return np.zeros(self.d)

    @property
    def upper(self) -> np.ndarray:
        return np.ones(self.d)

    @property
    def has_box(self) -> bool:
        return self.u_lower is not None or self.u_upper is not None

    @property
    def mean_w(self) -> np.ndarray:
        return np.array([m.mean for m in self.marginals])

    def density(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(w)
        out = np.ones(len(w))
        for k, m in enumerate(self.marginals):
            out *= m.pdf(w[:, k])
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` draws from the product density by inverse CDF."""
        q = rng.random((n, self.d))
        out = np.empty_like(q)
        for k, m in enumerate(self.marginals):
            out[:, k] = q[:, k] if (m.alpha == 1 and m.beta == 1) else m.ppf(q[:, k])
        return out

    def reference_integrand(self, g: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
        """``x -> g(w(x)) p(w(x)) J`` on ``[-1, 1]^d``."""
        lower, upper = self.lower, self.upper

        def f(x: np.ndarray) -> np.ndarray:
            w, jac = map_to_reference(lower, upper, x)
            return np.asarray(g(w), dtype=float).reshape(-1) * self.density(w) * jac

        return f

    def integrand(self, u: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """``w -> h(u, w)`` with ``u`` bound."""
        u = np.asarray(u, dtype=float)
        return lambda w: self.cost(u, w)

    def project(self, u: np.ndarray) -> np.ndarray:
        return projected_box(u, self.u_lower, self.u_upper)


def projected_box(u, lower, upper) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if lower is not None:
        u = np.maximum(u, lower)
    if upper is not None:
        u = np.minimum(u, upper)
    return u


_NORMALISATION_RULE = make_rule(RuleFamily.GAUSS_PATTERSON, 8)


def _check_normalised(marginals: Sequence[BetaDensity], tol: float = 1e-8) -> None:
    """Every marginal must integrate to one (product densities check per marginal)."""
    x = 0.5 * (np.asarray(_NORMALISATION_RULE.nodes) + 1.0)
    w = 0.5 * np.asarray(_NORMALISATION_RULE.weights)
    for m in set(marginals):
        total = float(np.dot(w, m.pdf(x)))
        if abs(total - 1.0) > tol:
            raise ValueError(f"{m} integrates to {total}, not 1")


def gaussian_integral_01(u: float = 1.0) -> float:
    """``int_0^1 exp(-u t^2) dt`` via the error function."""
    if u == 0:
        return 1.0
    s = math.sqrt(u)
    return math.sqrt(math.pi) / (2.0 * s) * math.erf(s)


def toy_problem(alpha: float = 5.0, beta: float = 5.0) -> Problem:
    """``F(u) = E[u^2 + (W_1^2 + 10 W_2^2) u]`` with i.i.d. Beta marginals."""
    m = BetaDensity(alpha, beta)
    c = m.second_moment * 11.0

    def cost(u, w):
        w = np.atleast_2d(w)
        return u[0] ** 2 + (w[:, 0] ** 2 + 10.0 * w[:, 1] ** 2) * u[0]

    return Problem(
        name="toy",
        d=2,
        n=1,
        cost=cost,
        marginals=(m, m),
        u_star=np.array([-c / 2.0]),
        f_star=-c * c / 4.0,
        exact_objective=lambda u: float(u[0] ** 2 + c * u[0]),
        exact_gradient=lambda u: np.array([2.0 * u[0] + c]),
    )


def additive_problem(d: int = 50) -> Problem:
    """``F(u) = E[sum_i exp(-u_i W_i^2)]``, ``W ~ U(0,1)^d``, ``u in [0,1]^d``."""
    if d < 1:
        raise ValueError("d must be >= 1")

    def cost(u, w):
        w = np.atleast_2d(w)
        return np.exp(-u[None, :] * w * w).sum(axis=1)

    def objective(u):
        return math.fsum(gaussian_integral_01(float(v)) for v in u)

    def gradient(u):
        # d/du int_0^1 exp(-u t^2) dt = -int_0^1 t^2 exp(-u t^2) dt
        out = []
        for v in np.asarray(u, dtype=float):
            if abs(v) < 0.1:
                # the closed form cancels badly near 0; sum_k (-v)^k / (k! (2k + 3))
                out.append(-math.fsum((-v) ** k / (math.factorial(k) * (2 * k + 3)) for k in range(16)))
            else:
                out.append((math.exp(-v) - gaussian_integral_01(v)) / (2.0 * v))
        return np.array(out)

    uni = BetaDensity(1.0, 1.0)
    return Problem(
        name=f"additive{d}",
        d=d,
        n=d,
        cost=cost,
        marginals=(uni,) * d,
        u_lower=np.zeros(d),
        u_upper=np.ones(d),
        u_star=np.ones(d),
        f_star=d * gaussian_integral_01(1.0),
        exact_objective=objective,
        exact_gradient=gradient,
    )


@dataclass(frozen=True, eq=False)
class LQControl:
    """Linear dynamics ``X = A X + B u + C W + x0 e0`` with cost ``u'Pu + X'QX``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    x0: float = 0.0

    def __post_init__(self):
        mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.A, self.B, self.C, self.P, self.Q)]
        d = mats[0].shape[0]
        if any(m.shape != (d, d) for m in mats):
            raise ValueError("A, B, C, P, Q must all be d x d")
        for name, m in zip("ABCPQ", mats):
            object.__setattr__(self, name, m)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        lhs = np.eye(self.d) - self.A
        if np.linalg.cond(lhs) > 1e12:
            raise SingularSystem("I - A is singular")
        return np.linalg.solve(lhs, rhs)

    @functools.cached_property
    def M(self) -> np.ndarray:
        return self._solve(self.B)

    @functools.cached_property
    def N(self) -> np.ndarray:
        return self._solve(self.C)

    @functools.cached_property
    def v0(self) -> np.ndarray:
        e0 = np.zeros(self.d)
        e0[0] = self.x0
        return self._solve(e0)

    def states(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(w)
        return (self.M @ u)[None, :] + w @ self.N.T + self.v0[None, :]

    def cost(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        x = self.states(u, w)
        return float(u @ self.P @ u) + np.einsum("ij,jk,ik->i", x, self.Q, x)

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "ABCPQ"} | {"x0": self.x0}


def certainty_equivalence_solution(spec: LQControl, mean_w: Sequence[float]) -> np.ndarray:
    """Minimiser of the deterministic problem with ``W`` replaced by its mean."""
    M = spec.M
    v = spec.N @ np.asarray(mean_w, dtype=float) + spec.v0
    lhs = spec.P + M.T @ spec.Q @ M
    if np.linalg.cond(lhs) > 1e12:
        raise SingularSystem("P + M'QM is singular")
    return np.linalg.solve(lhs, -M.T @ spec.Q @ v)


def lq_control_problem(spec: LQControl, marginal: BetaDensity | Sequence[BetaDensity] = BetaDensity(2.0, 3.0),
                       name: str = "control") -> Problem:
    d = spec.d
    marginals = (marginal,) * d if isinstance(marginal, BetaDensity) else tuple(marginal)
    mean = np.array([m.mean for m in marginals])
    cov = np.diag([m.variance for m in marginals])
    u_star = certainty_equivalence_solution(spec, mean)
    noise = float(np.trace(spec.Q @ spec.N @ cov @ spec.N.T))

    def objective(u):
        u = np.asarray(u, dtype=float)
        x = spec.M @ u + spec.N @ mean + spec.v0
        return float(u @ spec.P @ u + x @ spec.Q @ x) + noise

    def gradient(u):
        u = np.asarray(u, dtype=float)
        x = spec.M @ u + spec.N @ mean + spec.v0
        return 2.0 * spec.P @ u + 2.0 * spec.M.T @ spec.Q @ x

    return Problem(
        name=name,
        d=d,
        n=d,
        cost=spec.cost,
        marginals=marginals,
        u_star=u_star,
        f_star=objective(u_star),
        exact_objective=objective,
        exact_gradient=gradient,
        meta={"lq": spec.to_json(), "marginal": [[m.alpha, m.beta] for m in marginals]},
    )


def default_control_fixture(d: int = 7) -> LQControl:
    """Repository fixture: ``x_{i+1}`` driven by ``0.5 x_i``, identity B, C, P, Q, ``x0 = 1``."""
    eye = np.eye(d)
    return LQControl(A=0.5 * np.eye(d, k=-1), B=eye, C=eye, P=eye, Q=eye, x0=1.0)


def load_problem_config(path: str | Path) -> Problem:
    """Build a problem from JSON: ``{"kind": "toy" | "additive" | "lq", ...}``."""
    cfg = json.loads(Path(path).read_text())
    return _from_config(cfg)


def _from_config(cfg: dict) -> Problem:
    kind = cfg.get("kind")
    if kind == "toy":
        return toy_problem(cfg.get("alpha", 5.0), cfg.get("beta", 5.0))
    if kind == "additive":
        return additive_problem(int(cfg.get("d", 50)))
    if kind == "lq":
        if "A" in cfg:
            spec = LQControl(*(np.asarray(cfg[k], dtype=float) for k in "ABCPQ"), x0=float(cfg.get("x0", 0.0)))
        else:
            spec = default_control_fixture(int(cfg.get("d", 7)))
        a, b = cfg.get("marginal", [2.0, 3.0])
        return lq_control_problem(spec, BetaDensity(a, b), name=cfg.get("name", "control"))
    raise UnknownProblem(f"unknown problem kind {kind!r}")


_REGISTRY: dict[str, Callable[[], Problem]] = {
    "toy": toy_problem,
    "additive": lambda: additive_problem(50),
    "control": lambda: lq_control_problem(default_control_fixture(7), BetaDensity(2.0, 3.0)),
    "control-sym": lambda: lq_control_problem(default_control_fixture(7), BetaDensity(5.0, 5.0),
                                              name="control-sym"),
}


def get_problem(name: str) -> Problem:
    """Registry lookup; ``additive:<d>`` picks the dimension, a ``.json`` path loads a config."""
    if name in _REGISTRY:
        return _REGISTRY[name]()
    if name.startswith("additive:"):
        return additive_problem(int(name.split(":", 1)[1]))
    if name.endswith(".json") and Path(name).exists():
        return load_problem_config(name)
    raise UnknownProblem(f"unknown problem {name!r}; known: {sorted(_REGISTRY)}")
