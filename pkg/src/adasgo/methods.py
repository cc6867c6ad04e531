"""Quadrature methods as the solver sees them.

A method integrates ``g(w) p(w)`` over a problem's box, where ``g`` is a
vectorised function of ``W``-space points.  ``frozen()`` returns a method that
reuses one node set, which gives common random numbers inside one gradient
estimate and is the basis of the fixed-surrogate baseline.

Monte Carlo uses numpy's Philox-4x64-10 counter-based generator keyed by
``(seed, stream)``, so a draw is fully determined by two 64-bit integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .adaptive import AdaptiveConfig, adaptive_quadrature
from .errors import UnknownMethod
from .problems import Problem, map_to_reference
from .rules1d import RuleFamily
from .sg_quadrature import GridPointSet, QuadResult, default_max_evaluations, product_grid, sparse_grid

__all__ = [
    "QuadratureMethod",
    "AdaptiveSG",
    "SparseGrid",
    "ProductRule",
    "MonteCarlo",
    "FixedPoints",
    "philox",
    "monte_carlo_quadrature",
    "make_method",
    "METHOD_IDS",
]

WFunction = Callable[[np.ndarray], np.ndarray]


class QuadratureMethod(Protocol):
    label: str

    def integrate(self, problem: Problem, g: WFunction) -> QuadResult: ...

    def frozen(self, problem: Problem) -> QuadratureMethod: ...


def philox(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class FixedPoints:
    """A frozen node set in ``W`` space; weights already include the density."""

    points: np.ndarray
    weights: np.ndarray
    label: str = "fixed"

    def integrate(self, problem: Problem, g: WFunction) -> QuadResult:
        vals = np.asarray(g(self.points), dtype=float).reshape(-1)
        return QuadResult(float(np.dot(self.weights, vals)), len(self.weights))

    def frozen(self, problem: Problem) -> FixedPoints:
        return self

    @classmethod
    def from_grid(cls, problem: Problem, grid: GridPointSet, label: str) -> FixedPoints:
        w, jac = map_to_reference(problem.lower, problem.upper, grid.points)
        return cls(w, grid.weights * problem.density(w) * jac, label)


@dataclass
class AdaptiveSG:
    epsilon: float
    cap: int | tuple[int, ...] = 8
    family: RuleFamily | str = RuleFamily.GAUSS_PATTERSON
    max_evaluations: int = field(default_factory=default_max_evaluations)

    def __post_init__(self):
        self.family = RuleFamily.parse(self.family)

    @property
    def label(self) -> str:
        return f"dasg_{_short(self.family)}(eps={self.epsilon:g})"

    def config(self) -> AdaptiveConfig:
        return AdaptiveConfig(self.epsilon, self.cap, self.family, self.max_evaluations)

    def integrate(self, problem: Problem, g: WFunction) -> QuadResult:
        return adaptive_quadrature(self.config(), problem.reference_integrand(g), problem.d)

    def frozen(self, problem: Problem) -> AdaptiveSG:
        # the downset is chosen per integrand by design
        return self

    def with_epsilon(self, epsilon: float) -> AdaptiveSG:
        return AdaptiveSG(epsilon, self.cap, self.family, self.max_evaluations)


class _GridMethod:
    _cache: dict

    def _fixed(self, problem: Problem) -> FixedPoints:
        key = id(problem)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not problem:
            hit = (problem, FixedPoints.from_grid(problem, self._grid(problem.d), self.label))
            self._cache[key] = hit
        return hit[1]

    def integrate(self, problem: Problem, g: WFunction) -> QuadResult:
        return self._fixed(problem).integrate(problem, g)

    def frozen(self, problem: Problem) -> FixedPoints:
        return self._fixed(problem)


@dataclass
class SparseGrid(_GridMethod):
    level: int
    family: RuleFamily | str = RuleFamily.GAUSS_PATTERSON
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.family = RuleFamily.parse(self.family)

    @property
    def label(self) -> str:
        return f"sg_{_short(self.family)}(level={self.level})"

    def _grid(self, d: int) -> GridPointSet:
        return sparse_grid(self.family, self.level, d)


@dataclass
class ProductRule(_GridMethod):
    level: int
    family: RuleFamily | str = RuleFamily.TRAPEZOIDAL
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.family = RuleFamily.parse(self.family)

    @property
    def label(self) -> str:
        return f"product_{_short(self.family)}(level={self.level})"

    def _grid(self, d: int) -> GridPointSet:
        return product_grid(self.family, (self.level,) * d)


@dataclass
class MonteCarlo:
    """Plain Monte Carlo; every ``integrate`` call draws fresh samples."""

    n_samples: int
    seed: int = 0
    stream: int = 0
    _rng: np.random.Generator | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        self._rng = philox(self.seed, self.stream)

    @property
    def label(self) -> str:
        return f"mc(n={self.n_samples})"

    def draw(self, problem: Problem) -> FixedPoints:
        pts = problem.sample(self.n_samples, self._rng)
        return FixedPoints(pts, np.full(self.n_samples, 1.0 / self.n_samples), self.label)

    def integrate(self, problem: Problem, g: WFunction) -> QuadResult:
        return self.draw(problem).integrate(problem, g)

    def frozen(self, problem: Problem) -> FixedPoints:
        return self.draw(problem)


def monte_carlo_quadrature(f: WFunction, n_samples: int, seed: int, problem: Problem | None = None,
                           d: int | None = None, stream: int = 0) -> QuadResult:
    """``(1/n) sum_j f(w_j)`` with ``w_j`` drawn from the problem density (uniform on ``[0,1]^d`` without one)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = philox(seed, stream)
    if problem is not None:
        pts = problem.sample(n_samples, rng)
    else:
        if d is None:
            raise ValueError("either a problem or a dimension is required")
        pts = rng.random((n_samples, d))
    vals = np.asarray(f(pts), dtype=float).reshape(-1)
    return QuadResult(float(np.mean(vals)), n_samples)


def _short(family: RuleFamily) -> str:
    return {"trapezoidal": "tra", "clenshaw_curtis": "cc", "gauss_patterson": "gp"}[family.value]


METHOD_IDS = ("mc", "sg_tra", "sg_cc", "sg_gp", "dasg_tra", "dasg_cc", "dasg_gp", "product_tra", "dtom_mc")


def make_method(method: str, param: float, seed: int = 0, stream: int = 0, cap: int = 8) -> QuadratureMethod:
    """Method id plus sweep parameter (epsilon, level or sample count) to a method object."""
    if method not in METHOD_IDS:
        raise UnknownMethod(f"unknown method {method!r}; known: {', '.join(METHOD_IDS)}")
    kind, _, fam = method.partition("_")
    if kind in ("mc", "dtom"):
        return MonteCarlo(int(param), seed, stream)
    if kind == "sg":
        return SparseGrid(int(param), fam)
    if kind == "dasg":
        return AdaptiveSG(float(param), cap, fam)
    return ProductRule(int(param), fam)
