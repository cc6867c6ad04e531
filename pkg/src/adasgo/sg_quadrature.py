"""Tensor surpluses, product rules and (generalised) sparse grids on [-1, 1]^d.

Integrands are vectorised: ``f(x)`` receives an ``(N, d)`` array of points and
returns ``N`` values.  All rules of one call share a :class:`SurplusEvaluator`
whose cache is keyed by node ids, so nested points are evaluated once.
"""

from __future__ import annotations

import csv
import functools
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetExceeded, DimensionMismatch, NonFiniteValue, NotADownset
from .grid_index import Downset, MultiIndex, as_index, is_downward_closed, simplex_downset
from .rules1d import RuleFamily, finest_nodes, make_rule, make_surplus, num_points

Integrand = Callable[[np.ndarray], np.ndarray]

DEFAULT_MAX_EVALUATIONS = 10**7

__all__ = [
    "Integrand",
    "GridPointSet",
    "QuadResult",
    "SurplusEvaluator",
    "default_max_evaluations",
    "tensor_surplus",
    "product_rule",
    "classical_sparse_grid",
    "downset_quadrature",
    "product_grid",
    "downset_grid",
    "sparse_grid",
    "union_point_count",
]


def default_max_evaluations() -> int:
    """Evaluation budget; ``ADASGO_MAX_EVALS`` overrides the built-in 10**7."""
    raw = os.environ.get("ADASGO_MAX_EVALS")
    return int(float(raw)) if raw else DEFAULT_MAX_EVALUATIONS


@dataclass
class GridPointSet:
    points: np.ndarray
    weights: np.ndarray
    source: str

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, f: Integrand) -> float:
        return float(np.sum(self.weights * np.asarray(f(self.points), dtype=float)))

    def to_csv(self, path) -> None:
        d = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x_{k + 1}" for k in range(d)] + ["weight"])
            for x, w in zip(self.points, self.weights):
                writer.writerow([repr(float(v)) for v in x] + [repr(float(w))])


@dataclass
class QuadResult:
    value: float
    point_count: int
    downset: Downset | None = None
    surplus_log: dict[MultiIndex, float] = field(default_factory=dict)
    truncated: bool = False
    bounds: object | None = None
    trace: list[dict] = field(default_factory=list)
    family: RuleFamily | None = None

    def grid_point_count(self) -> int:
        """Distinct points of the accepted indices (rejected probes excluded)."""
        if self.downset is None or self.family is None:
            return self.point_count
        return union_point_count(self.family, self.downset)


def _cartesian(arrays: Sequence[np.ndarray]) -> np.ndarray:
    sizes = [len(a) for a in arrays]
    total = math.prod(sizes)
    out = np.empty((total, len(arrays)), dtype=arrays[0].dtype)
    reps = total
    tile = 1
    for k, a in enumerate(arrays):
        reps //= len(a)
        out[:, k] = np.tile(np.repeat(a, reps), tile)
        tile *= len(a)
    return out


def _outer(vectors: Sequence[np.ndarray]) -> np.ndarray:
    return functools.reduce(np.multiply.outer, vectors).ravel()


def _row_keys(ids: np.ndarray) -> list[bytes]:
    ids = np.ascontiguousarray(ids, dtype=np.uint16)
    return [row.tobytes() for row in ids]


@functools.lru_cache(maxsize=65536)
def _tensor_grid(family: RuleFamily, i: MultiIndex, surplus: bool) -> tuple[np.ndarray, np.ndarray, list[bytes]]:
    make = make_surplus if surplus else make_rule
    rules = [make(family, level) for level in i]
    ids = _cartesian([r.node_ids for r in rules])
    weights = _outer([r.weights for r in rules])
    ids.setflags(write=False)
    weights.setflags(write=False)
    return ids, weights, _row_keys(ids)


class SurplusEvaluator:
    """Computes tensor surpluses of one integrand with a shared value cache."""

    def __init__(self, family: RuleFamily | str, d: int, f: Integrand, max_evaluations: int | None = None):
        self.family = RuleFamily.parse(family)
        self.d = int(d)
        self.f = f
        self.max_evaluations = default_max_evaluations() if max_evaluations is None else int(max_evaluations)
        self._nodes = np.asarray(finest_nodes(self.family))
        self._cache: dict[bytes, float] = {}

    @property
    def evaluations(self) -> int:
        return len(self._cache)

    def grid(self, i: MultiIndex, surplus: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Node ids ``(M, d)`` and weights ``(M,)`` of the tensor rule for ``i``."""
        if len(i) != self.d:
            raise DimensionMismatch(f"index {i} has dimension {len(i)}, expected {self.d}")
        ids, weights, _ = _tensor_grid(self.family, tuple(int(v) for v in i), surplus)
        return ids, weights

    def values(self, ids: np.ndarray, keys: list[bytes] | None = None) -> np.ndarray:
        if keys is None:
            keys = _row_keys(ids)
        cache = self._cache
        missing = [n for n, k in enumerate(keys) if k not in cache]
        if missing:
            # dict.fromkeys drops duplicate rows inside one request
            new_keys = list(dict.fromkeys(keys[n] for n in missing))
            if len(cache) + len(new_keys) > self.max_evaluations:
                raise BudgetExceeded(
                    f"evaluation budget {self.max_evaluations} exceeded "
                    f"({len(cache)} used, {len(new_keys)} requested)"
                )
            rows = {keys[n]: n for n in missing}
            pts = self._nodes[ids[[rows[k] for k in new_keys]]]
            vals = np.asarray(self.f(pts), dtype=float).reshape(-1)
            if vals.shape[0] != len(new_keys):
                raise DimensionMismatch("integrand returned the wrong number of values")
            if not np.all(np.isfinite(vals)):
                raise NonFiniteValue("integrand returned a non-finite value")
            cache.update(zip(new_keys, vals.tolist()))
        return np.fromiter((cache[k] for k in keys), dtype=float, count=len(keys))

    def prefetch(self, indices: Sequence[MultiIndex]) -> None:
        """Evaluate every uncached node of several surplus grids in one batch."""
        if not indices:
            return
        grids = [_tensor_grid(self.family, tuple(int(v) for v in i), True) for i in indices]
        ids = np.concatenate([g[0] for g in grids])
        keys = [k for g in grids for k in g[2]]
        self.values(ids, keys)

    def surplus(self, i: MultiIndex) -> float:
        if len(i) != self.d:
            raise DimensionMismatch(f"index {i} has dimension {len(i)}, expected {self.d}")
        ids, weights, keys = _tensor_grid(self.family, tuple(int(v) for v in i), True)
        return float(np.sum(weights * self.values(ids, keys)))


def tensor_surplus(family: RuleFamily | str, i: Sequence[int], f: Integrand) -> float:
    """``(Delta_{i_1} x ... x Delta_{i_d}) f``."""
    i = as_index(i)
    return SurplusEvaluator(family, len(i), f).surplus(i)


def _check_budget(count: int, max_evaluations: int | None) -> None:
    budget = default_max_evaluations() if max_evaluations is None else max_evaluations
    if count > budget:
        raise BudgetExceeded(f"projected {count} evaluations exceed the budget {budget}")


def product_rule(family: RuleFamily | str, cap: Sequence[int], f: Integrand,
                 max_evaluations: int | None = None) -> QuadResult:
    """Full tensor-product rule ``Q_{l_1} x ... x Q_{l_d}`` applied directly."""
    family = RuleFamily.parse(family)
    cap = as_index(cap)
    _check_budget(math.prod(num_points(family, c) for c in cap), max_evaluations)
    grid = product_grid(family, cap)
    vals = np.asarray(f(grid.points), dtype=float).reshape(-1)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteValue("integrand returned a non-finite value")
    return QuadResult(float(np.sum(grid.weights * vals)), len(grid))


def downset_quadrature(family: RuleFamily | str, downset: Downset, f: Integrand,
                       max_evaluations: int | None = None) -> QuadResult:
    """Generalised sparse grid: sum of tensor surpluses over ``downset``."""
    if not isinstance(downset, Downset):
        downset = Downset.from_members(downset)
    if not is_downward_closed(downset.members()):
        raise NotADownset("index set is not downward closed")
    ev = SurplusEvaluator(family, downset.dimension, f, max_evaluations)
    log = {i: ev.surplus(i) for i in downset}
    return QuadResult(math.fsum(log.values()), ev.evaluations, downset, log, family=ev.family)


def classical_sparse_grid(family: RuleFamily | str, level: int, d: int, f: Integrand,
                          max_evaluations: int | None = None) -> QuadResult:
    """Level-``level`` sparse grid ``sum_{|i|_1 <= level + d - 1} Delta_i f``."""
    return downset_quadrature(family, simplex_downset(level, d), f, max_evaluations)


def _merge(family: RuleFamily, ids: np.ndarray, weights: np.ndarray, source: str) -> GridPointSet:
    uniq, inverse = np.unique(ids, axis=0, return_inverse=True)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inverse.reshape(-1), weights)
    pts = np.asarray(finest_nodes(family))[uniq]
    return GridPointSet(pts, merged, source)


def product_grid(family: RuleFamily | str, cap: Sequence[int]) -> GridPointSet:
    family = RuleFamily.parse(family)
    cap = as_index(cap)
    rules = [make_rule(family, c) for c in cap]
    ids = _cartesian([r.node_ids for r in rules])
    pts = np.asarray(finest_nodes(family))[ids]
    return GridPointSet(pts, _outer([r.weights for r in rules]), f"product{cap}")


def downset_grid(family: RuleFamily | str, downset: Downset, source: str = "downset") -> GridPointSet:
    """Combined points/weights of ``sum_{i in downset} Delta_i``; weights may be negative."""
    family = RuleFamily.parse(family)
    ev = SurplusEvaluator(family, downset.dimension, lambda x: x[:, 0])
    parts = [ev.grid(i) for i in downset]
    ids = np.concatenate([p[0] for p in parts])
    weights = np.concatenate([p[1] for p in parts])
    return _merge(family, ids, weights, source)


def sparse_grid(family: RuleFamily | str, level: int, d: int) -> GridPointSet:
    return downset_grid(family, simplex_downset(level, d), f"sparse({level})")


def union_point_count(family: RuleFamily | str, downset: Downset) -> int:
    """Distinct grid points used by the tensor rules of ``downset``."""
    ev = SurplusEvaluator(family, downset.dimension, lambda x: x[:, 0])
    keys: set[bytes] = set()
    for i in downset:
        keys.update(_row_keys(ev.grid(i)[0]))
    return len(keys)

