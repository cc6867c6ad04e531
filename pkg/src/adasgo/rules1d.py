"""Nested univariate quadrature rules on [-1, 1] and their surplus rules.

Three families are provided: the composite trapezoidal rule, Clenshaw-Curtis
and Gauss-Patterson.  Level 1 is always the one-point rule at the origin; for
level ``i >= 2`` trapezoidal and Clenshaw-Curtis use ``2**(i-1) + 1`` points
and Gauss-Patterson uses ``2**i - 1``.

Every node carries an integer id: its position in the finest node array of
its family.  Nested levels share ids, so tensor grids can be cached by id
tuples without any floating-point comparison.
"""

from __future__ import annotations

import enum
import functools
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import fft

from .errors import UnsupportedLevel

__all__ = [
    "RuleFamily",
    "Rule1D",
    "SurplusRule1D",
    "make_rule",
    "make_surplus",
    "polynomial_exactness_degree",
    "num_points",
    "max_level",
    "finest_nodes",
]


class RuleFamily(str, enum.Enum):
    TRAPEZOIDAL = "trapezoidal"
    CLENSHAW_CURTIS = "clenshaw_curtis"
    GAUSS_PATTERSON = "gauss_patterson"

    @classmethod
    def parse(cls, value: RuleFamily | str) -> RuleFamily:
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {
            "tra": cls.TRAPEZOIDAL,
            "trap": cls.TRAPEZOIDAL,
            "cc": cls.CLENSHAW_CURTIS,
            "gp": cls.GAUSS_PATTERSON,
            "patterson": cls.GAUSS_PATTERSON,
        }
        if key in aliases:
            return aliases[key]
        return cls(key)


# Trapezoidal/Clenshaw-Curtis levels are capped so the finest node array stays
# small (4097 points); Gauss-Patterson is limited by the tabulated constants.
_MAX_LEVEL = {
    RuleFamily.TRAPEZOIDAL: 13,
    RuleFamily.CLENSHAW_CURTIS: 13,
    RuleFamily.GAUSS_PATTERSON: 8,
}


def max_level(family: RuleFamily | str) -> int:
    return _MAX_LEVEL[RuleFamily.parse(family)]


def num_points(family: RuleFamily | str, level: int) -> int:
    family = RuleFamily.parse(family)
    _check_level(family, level)
    if level == 1:
        return 1
    if family is RuleFamily.GAUSS_PATTERSON:
        return 2**level - 1
    return 2 ** (level - 1) + 1


def _check_level(family: RuleFamily, level: int) -> None:
    if int(level) != level or level < 1:
        raise UnsupportedLevel(f"level must be a positive integer, got {level!r}")
    if level > _MAX_LEVEL[family]:
        raise UnsupportedLevel(
            f"{family.value} supports levels 1..{_MAX_LEVEL[family]}, got {level}"
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Rule1D:
    family: RuleFamily
    level: int
    nodes: np.ndarray
    weights: np.ndarray
    node_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)

    def apply(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


@dataclass(frozen=True, eq=False)
class SurplusRule1D:
    """Weights ``b`` with ``sum_j b_j f(x_j) = Q_level f - Q_{level-1} f``."""

    family: RuleFamily
    level: int
    nodes: np.ndarray
    weights: np.ndarray
    node_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)

    def apply(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


@functools.lru_cache(maxsize=None)
def _patterson_table() -> dict:
    text = resources.files("adasgo").joinpath("data/patterson.json").read_text()
    raw = json.loads(text)
    return {
        int(level): (
            np.array([float(x) for x in entry["nodes"]]),
            np.array([float(w) for w in entry["weights"]]),
        )
        for level, entry in raw["levels"].items()
    }


@functools.lru_cache(maxsize=None)
def finest_nodes(family: RuleFamily | str) -> np.ndarray:
    """Node array of the highest supported level; all levels index into it."""
    family = RuleFamily.parse(family)
    top = _MAX_LEVEL[family]
    if family is RuleFamily.GAUSS_PATTERSON:
        return _frozen(_patterson_table()[top][0])
    n = 2 ** (top - 1)
    k = np.arange(n + 1)
    if family is RuleFamily.TRAPEZOIDAL:
        x = -1.0 + 2.0 * k / n
    else:
        x = -np.cos(np.pi * k / n)
    # enforce exact symmetry and an exact zero at the centre
    x = 0.5 * (x - x[::-1])
    x[n // 2] = 0.0
    return _frozen(x)


def _node_ids(family: RuleFamily, level: int) -> np.ndarray:
    size = len(finest_nodes(family))
    if level == 1:
        return np.array([size // 2])
    top = _MAX_LEVEL[family]
    stride = 2 ** (top - level)
    if family is RuleFamily.GAUSS_PATTERSON:
        return np.arange(stride - 1, size, stride)
    return np.arange(0, size, stride)


def _clenshaw_curtis_weights(n_points: int) -> np.ndarray:
    # w_k = c_k/n (1 - sum_j b_j cos(2 j k pi/n) / (4j^2 - 1)); the sum is a type-I DCT
    n = n_points - 1
    j = np.arange(1, n // 2 + 1)
    b = np.where(j == n // 2, 1.0, 2.0)
    coef = np.zeros(n_points)
    coef[2 * j] = b / (4.0 * j**2 - 1.0)
    coef[1:-1] *= 0.5
    s = fft.dct(coef, type=1)
    c = np.full(n_points, 2.0)
    c[[0, -1]] = 1.0
    w = c / n * (1.0 - s)
    return 0.5 * (w + w[::-1])


@functools.lru_cache(maxsize=None)
def make_rule(family: RuleFamily | str, level: int) -> Rule1D:
    """Nodes and weights of the level-``level`` rule of ``family``."""
    family = RuleFamily.parse(family)
    _check_level(family, level)
    ids = _node_ids(family, level)
    nodes = finest_nodes(family)[ids]
    n = len(ids)
    if level == 1:
        weights = np.array([2.0])
    elif family is RuleFamily.TRAPEZOIDAL:
        h = 2.0 / (n - 1)
        weights = np.full(n, h)
        weights[[0, -1]] = 0.5 * h
    elif family is RuleFamily.CLENSHAW_CURTIS:
        weights = _clenshaw_curtis_weights(n)
    else:
        weights = _patterson_table()[level][1]
    return Rule1D(family, level, _frozen(nodes), _frozen(np.asarray(weights, float)), _frozen(ids))


@functools.lru_cache(maxsize=None)
def make_surplus(family: RuleFamily | str, level: int) -> SurplusRule1D:
    family = RuleFamily.parse(family)
    rule = make_rule(family, level)
    b = np.array(rule.weights)
    if level > 1:
        coarse = make_rule(family, level - 1)
        pos = np.searchsorted(rule.node_ids, coarse.node_ids)
        b[pos] -= coarse.weights
    return SurplusRule1D(family, level, rule.nodes, _frozen(b), rule.node_ids)


def polynomial_exactness_degree(family: RuleFamily | str, level: int) -> int:
    """Guaranteed degree of polynomial exactness.

    These are deliberately the conservative values: N-1 for an N-point
    Clenshaw-Curtis rule and floor((3N-1)/2) for Gauss-Patterson, although
    odd-N Clenshaw-Curtis is exact to degree N and Gauss-Patterson to
    (3N+1)/2 for N >= 3.
    """
    family = RuleFamily.parse(family)
    n = num_points(family, level)
    if family is RuleFamily.TRAPEZOIDAL:
        return 1
    if family is RuleFamily.CLENSHAW_CURTIS:
        return n - 1
    return (3 * n - 1) // 2
