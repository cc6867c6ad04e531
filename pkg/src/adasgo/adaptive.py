"""Dimension-adaptive sparse-grid quadrature and its error bounds.

The downset starts at ``(1, ..., 1)`` and is grown greedily: every covering
element inside the cap is probed, and the one with the largest surplus
magnitude is accepted while that magnitude is at least ``epsilon``.
"""

from __future__ import annotations

import heapq
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import BudgetExceeded
from .grid_index import Downset, MultiIndex, as_index, covering_elements, simplex_downset
from .rules1d import RuleFamily
from .sg_quadrature import Integrand, QuadResult, SurplusEvaluator, default_max_evaluations

__all__ = [
    "AdaptiveConfig",
    "ErrorBoundParams",
    "BoundBundle",
    "RhoBound",
    "adaptive_quadrature",
    "priori_bound",
    "smoothness_bound",
    "rho_bound",
    "tail_sum",
    "bound_bundle",
    "trace_to_json",
]


@dataclass(frozen=True)
class AdaptiveConfig:
    epsilon: float
    cap: tuple[int, ...] | int
    family: RuleFamily | str = RuleFamily.GAUSS_PATTERSON
    max_evaluations: int = field(default_factory=default_max_evaluations)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        object.__setattr__(self, "family", RuleFamily.parse(self.family))
        if not isinstance(self.cap, int):
            object.__setattr__(self, "cap", as_index(self.cap))
        elif self.cap < 1:
            raise ValueError("cap must be >= 1")

    def cap_for(self, d: int) -> tuple[int, ...]:
        if isinstance(self.cap, int):
            return (self.cap,) * d
        if len(self.cap) != d:
            raise ValueError(f"cap {self.cap} does not match dimension {d}")
        return self.cap


@dataclass(frozen=True)
class ErrorBoundParams:
    """Smoothness data for the surplus-decay bounds.

    ``gamma_r`` is the 1D Peano-kernel constant and ``f_norm`` the mixed
    smoothness norm; both are user-supplied, nothing here estimates them.
    """

    r: int = 2
    gamma_r: float = 1.0
    f_norm: float = 1.0
    rho: float | None = None

    @property
    def surplus_constant(self) -> float:
        """``gamma_r (1 + 2**r)`` per dimension; raise to the d-th power."""
        return self.gamma_r * (1.0 + 2.0**self.r)


@dataclass(frozen=True)
class BoundBundle:
    priori: float
    posteriori: float
    smoothness: float
    rho_form: float
    rho_min: float
    card_L: int
    card_L_zero_origin: int
    card_I: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class RhoBound(NamedTuple):
    bound: float
    rho_min: float
    m: MultiIndex | None


def priori_bound(card_L: int, card_I: int, epsilon: float) -> tuple[float, float]:
    """``(|L| eps, (|L| - |I|) eps)``."""
    if card_I > card_L:
        raise ValueError("|I| cannot exceed |L|")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return card_L * epsilon, (card_L - card_I) * epsilon


def _box(L) -> tuple[int, ...]:
    return L.cap if isinstance(L, Downset) else as_index(L)


def _difference(L, I: Downset) -> list[MultiIndex] | None:
    """Explicit ``L \\ I`` when ``L`` is an enumerated downset, else ``None``."""
    if isinstance(L, Downset):
        return sorted(L.members() - I.members())
    return None


def tail_sum(cap: Sequence[int], I: Downset, r: int) -> float:
    """``sum_{i <= cap, i not in I} 2**(-r |i|_1)`` without enumerating the box."""
    q = 2.0 ** (-r)
    full = math.prod(q * (1 - q**c) / (1 - q) for c in cap)
    inside = math.fsum(2.0 ** (-r * sum(i)) for i in I if all(a <= b for a, b in zip(i, cap)))
    return max(full - inside, 0.0)


def smoothness_bound(L, I: Downset, params: ErrorBoundParams) -> float:
    """``gamma_r^d (1 + 2^r)^d ||f|| sum_{L \\ I} 2^{-r|i|}``.

    ``L`` is either an enumerated :class:`Downset` or a cap tuple (full box).
    """
    d = I.dimension
    diff = _difference(L, I)
    if diff is None:
        tail = tail_sum(_box(L), I, params.r)
    else:
        tail = math.fsum(2.0 ** (-params.r * sum(i)) for i in diff)
    return params.surplus_constant**d * params.f_norm * tail


def _min_norm_missing(L, I: Downset) -> MultiIndex | None:
    diff = _difference(L, I)
    if diff is not None:
        return min(diff, key=lambda i: (sum(i), i)) if diff else None
    # a minimiser of |i|_1 over the box minus I always covers I
    cand = covering_elements(_with_cap(I, _box(L)))
    return min(cand, key=lambda i: (sum(i), i)) if cand else None


def _with_cap(I: Downset, cap) -> Downset:
    if I.cap == tuple(cap):
        return I
    out = Downset(cap)
    for i in I:
        out.add(i)
    return out


def rho_bound(L, I: Downset, epsilon: float, r: int, rho: float | None = None) -> RhoBound:
    """``(eps / rho) sum_{L \\ I} 2^{r(|m| - |i|)}`` with ``m`` of minimal norm in ``L \\ I``.

    ``rho=None`` uses ``rho_min``, for which the bound reduces to
    ``(|L| - |I|) eps``.
    """
    m = _min_norm_missing(L, I)
    if m is None:
        return RhoBound(0.0, math.nan, None)
    diff = _difference(L, I)
    if diff is not None:
        s = math.fsum(2.0 ** (r * (sum(m) - sum(i))) for i in diff)
        n_missing = len(diff)
    else:
        s = 2.0 ** (r * sum(m)) * tail_sum(_box(L), I, r)
        n_missing = math.prod(_box(L)) - len(I)
    rho_min = s / n_missing
    if rho is None:
        rho = rho_min
    elif not (rho_min * (1 - 1e-12) <= rho < 2.0**r):
        warnings.warn(f"rho={rho} outside [rho_min={rho_min:.6g}, 2^r={2.0 ** r})", stacklevel=2)
    return RhoBound(epsilon / rho * s, rho_min, m)


def bound_bundle(cap: Sequence[int], I: Downset, epsilon: float, params: ErrorBoundParams) -> BoundBundle:
    cap = as_index(cap)
    card_L = math.prod(cap)
    priori, posteriori = priori_bound(card_L, len(I), epsilon)
    rb = rho_bound(cap, I, epsilon, params.r, params.rho)
    return BoundBundle(
        priori=priori,
        posteriori=posteriori,
        smoothness=smoothness_bound(cap, I, params),
        rho_form=rb.bound,
        rho_min=rb.rho_min,
        card_L=card_L,
        card_L_zero_origin=math.prod(c + 1 for c in cap),
        card_I=len(I),
    )


def _successors_in_cap(i: MultiIndex, cap: MultiIndex):
    for k, v in enumerate(i):
        if v < cap[k]:
            yield i[:k] + (v + 1,) + i[k + 1 :]


def adaptive_quadrature(cfg: AdaptiveConfig, f: Integrand, d: int | None = None,
                        params: ErrorBoundParams | None = None) -> QuadResult:
    """Dimension-adaptive quadrature of ``f`` over ``[-1, 1]^d``.

    Returns the accepted downset, per-index surpluses, the bound bundle and a
    trace of accepted indices.  Hitting ``cfg.max_evaluations`` stops the
    refinement and flags the result as truncated instead of raising.
    """
    if d is None:
        if isinstance(cfg.cap, int):
            raise ValueError("dimension is required when the cap is a scalar")
        d = len(cfg.cap)
    cap = cfg.cap_for(d)
    ev = SurplusEvaluator(cfg.family, d, f, cfg.max_evaluations)
    downset = Downset(cap)
    one = (1,) * d
    log: dict[MultiIndex, float] = {one: ev.surplus(one)}
    downset.add(one)
    trace = [{"index": list(one), "surplus": log[one], "value": log[one], "points": ev.evaluations}]
    heap: list[tuple[float, MultiIndex, float]] = []
    probed: dict[MultiIndex, float] = {}
    truncated = False
    newest = one
    while True:
        fresh = [
            j for j in _successors_in_cap(newest, cap)
            if j not in probed and j not in downset
            and all(j[:k] + (v - 1,) + j[k + 1 :] in downset for k, v in enumerate(j) if v > 1)
        ]
        try:
            ev.prefetch(fresh)
            for j in fresh:
                s = ev.surplus(j)
                probed[j] = s
                heapq.heappush(heap, (-abs(s), j, s))
        except BudgetExceeded as exc:
            truncated = True
            warnings.warn(f"adaptive quadrature truncated: {exc}", stacklevel=2)
            break
        if not heap or -heap[0][0] < cfg.epsilon:
            break
        _, newest, s = heapq.heappop(heap)
        downset.add(newest)
        log[newest] = s
        trace.append({
            "index": list(newest),
            "surplus": s,
            "value": math.fsum(log.values()),
            "points": ev.evaluations,
        })

    if params is None:
        params = ErrorBoundParams(f_norm=_estimate_norm(ev, d))
    bounds = bound_bundle(cap, downset, cfg.epsilon, params)
    result = QuadResult(
        value=math.fsum(log.values()),
        point_count=ev.evaluations,
        downset=downset,
        surplus_log=log,
        truncated=truncated,
        bounds=bounds,
        trace=trace,
        family=ev.family,
    )
    result.probes = {k: v for k, v in probed.items() if k not in downset}  # type: ignore[attr-defined]
    return result


def _estimate_norm(ev: SurplusEvaluator, d: int) -> float:
    """max |f| over the level-2 classical sparse grid."""
    ids = np.concatenate([ev.grid(i, surplus=False)[0] for i in simplex_downset(2, d)])
    try:
        vals = ev.values(ids)
    except BudgetExceeded:
        vals = np.array(list(ev._cache.values()) or [1.0])
    return float(np.max(np.abs(vals))) or 1.0


def trace_to_json(result: QuadResult) -> str:
    return json.dumps(result.trace)
