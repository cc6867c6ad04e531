"""Breakdown diagnostics and the surrogate-trend stopping rule.

``breakdown_check`` compares an estimate of the gradient error against
``||G|| / (1 + kappa)``.  The trend rule watches a higher-accuracy probe
``F_{eps'}(u_p)`` and stops at the first non-improvement, returning the best
iterate seen so far.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateFit, MissingEstimate

__all__ = [
    "BreakdownInputs",
    "breakdown_check",
    "assemble_error_estimate",
    "Decision",
    "TrendMonitor",
    "trend_stop",
    "QuadraticFit",
    "quadratic_fit",
    "tau_proxy",
    "replay",
]


@dataclass(frozen=True)
class BreakdownInputs:
    grad_norm: float
    kappa: float
    error_estimate: float | None = None
    K1: Sequence[float] | None = None
    K2: Sequence[float] | None = None
    K3: Sequence[float] | None = None
    h: float = 0.0
    r: int = 2
    level: int = 1
    downset_terms: Sequence[float] | float | None = None

    def __post_init__(self):
        if self.grad_norm < 0:
            raise ValueError("grad_norm must be non-negative")
        if self.kappa < 1:
            raise ValueError("a condition number is at least 1")


def assemble_error_estimate(K1, K2, K3, h: float, r: int, level: int, downset_terms=None) -> float:
    """``||E1|| + ||E2||`` with ``E1_q = K1_q h`` and ``E2_q = K2_q 2^{-l r} + K3_q T_q``.

    ``downset_terms`` is either one tail sum shared by every component or one
    per component (gradient components with their own downsets).  It may be a
    plain ``sum 2^{-r|i|}`` or the rho-form bound from :mod:`adasgo.adaptive`.
    """
    K1 = np.atleast_1d(np.asarray(K1, dtype=float))
    K2 = np.atleast_1d(np.asarray(K2, dtype=float))
    K3 = np.atleast_1d(np.asarray(K3, dtype=float))
    if min(K1.min(), K2.min(), K3.min()) < 0:
        raise ValueError("constants must be non-negative")
    terms = np.zeros_like(K3) if downset_terms is None else np.broadcast_to(
        np.asarray(downset_terms, dtype=float), K3.shape)
    e1 = K1 * h
    e2 = K2 * 2.0 ** (-level * r) + K3 * terms
    return float(np.linalg.norm(e1) + np.linalg.norm(e2))


def breakdown_check(inputs: BreakdownInputs) -> bool:
    """True when the gradient error may be too large for Newton-type convergence."""
    est = inputs.error_estimate
    if est is None:
        if inputs.K1 is None or inputs.K2 is None or inputs.K3 is None:
            raise MissingEstimate("need either error_estimate or all of K1, K2, K3")
        est = assemble_error_estimate(inputs.K1, inputs.K2, inputs.K3, inputs.h, inputs.r,
                                      inputs.level, inputs.downset_terms)
    return est > inputs.grad_norm / (1.0 + inputs.kappa)


@dataclass(frozen=True)
class Decision:
    stop: bool
    at_iteration: int | None = None

    def __str__(self) -> str:
        return f"Stop(at_iteration={self.at_iteration})" if self.stop else "Continue"


CONTINUE = Decision(False)


@dataclass
class TrendMonitor:
    """Append-only history of probe values with a non-improvement counter."""

    probe_epsilon: float | None = None
    patience: int = 1
    history: list[float] = field(default_factory=list)
    _strikes: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.history))

    def update(self, value: float) -> Decision:
        return trend_stop(self, value)


def trend_stop(monitor: TrendMonitor, new_value: float) -> Decision:
    if not math.isfinite(new_value):
        raise ValueError("probe value must be finite")
    h = monitor.history
    if h and new_value >= h[-1]:
        monitor._strikes += 1
    else:
        monitor._strikes = 0
    h.append(float(new_value))
    if monitor._strikes >= monitor.patience:
        return Decision(True, monitor.best_index)
    return CONTINUE


def replay(values: Sequence[float], patience: int = 1) -> Decision:
    """Feed a whole history through a fresh monitor; first Stop wins."""
    mon = TrendMonitor(patience=patience)
    for v in values:
        dec = mon.update(v)
        if dec.stop:
            return dec
    return CONTINUE


@dataclass(frozen=True)
class QuadraticFit:
    a: float
    b: float
    c: float
    residual: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * x * x + self.b * x + self.c


def quadratic_fit(points: Sequence[tuple[float, float]]) -> QuadraticFit:
    """Least-squares ``y ~ a x^2 + b x + c``; ``residual`` is the RMS misfit."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise DegenerateFit("need at least three points")
    x, y = pts[:, 0], pts[:, 1]
    if np.ptp(x) == 0:
        raise DegenerateFit("all abscissae are equal")
    V = np.vander(x, 3)
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    res = float(np.sqrt(np.mean((V @ coef - y) ** 2)))
    return QuadraticFit(float(coef[0]), float(coef[1]), float(coef[2]), res)


def tau_proxy(A: np.ndarray, H_fine: np.ndarray) -> float:
    """Heuristic ``||A^{-1} H_fine - I||_2`` with ``H_fine`` from a finer quadrature."""
    A = np.atleast_2d(A)
    H_fine = np.atleast_2d(H_fine)
    return float(np.linalg.norm(np.linalg.solve(A, H_fine) - np.eye(len(A)), 2))
