"""Optimise-then-discretise stochastic optimisation with dimension-adaptive sparse grids."""

from .adaptive import AdaptiveConfig, ErrorBoundParams, adaptive_quadrature
from .experiments import ExperimentSpec, run_experiment, stopping_study
from .grid_index import Downset, covering_elements, full_box, is_covering_element
from .methods import AdaptiveSG, FixedPoints, MonteCarlo, ProductRule, SparseGrid, make_method, monte_carlo_quadrature
from .problems import additive_problem, get_problem, lq_control_problem, toy_problem
from .rules1d import RuleFamily, make_rule, make_surplus
from .sg_quadrature import classical_sparse_grid, downset_quadrature, product_rule, tensor_surplus
from .solver import DerivativeScheme, SolverConfig, bfgs_solve, newton_solve, projected_bfgs_solve, solve

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "ErrorBoundParams",
    "adaptive_quadrature",
    "ExperimentSpec",
    "run_experiment",
    "stopping_study",
    "Downset",
    "covering_elements",
    "full_box",
    "is_covering_element",
    "AdaptiveSG",
    "FixedPoints",
    "MonteCarlo",
    "ProductRule",
    "SparseGrid",
    "make_method",
    "monte_carlo_quadrature",
    "additive_problem",
    "get_problem",
    "lq_control_problem",
    "toy_problem",
    "RuleFamily",
    "make_rule",
    "make_surplus",
    "classical_sparse_grid",
    "downset_quadrature",
    "product_rule",
    "tensor_surplus",
    "DerivativeScheme",
    "SolverConfig",
    "bfgs_solve",
    "newton_solve",
    "projected_bfgs_solve",
    "solve",
]
