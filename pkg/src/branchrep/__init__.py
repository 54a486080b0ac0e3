"""Branching-tree Monte Carlo and deterministic oracles for Fourier-mode ODE systems."""

from __future__ import annotations

__version__ = "0.1.0"

from .modes import DomainError, TruncationBox, WeightFunction, bound_sweep, convolution_bound_check
from .models import (
    AbstractSystem, ConstructionError, build_burgers, build_ns2d_vorticity, build_scalar_quadratic_ode,
    build_single_mode, build_surface_growth, small_data_global_check, validate,
)
from .rng import RandomSource
from .trees import BudgetExceeded, count_born, simulate_tree, subtree
from .evaluate import EvaluationData, evaluate, evaluate_comparison, evaluate_pruned
from .solvers import (
    NotConverged, SchemeInstability, logistic_reference, solve_comparison, solve_mild_picard,
    solve_semi_implicit,
)
from .estimate import (
    EstimateReport, EstimationFailure, branching_property_test, estimate_comparison, estimate_mode,
    estimate_pruned, extinction_test, pruning_study,
)
