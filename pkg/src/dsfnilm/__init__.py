"""Multi-line energy disaggregation as a difference of submodular functions."""

from .setfn import (
    AggregateSeries,
    ApplianceModel,
    HouseholdModel,
    ProblemInstance,
    StateAssignment,
    build_instance,
    eval_residual_cost,
    eval_set_cost,
    is_submodular_bruteforce,
)
from .solver import SolverOptions, SolveTrace, disaggregate, modular_minimize, solve

__all__ = [
    "AggregateSeries",
    "ApplianceModel",
    "HouseholdModel",
    "ProblemInstance",
    "StateAssignment",
    "SolverOptions",
    "SolveTrace",
    "build_instance",
    "disaggregate",
    "eval_residual_cost",
    "eval_set_cost",
    "is_submodular_bruteforce",
    "modular_minimize",
    "solve",
]
