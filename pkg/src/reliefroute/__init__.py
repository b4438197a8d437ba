"""Relief routing toolkit: heuristic solver, validator, exact oracle and MILP export."""

from .instance import Instance, load_instance, parse_instance, validate_instance
from .solver import SolverParams, solve
from .validation import causality_check, check_all, validate_solution

__all__ = [
    "Instance",
    "SolverParams",
    "causality_check",
    "check_all",
    "load_instance",
    "parse_instance",
    "solve",
    "validate_instance",
    "validate_solution",
]
