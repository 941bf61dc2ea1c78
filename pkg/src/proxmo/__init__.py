"""Proximal point method for multiobjective problems with max-of-smooth components."""

__version__ = "0.1.0"

from .criticality import h3_margin_scan, is_critical, residual, smooth_case_check
from .driver import SolverConfig, Trace, default_config, monotone_violations, solve, sublevel_entry
from .expr import Expression, eval_grad, fd_check, parse
from .hull import brute_force_min_norm, min_norm_point
from .problem import Problem, evaluate, load_problem, load_problem_file, shipped_problem
from .subproblem import ProxInstance, solve_inner, strong_convexity_probe

__all__ = [
    "Expression", "parse", "eval_grad", "fd_check",
    "Problem", "load_problem", "load_problem_file", "shipped_problem", "evaluate",
    "min_norm_point", "brute_force_min_norm",
    "ProxInstance", "solve_inner", "strong_convexity_probe",
    "SolverConfig", "Trace", "default_config", "solve", "sublevel_entry", "monotone_violations",
    "residual", "is_critical", "smooth_case_check", "h3_margin_scan",
]
