"""Meromorphic functions described by their poles."""
from .evaluation import (EvalResult, evaluate, evaluate_derivative, evaluate_many,
                         evaluate_with_bound, local_eval, remainder_bound)
from .families import (custom, gamma_poles, lattice_exp, lattice_power, lattice_start_index,
                       log_poles, make_family, read_pole_csv, single_pole, write_pole_csv)
from .inverse import (KOEBE_K, base_radius, derivative_comparison_stats, inverse_branch,
                      inverse_branch_offset, inverse_branches, local_coeff_check,
                      pole_neighborhood, solve_offsets)
from .model import DiskBracket, LocalModel, PoleDatum, PoleField
from .tails import Decision, TailModel

__all__ = [
    "Decision", "DiskBracket", "EvalResult", "KOEBE_K", "LocalModel", "PoleDatum",
    "PoleField", "TailModel", "base_radius", "custom", "derivative_comparison_stats",
    "evaluate", "evaluate_derivative", "evaluate_many", "evaluate_with_bound",
    "gamma_poles", "inverse_branch", "inverse_branch_offset", "inverse_branches",
    "lattice_exp", "lattice_power", "lattice_start_index", "local_coeff_check",
    "local_eval", "log_poles", "make_family", "pole_neighborhood", "read_pole_csv",
    "remainder_bound", "single_pole", "solve_offsets", "write_pole_csv",
]
