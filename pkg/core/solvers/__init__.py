"""
Inverse power iterations: the shared loop, the dense iteration and the low-rank variants.
"""

from .base_solver import BaseSolver, ConvergenceHistory, SolveResult, StepResult
from .dlra_solver import (
    AdaptiveDLRAPowerIteration,
    DLRAPowerIteration,
    dlra_power_iteration,
    dlra_power_iteration_adaptive,
    k_step,
    l_step,
    s_step,
)
from .full_solver import FullPowerIteration, dense_update, full_power_iteration

__all__ = ["BaseSolver", "ConvergenceHistory", "SolveResult", "StepResult",
           "FullPowerIteration", "full_power_iteration", "dense_update",
           "DLRAPowerIteration", "AdaptiveDLRAPowerIteration", "dlra_power_iteration",
           "dlra_power_iteration_adaptive", "k_step", "l_step", "s_step"]
