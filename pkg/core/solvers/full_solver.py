import logging
from dataclasses import dataclass
from typing import Any, Optional, Tuple, Union

import numpy as np

from ..errors import ContractViolationError, DegenerateProblemError
from ..kron_solve import RESIDUAL_TOLERANCE, assemble_vectorized, solve
from ..operators import BaseOperator
from .base_solver import (
    DEFAULT_EPS,
    DEFAULT_MAX_ITER,
    BaseSolver,
    Callback,
    ConvergenceHistory,
    StepResult,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FullState:
    phi: np.ndarray
    k: float


class FullPowerIteration(BaseSolver):
    """
    Dense inverse power iteration on the full N_x x G flux.

    The loss operator never changes, so it is flattened and factorized once.
    """

    def __init__(self, operator: BaseOperator, init: Union[str, np.ndarray] = "ones",
                 eps: float = DEFAULT_EPS, max_iter: int = DEFAULT_MAX_ITER,
                 backend: str = "auto", residual_tol: float = RESIDUAL_TOLERANCE,
                 callback: Optional[Callback] = None):
        super().__init__(operator, "Full", eps=eps, max_iter=max_iter, callback=callback)
        self.init = init
        self.residual_tol = residual_tol
        self.lhs = assemble_vectorized(operator.lhs_system(), backend)
        logger.info(f"Loss operator factorized ({self.lhs.backend}, size {self.lhs.size})")

    def initial_state(self) -> np.ndarray:
        if isinstance(self.init, str):
            if self.init != "ones":
                raise ContractViolationError(f"unknown initial guess '{self.init}'")
            phi = np.ones(self.operator.shape)
        else:
            phi = self.operator.check_operand(self.init).copy()
        norm = np.linalg.norm(phi)
        if norm == 0.0:
            raise ContractViolationError("initial flux must be nonzero")
        return phi / norm

    def step(self, state: np.ndarray) -> StepResult:
        source = self.operator.apply_fission(state)
        if not np.any(source):
            raise DegenerateProblemError("fission source vanished: no fissile material reached")
        phi = solve(self.lhs, source, self.residual_tol)
        k = float(np.linalg.norm(phi))
        if k == 0.0:
            raise DegenerateProblemError("updated flux is identically zero")
        return StepResult(state=phi / k, k=k, rank=min(self.operator.shape))

    def snapshot(self, state: np.ndarray, k: float) -> FullState:
        phi = state.copy()
        phi.setflags(write=False)
        return FullState(phi=phi, k=float(k))


def full_power_iteration(operator: BaseOperator, init: Union[str, np.ndarray] = "ones",
                         eps: float = DEFAULT_EPS, max_iter: int = DEFAULT_MAX_ITER,
                         backend: str = "auto", residual_tol: float = RESIDUAL_TOLERANCE,
                         callback: Optional[Callback] = None, strict: bool = True
                         ) -> Tuple[float, np.ndarray, ConvergenceHistory]:
    """
    Solve L φ~ = F φ^n, set k = ||φ~||_F and φ^(n+1) = φ~ / k until k settles.

    Returns:
        (k_eff, normalized flux, history)
    """
    solver = FullPowerIteration(operator, init=init, eps=eps, max_iter=max_iter,
                                backend=backend, residual_tol=residual_tol, callback=callback)
    result = solver.run(strict=strict)
    return result.k_eff, result.state, result.history


def dense_update(operator: BaseOperator, phi: Any, backend: str = "auto") -> np.ndarray:
    """One unnormalized update φ~ = L^-1 F φ."""
    lhs = assemble_vectorized(operator.lhs_system(), backend)
    return solve(lhs, operator.apply_fission(phi))
