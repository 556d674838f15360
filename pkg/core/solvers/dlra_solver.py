import logging
from typing import Optional, Tuple

import numpy as np

from ..errors import ConfigurationError, DegenerateProblemError, RankDeficiencyError
from ..kron_solve import RESIDUAL_TOLERANCE, MultiTermSystem, solve_system
from ..lowrank import (
    ORTHONORMALITY_INVARIANT,
    LowRankState,
    ProjectedCoefficients,
    check_orthonormal,
    project_energy,
    project_space,
    qr_positive,
    truncate,
)
from ..operators import BaseOperator
from .base_solver import (
    DEFAULT_EPS,
    DEFAULT_MAX_ITER,
    BaseSolver,
    Callback,
    ConvergenceHistory,
    SolveResult,
    StepResult,
)

logger = logging.getLogger(__name__)

DEFAULT_THETA = 1e-6
DEFAULT_R_MIN = 2


def initial_low_rank_state(operator: BaseOperator, rank: int, seed: int = 0) -> LowRankState:
    """
    Deterministic rank-r start: X opens with the constant vector, W with the
    operator's preferred energy vector (the fission spectrum for diffusion
    problems), both completed by seeded Gaussian columns; S = I / sqrt(r).
    """
    n_space, n_energy = operator.shape
    max_rank = min(n_space, n_energy)
    if isinstance(rank, bool) or not isinstance(rank, (int, np.integer)) \
            or not 1 <= rank <= max_rank:
        raise ConfigurationError(f"rank must be an integer in [1, {max_rank}], got {rank!r}",
                                 "solver.rank")
    rng = np.random.default_rng(seed)

    space = operator.initial_space_vector()
    energy = operator.initial_energy_vector()
    x0 = np.column_stack([space / np.linalg.norm(space),
                          rng.standard_normal((n_space, rank - 1))])
    w0 = np.column_stack([energy / np.linalg.norm(energy),
                          rng.standard_normal((n_energy, rank - 1))])
    x_basis, _ = qr_positive(x0)
    w_basis, _ = qr_positive(w0)
    return LowRankState(x_basis=x_basis, coeff=np.eye(rank) / np.sqrt(rank), w_basis=w_basis)


def _solve_k(operator: BaseOperator, state: LowRankState, energy_hats: ProjectedCoefficients,
             backend: str, residual_tol: float) -> np.ndarray:
    rank = state.rank
    system = MultiTermSystem.from_terms(
        [(t.spatial, energy_hats.m_hat[t.key]) for t in operator.leakage_terms()],
        [(t.spatial, energy_hats.sigma_hat[t.key]) for t in operator.collision_terms()],
        operator.n_space, rank)
    k_factor = state.x_basis @ state.coeff
    rhs = np.zeros((operator.n_space, rank))
    for t in operator.fission_terms():
        rhs += np.asarray(t.spatial @ k_factor) @ energy_hats.sigma_f_hat[t.key]
    if not np.any(rhs):
        raise RankDeficiencyError("K-step source vanished: fission term is zero on the current basis")
    k_new = solve_system(system, rhs, backend, residual_tol)
    if not np.any(k_new):
        raise RankDeficiencyError("K-step produced a zero factor")
    return k_new


def _solve_l(operator: BaseOperator, state: LowRankState, space_hats: ProjectedCoefficients,
             backend: str, residual_tol: float) -> np.ndarray:
    """Solve the L-step for L^T (G x r); energy factors enter transposed."""
    rank = state.rank
    system = MultiTermSystem.from_terms(
        [(np.asarray(t.energy).T, space_hats.d_hat[t.key].T) for t in operator.leakage_terms()],
        [(np.asarray(t.energy).T, space_hats.rho_hat[t.key].T)
         for t in operator.collision_terms()],
        operator.n_energy, rank)
    l_transposed = state.w_basis @ state.coeff.T
    rhs = np.zeros((operator.n_energy, rank))
    for t in operator.fission_terms():
        rhs += np.asarray(t.energy).T @ l_transposed @ space_hats.rho_f_hat[t.key].T
    if not np.any(rhs):
        raise RankDeficiencyError("L-step source vanished: fission term is zero on the current basis")
    l_new = solve_system(system, rhs, backend, residual_tol)
    if not np.any(l_new):
        raise RankDeficiencyError("L-step produced a zero factor")
    return l_new


def k_step(operator: BaseOperator, state: LowRankState,
           energy_hats: Optional[ProjectedCoefficients] = None, backend: str = "auto",
           residual_tol: float = RESIDUAL_TOLERANCE) -> Tuple[np.ndarray, np.ndarray]:
    """
    Update the spatial basis.

    Solves -Σ D K M^ + Σ ρ K Σ^ = Σ ρ (X S) Σf^ for K (N_x x r) and
    orthonormalizes it.

    Returns:
        (X^(n+1), N_x = X^(n+1)^T X^n)
    """
    if energy_hats is None:
        energy_hats = project_energy(operator, state.w_basis)
    k_new = _solve_k(operator, state, energy_hats, backend, residual_tol)
    x_new, _ = qr_positive(k_new)
    return x_new, x_new.T @ state.x_basis


def l_step(operator: BaseOperator, state: LowRankState,
           space_hats: Optional[ProjectedCoefficients] = None, backend: str = "auto",
           residual_tol: float = RESIDUAL_TOLERANCE) -> Tuple[np.ndarray, np.ndarray]:
    """
    Update the energy basis.

    Returns:
        (W^(n+1), N_E = W^(n+1)^T W^n)
    """
    if space_hats is None:
        space_hats = project_space(operator, state.x_basis)
    l_new = _solve_l(operator, state, space_hats, backend, residual_tol)
    w_new, _ = qr_positive(l_new)
    return w_new, w_new.T @ state.w_basis


def s_step(operator: BaseOperator, x_new: np.ndarray, w_new: np.ndarray, s_init: np.ndarray,
           hats: Optional[ProjectedCoefficients] = None, backend: str = "auto",
           residual_tol: float = RESIDUAL_TOLERANCE) -> np.ndarray:
    """
    Galerkin update of the coefficient matrix on the new bases.

    Args:
        s_init: N_x S^n N_E^T, the previous coefficients in the new bases
        hats: Projections at (x_new, w_new); computed when omitted

    Returns:
        The unnormalized coefficient matrix S~
    """
    if hats is None:
        hats = project_energy(operator, w_new).combine(project_space(operator, x_new))
    n, m = x_new.shape[1], w_new.shape[1]
    s_init = np.asarray(s_init, dtype=float)
    system = MultiTermSystem.from_terms(
        [(hats.d_hat[t.key], hats.m_hat[t.key]) for t in operator.leakage_terms()],
        [(hats.rho_hat[t.key], hats.sigma_hat[t.key]) for t in operator.collision_terms()],
        n, m)
    rhs = np.zeros((n, m))
    for t in operator.fission_terms():
        rhs += hats.rho_f_hat[t.key] @ s_init @ hats.sigma_f_hat[t.key]
    return solve_system(system, rhs, backend, residual_tol)


class DLRAPowerIteration(BaseSolver):
    """
    Fixed-rank low-rank inverse power iteration (K-step, L-step, Galerkin S-step).

    Projections onto a basis are cached so the hats of W^(n+1) built for the
    S-step are reused by the next K-step.
    """

    def __init__(self, operator: BaseOperator, rank: Optional[int] = None,
                 init: Optional[LowRankState] = None, seed: int = 0,
                 eps: float = DEFAULT_EPS, max_iter: int = DEFAULT_MAX_ITER,
                 backend: str = "auto", residual_tol: float = RESIDUAL_TOLERANCE,
                 callback: Optional[Callback] = None, name: str = "DLRA"):
        super().__init__(operator, name, eps=eps, max_iter=max_iter, callback=callback)
        if init is None and rank is None:
            raise ConfigurationError("rank required for low-rank iterations", "solver.rank")
        if init is not None:
            if init.shape != operator.shape:
                raise ConfigurationError(
                    f"initial state has shape {init.shape}, operator {operator.shape}")
            check_orthonormal(init.x_basis, "initial spatial")
            check_orthonormal(init.w_basis, "initial energy")
        self.rank = init.rank if init is not None else int(rank)
        self.init = init
        self.seed = seed
        self.backend = backend
        self.residual_tol = residual_tol
        self._energy_cache: Optional[tuple] = None
        self._space_cache: Optional[tuple] = None

    def initial_state(self) -> LowRankState:
        if self.init is not None:
            return self.init
        return initial_low_rank_state(self.operator, self.rank, self.seed)

    def energy_hats(self, w_basis: np.ndarray) -> ProjectedCoefficients:
        if self._energy_cache is None or self._energy_cache[0] is not w_basis:
            self._energy_cache = (w_basis, project_energy(self.operator, w_basis))
        return self._energy_cache[1]

    def space_hats(self, x_basis: np.ndarray) -> ProjectedCoefficients:
        if self._space_cache is None or self._space_cache[0] is not x_basis:
            self._space_cache = (x_basis, project_space(self.operator, x_basis))
        return self._space_cache[1]

    def _galerkin(self, x_basis: np.ndarray, w_basis: np.ndarray, s_init: np.ndarray) -> np.ndarray:
        hats = self.energy_hats(w_basis).combine(self.space_hats(x_basis))
        return s_step(self.operator, x_basis, w_basis, s_init, hats, self.backend,
                      self.residual_tol)

    def step(self, state: LowRankState) -> StepResult:
        x_new, n_x = k_step(self.operator, state, self.energy_hats(state.w_basis),
                            self.backend, self.residual_tol)
        w_new, n_e = l_step(self.operator, state, self.space_hats(state.x_basis),
                            self.backend, self.residual_tol)
        x_new.setflags(write=False)
        w_new.setflags(write=False)
        s_tilde = self._galerkin(x_new, w_new, n_x @ state.coeff @ n_e.T)
        k = float(np.linalg.norm(s_tilde))
        if k == 0.0:
            raise DegenerateProblemError("S-step produced a zero coefficient matrix")
        return StepResult(state=LowRankState(x_basis=x_new, coeff=s_tilde / k, w_basis=w_new),
                          k=k, rank=state.rank)

    def run(self, init: Optional[LowRankState] = None, strict: bool = True) -> SolveResult:
        result = super().run(init=init, strict=strict)
        check_orthonormal(result.state.x_basis, "spatial", ORTHONORMALITY_INVARIANT)
        check_orthonormal(result.state.w_basis, "energy", ORTHONORMALITY_INVARIANT)
        return result


class AdaptiveDLRAPowerIteration(DLRAPowerIteration):
    """
    Rank-adaptive variant: bases are augmented with the previous ones,
    the S-step runs at (up to) twice the rank and an SVD truncation with
    tolerance theta picks the next rank.
    """

    def __init__(self, operator: BaseOperator, rank: Optional[int] = None,
                 init: Optional[LowRankState] = None, seed: int = 0,
                 eps: float = DEFAULT_EPS, max_iter: int = DEFAULT_MAX_ITER,
                 theta: float = DEFAULT_THETA, theta_relative: bool = True,
                 r_min: int = DEFAULT_R_MIN, r_max: Optional[int] = None,
                 backend: str = "auto", residual_tol: float = RESIDUAL_TOLERANCE,
                 callback: Optional[Callback] = None):
        if init is None and rank is None:
            rank = max(1, min(int(r_min), min(operator.shape) if r_max is None else int(r_max)))
        super().__init__(operator, rank=rank, init=init, seed=seed, eps=eps, max_iter=max_iter,
                         backend=backend, residual_tol=residual_tol, callback=callback,
                         name="Adaptive DLRA")
        max_rank = min(operator.shape)
        r_max = max_rank if r_max is None else int(r_max)
        if not theta >= 0.0:
            raise ConfigurationError(f"theta must be non-negative, got {theta}", "solver.theta")
        if r_min < 1:
            raise ConfigurationError(f"r_min must be at least 1, got {r_min}", "solver.r_min")
        if not 1 <= r_max <= max_rank:
            raise ConfigurationError(f"r_max must lie in [1, {max_rank}], got {r_max}",
                                     "solver.r_max")
        if self.rank > r_max:
            raise ConfigurationError(f"initial rank {self.rank} exceeds r_max {r_max}",
                                     "solver.rank")
        self.theta = float(theta)
        self.theta_relative = theta_relative
        self.r_min = min(int(r_min), r_max)
        self.r_max = r_max

    def step(self, state: LowRankState) -> StepResult:
        k_new = _solve_k(self.operator, state, self.energy_hats(state.w_basis),
                         self.backend, self.residual_tol)
        l_new = _solve_l(self.operator, state, self.space_hats(state.x_basis),
                         self.backend, self.residual_tol)
        x_hat, _ = qr_positive(np.hstack([k_new, state.x_basis]))
        w_hat, _ = qr_positive(np.hstack([l_new, state.w_basis]))
        x_hat.setflags(write=False)
        w_hat.setflags(write=False)

        s_init = (x_hat.T @ state.x_basis) @ state.coeff @ (w_hat.T @ state.w_basis).T
        s_hat = self._galerkin(x_hat, w_hat, s_init)

        tolerance = self.theta * np.linalg.norm(s_hat) if self.theta_relative else self.theta
        truncation = truncate(s_hat, tolerance, self.r_min, self.r_max)
        k = float(np.linalg.norm(truncation.sigma1))
        if k == 0.0:
            raise DegenerateProblemError("S-step produced a zero coefficient matrix")
        logger.debug(f"Truncated {s_hat.shape} to rank {truncation.rank}, "
                     f"discarded {truncation.discarded:.3e} (tolerance {tolerance:.3e})")
        new_state = LowRankState(
            x_basis=x_hat @ truncation.p1,
            coeff=truncation.sigma1 / k,
            w_basis=w_hat @ truncation.q1,
        )
        return StepResult(state=new_state, k=k, rank=truncation.rank,
                          discarded=truncation.discarded)


def dlra_power_iteration(operator: BaseOperator, rank: Optional[int] = None,
                         init: Optional[LowRankState] = None, eps: float = DEFAULT_EPS,
                         max_iter: int = DEFAULT_MAX_ITER, seed: int = 0,
                         backend: str = "auto", residual_tol: float = RESIDUAL_TOLERANCE,
                         callback: Optional[Callback] = None, strict: bool = True
                         ) -> Tuple[float, LowRankState, ConvergenceHistory]:
    """Fixed-rank low-rank power iteration; returns (k_eff, state, history)."""
    solver = DLRAPowerIteration(operator, rank=rank, init=init, seed=seed, eps=eps,
                                max_iter=max_iter, backend=backend, residual_tol=residual_tol,
                                callback=callback)
    result = solver.run(strict=strict)
    return result.k_eff, result.state, result.history


def dlra_power_iteration_adaptive(operator: BaseOperator, rank: Optional[int] = None,
                                  init: Optional[LowRankState] = None, eps: float = DEFAULT_EPS,
                                  theta: float = DEFAULT_THETA, r_min: int = DEFAULT_R_MIN,
                                  r_max: Optional[int] = None,
                                  max_iter: int = DEFAULT_MAX_ITER, seed: int = 0,
                                  theta_relative: bool = True, backend: str = "auto",
                                  residual_tol: float = RESIDUAL_TOLERANCE,
                                  callback: Optional[Callback] = None, strict: bool = True
                                  ) -> Tuple[float, LowRankState, ConvergenceHistory]:
    """Rank-adaptive low-rank power iteration; ``history.ranks`` holds the rank trace."""
    solver = AdaptiveDLRAPowerIteration(operator, rank=rank, init=init, seed=seed, eps=eps,
                                        max_iter=max_iter, theta=theta,
                                        theta_relative=theta_relative, r_min=r_min,
                                        r_max=r_max, backend=backend,
                                        residual_tol=residual_tol, callback=callback)
    result = solver.run(strict=strict)
    return result.k_eff, result.state, result.history
