"""
Two-sided model eigenproblems A φ B = λ C φ D with prescribed spectra.

With Ĉ = A^-1 C and D̂ = D B^-1 the power iteration is φ -> Ĉ φ D̂, so k
converges to λ1·σ1 and the flux to v1 u1^T, where v1 is the dominant
eigenvector of Ĉ and u1 the dominant eigenvector of D̂^T. Both power
iterations run on these problems unchanged, which makes the convergence
rates of the low-rank iteration measurable against the spectral ratios.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from .errors import ConfigurationError, ConstructionError, MeasurementError
from .lowrank import LowRankState, qr_positive
from .operators import BaseOperator, OperatorTerm
from .solvers.base_solver import DEFAULT_EPS, ConvergenceHistory
from .solvers.dlra_solver import dlra_power_iteration
from .solvers.full_solver import full_power_iteration

logger = logging.getLogger(__name__)

RATE_WINDOW = 20
RATE_FLOOR = 1e-13
RATE_MIN_POINTS = 10
SIMPLE_GAP = 1e-12
SIMILARITIES = ("random", "identity")


@dataclass(frozen=True, eq=False)
class TwoSidedProblem(BaseOperator):
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    known_lambda: Optional[np.ndarray] = None
    known_sigma: Optional[np.ndarray] = None
    v1: Optional[np.ndarray] = None
    u1: Optional[np.ndarray] = None

    @property
    def n_space(self) -> int:
        return int(self.a.shape[0])

    @property
    def n_energy(self) -> int:
        return int(self.b.shape[0])

    def leakage_terms(self) -> List[OperatorTerm]:
        return []

    def collision_terms(self) -> List[OperatorTerm]:
        return [OperatorTerm("loss", self.a, self.b)]

    def fission_terms(self) -> List[OperatorTerm]:
        return [OperatorTerm("source", self.c, self.d)]

    @property
    def c_hat(self) -> np.ndarray:
        return la.solve(self.a, self.c)

    @property
    def d_hat(self) -> np.ndarray:
        return la.solve(self.b.T, self.d.T).T

    @property
    def dominant_k(self) -> float:
        if self.known_lambda is None or self.known_sigma is None:
            raise ConstructionError("problem was not built from known spectra")
        return float(abs(self.known_lambda[0] * self.known_sigma[0]))

    @property
    def lambda_ratio(self) -> float:
        return _ratio(self.known_lambda)

    @property
    def sigma_ratio(self) -> float:
        return _ratio(self.known_sigma)


def _ratio(spectrum: Optional[np.ndarray]) -> float:
    if spectrum is None:
        raise ConstructionError("problem was not built from known spectra")
    if spectrum.shape[0] < 2:
        return 0.0
    return float(abs(spectrum[1] / spectrum[0]))


def _check_spectrum(values: Sequence[float], label: str) -> np.ndarray:
    spectrum = np.asarray(values, dtype=float)
    if spectrum.ndim != 1 or spectrum.shape[0] == 0:
        raise ConstructionError(f"{label} must be a non-empty list")
    if spectrum[0] == 0.0:
        raise ConstructionError(f"dominant {label[:-1]} must be nonzero")
    magnitudes = np.abs(spectrum)
    if np.any(np.diff(magnitudes) > 0.0):
        raise ConstructionError(f"{label} must be ordered by decreasing magnitude")
    if spectrum.shape[0] > 1 and magnitudes[0] - magnitudes[1] <= SIMPLE_GAP * magnitudes[0]:
        raise ConstructionError(f"dominant eigenvalue not simple in {label}")
    return spectrum


def _well_conditioned(n: int, rng: np.random.Generator) -> np.ndarray:
    """Non-normal matrix with 2-norm condition number at most 2."""
    q1, _ = qr_positive(rng.standard_normal((n, n)))
    q2, _ = qr_positive(rng.standard_normal((n, n)))
    return q1 @ np.diag(1.0 + rng.random(n)) @ q2


def construct_from_spectra(lambdas: Sequence[float], sigmas: Sequence[float], seed: int = 0,
                           similarity: str = "random", split: bool = False) -> TwoSidedProblem:
    """
    Build A φ B = λ C φ D where A^-1 C has eigenvalues lambdas and D B^-1 has eigenvalues sigmas.

    Args:
        lambdas: Eigenvalues of Ĉ, ordered by decreasing magnitude (length N)
        sigmas: Eigenvalues of D̂, ordered by decreasing magnitude (length M)
        seed: Seed for the similarity transforms and splits
        similarity: "random" (well-conditioned, non-normal) or "identity"
        split: Also randomize A and B (otherwise A = I, B = I)
    """
    lam = _check_spectrum(lambdas, "lambdas")
    sig = _check_spectrum(sigmas, "sigmas")
    if similarity not in SIMILARITIES:
        raise ConstructionError(f"unknown similarity '{similarity}', expected one of {SIMILARITIES}")
    n, m = lam.shape[0], sig.shape[0]
    rng = np.random.default_rng(seed)

    if similarity == "identity":
        v, u = np.eye(n), np.eye(m)
    else:
        v, u = _well_conditioned(n, rng), _well_conditioned(m, rng)
    c_hat = v @ np.diag(lam) @ la.inv(v)
    # D̂^T = U diag(σ) U^-1, so the right action φ D̂ sees u1 as its dominant direction
    d_hat = (u @ np.diag(sig) @ la.inv(u)).T
    v1 = v[:, 0] / np.linalg.norm(v[:, 0])
    u1 = u[:, 0] / np.linalg.norm(u[:, 0])

    if np.linalg.norm(c_hat @ v1 - lam[0] * v1) > 1e-12 * max(1.0, abs(lam[0])):
        raise ConstructionError("constructed Ĉ does not reproduce its dominant eigenpair")

    if split:
        a, b = _well_conditioned(n, rng), _well_conditioned(m, rng)
    else:
        a, b = np.eye(n), np.eye(m)
    c = a @ c_hat
    d = d_hat @ b

    logger.debug(f"Two-sided problem N={n}, M={m}, lambda ratio={_ratio(lam):.3f}, "
                 f"sigma ratio={_ratio(sig):.3f}, similarity={similarity}, split={split}")
    return TwoSidedProblem(a=a, b=b, c=c, d=d, known_lambda=lam, known_sigma=sig, v1=v1, u1=u1)


def full_two_sided_iteration(problem: TwoSidedProblem, eps: float = DEFAULT_EPS,
                             max_iter: int = 10000, init: Optional[np.ndarray] = None,
                             strict: bool = True
                             ) -> Tuple[float, np.ndarray, ConvergenceHistory]:
    """Power iteration φ^(n+1) = Ĉ φ^n D̂ / ||Ĉ φ^n D̂||_F."""
    return full_power_iteration(problem, init="ones" if init is None else init, eps=eps,
                                max_iter=max_iter, backend="dense", strict=strict)


def column_distance(basis: np.ndarray, vector: np.ndarray) -> float:
    """min over columns b of min(||b - v||, ||b + v||)."""
    minus = np.linalg.norm(basis - vector[:, None], axis=0)
    plus = np.linalg.norm(basis + vector[:, None], axis=0)
    return float(np.min(np.minimum(minus, plus)))


def range_distance(basis: np.ndarray, vector: np.ndarray) -> float:
    """||(I - B B^T) v||: distance of v from the column range of B."""
    return float(np.linalg.norm(vector - basis @ (basis.T @ vector)))


def aligned_initial_state(problem: TwoSidedProblem, rank: int, seed: int = 0) -> LowRankState:
    """
    Seeded random orthonormal bases; every column must carry a v1 (u1) component.
    """
    n, m = problem.shape
    if not 1 <= rank <= min(n, m):
        raise ConfigurationError(f"rank must lie in [1, {min(n, m)}], got {rank}",
                                 "simplified.rank")
    rng = np.random.default_rng(seed)
    x_basis, _ = qr_positive(rng.standard_normal((n, rank)))
    w_basis, _ = qr_positive(rng.standard_normal((m, rank)))
    for label, basis, vector in (("X", x_basis, problem.v1), ("W", w_basis, problem.u1)):
        if vector is not None and np.min(np.abs(vector @ basis)) <= 1e-8:
            raise ConstructionError(f"a column of {label}0 is orthogonal to the dominant eigenvector")
    return LowRankState(x_basis=x_basis, coeff=np.eye(rank) / np.sqrt(rank), w_basis=w_basis)


def dlra_two_sided_iteration(problem: TwoSidedProblem, rank: int,
                             init: Optional[LowRankState] = None, seed: int = 0,
                             eps: float = DEFAULT_EPS, max_iter: int = 10000,
                             strict: bool = True
                             ) -> Tuple[float, LowRankState, ConvergenceHistory]:
    """
    Low-rank power iteration on a two-sided problem.

    ``history.extras`` records per-iteration distances of both bases from
    the dominant eigenvectors (column and range distances).
    """
    if init is None:
        init = aligned_initial_state(problem, rank, seed)
    alignment: Dict[str, List[float]] = {}

    def track(iteration: int, state: LowRankState) -> None:
        for side, basis, vector in (("x", state.x_basis, problem.v1),
                                    ("w", state.w_basis, problem.u1)):
            if vector is None:
                continue
            alignment.setdefault(f"{side}_column_distance", []).append(
                column_distance(basis, vector))
            alignment.setdefault(f"{side}_range_distance", []).append(
                range_distance(basis, vector))

    k, state, history = dlra_power_iteration(problem, init=init, eps=eps, max_iter=max_iter,
                                             backend="dense", callback=track, strict=strict)
    history.extras.update(alignment)
    return k, state, history


def fit_geometric_rate(errors: Sequence[float], window: int = RATE_WINDOW,
                       floor: float = RATE_FLOOR, min_points: int = RATE_MIN_POINTS) -> float:
    """
    Fitted ratio q of an error sequence e_n ≈ C q^n.

    Entries at or below ``floor`` (and non-finite ones) are dropped; the
    slope of log(e_n) over the last ``window`` remaining points, fitted by
    least squares against n, is exponentiated.

    Raises:
        MeasurementError: fewer than ``min_points`` usable entries
    """
    values = np.asarray(errors, dtype=float)
    indices = np.arange(values.shape[0])
    usable = np.isfinite(values) & (values > floor)
    indices, values = indices[usable], values[usable]
    if values.shape[0] < min_points:
        raise MeasurementError(
            f"need at least {min_points} errors above {floor:g}, got {values.shape[0]}")
    indices, values = indices[-window:], values[-window:]
    slope, _ = np.polyfit(indices.astype(float), np.log(values), 1)
    return float(np.exp(slope))


@dataclass(frozen=True)
class RateReport:
    method: str
    rank: int
    k: float
    k_exact: float
    k_rate: Optional[float]
    k_bound: float
    x_rate: Optional[float]
    x_bound: float
    w_rate: Optional[float]
    w_bound: float
    iterations: int
    converged: bool

    @property
    def k_error(self) -> float:
        return abs(self.k - self.k_exact)


def _rate_or_none(errors: Sequence[float], floor: float) -> Optional[float]:
    try:
        return fit_geometric_rate(errors, floor=floor)
    except MeasurementError as e:
        logger.debug(f"Rate not measurable: {e.message}")
        return None


def measure_rates(problem: TwoSidedProblem, method: str = "dlra", rank: int = 1,
                  iterations: int = 100, seed: int = 0, floor: float = RATE_FLOOR,
                  eps: float = DEFAULT_EPS) -> RateReport:
    """
    Run a fixed number of iterations and fit the convergence rates.

    ``converged`` reports whether some step met |Δk| <= eps; the run does
    not stop there so the whole error sequence is available for fitting.
    Basis rates use the range distance.
    """
    k_exact = problem.dominant_k
    if method == "full":
        k, _, history = full_two_sided_iteration(problem, eps=0.0, max_iter=iterations,
                                                 strict=False)
        x_errors: List[float] = []
        w_errors: List[float] = []
        rank = min(problem.shape)
    elif method == "dlra":
        k, _, history = dlra_two_sided_iteration(problem, rank, seed=seed, eps=0.0,
                                                 max_iter=iterations, strict=False)
        x_errors = history.extras.get("x_range_distance", [])
        w_errors = history.extras.get("w_range_distance", [])
    else:
        raise ConfigurationError(f"unknown method '{method}'", "simplified.method")

    k_errors = [abs(value - k_exact) for value in history.k_estimates]
    converged = any(delta <= eps for delta in history.deltas)
    return RateReport(
        method=method,
        rank=rank,
        k=k,
        k_exact=k_exact,
        k_rate=_rate_or_none(k_errors, floor * max(1.0, abs(k_exact))),
        k_bound=max(problem.lambda_ratio, problem.sigma_ratio),
        x_rate=_rate_or_none(x_errors, floor) if x_errors else None,
        x_bound=problem.lambda_ratio,
        w_rate=_rate_or_none(w_errors, floor) if w_errors else None,
        w_bound=problem.sigma_ratio,
        iterations=history.iterations,
        converged=converged,
    )
