"""
Low-rank factorizations X S W^T and the Galerkin projections of operator terms.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Hashable, Optional

import numpy as np
import scipy.linalg as la

from .errors import ContractViolationError
from .operators import BaseOperator

logger = logging.getLogger(__name__)

ORTHONORMALITY_CONTRACT = 1e-8
ORTHONORMALITY_INVARIANT = 1e-10


def _readonly(array: np.ndarray) -> np.ndarray:
    if isinstance(array, np.ndarray) and array.dtype == np.float64 and not array.flags.writeable:
        return array
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LowRankState:
    """φ ≈ X S W^T with orthonormal X (N_x x r) and W (G x r)."""

    x_basis: np.ndarray
    coeff: np.ndarray
    w_basis: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_basis", _readonly(self.x_basis))
        object.__setattr__(self, "coeff", _readonly(self.coeff))
        object.__setattr__(self, "w_basis", _readonly(self.w_basis))
        r = self.coeff.shape[0]
        if self.coeff.shape != (r, r) or self.x_basis.shape[1] != r or self.w_basis.shape[1] != r:
            raise ContractViolationError(
                f"inconsistent factor shapes X{self.x_basis.shape}, S{self.coeff.shape}, "
                f"W{self.w_basis.shape}")

    @property
    def rank(self) -> int:
        return int(self.coeff.shape[0])

    @property
    def shape(self) -> tuple:
        return (self.x_basis.shape[0], self.w_basis.shape[0])

    def to_dense(self) -> np.ndarray:
        return self.x_basis @ self.coeff @ self.w_basis.T

    def orthonormality_error(self) -> float:
        return max(orthonormality_error(self.x_basis), orthonormality_error(self.w_basis))

    @classmethod
    def from_dense(cls, phi: np.ndarray, rank: Optional[int] = None) -> "LowRankState":
        """Truncated SVD of a dense flux; the full rank min(N_x, G) by default."""
        phi = np.asarray(phi, dtype=float)
        u, s, vt = la.svd(phi, full_matrices=False)
        rank = s.shape[0] if rank is None else int(rank)
        if not 1 <= rank <= s.shape[0]:
            raise ContractViolationError(f"rank {rank} outside [1, {s.shape[0]}]")
        return cls(x_basis=u[:, :rank], coeff=np.diag(s[:rank]), w_basis=vt[:rank].T)


def orthonormality_error(basis: np.ndarray) -> float:
    r = basis.shape[1]
    return float(np.linalg.norm(basis.T @ basis - np.eye(r)))


def check_orthonormal(basis: np.ndarray, label: str,
                      tolerance: float = ORTHONORMALITY_CONTRACT) -> None:
    error = orthonormality_error(basis)
    if not error <= tolerance:
        raise ContractViolationError(
            f"{label} basis is not orthonormal: ||B^T B - I||_F = {error:.3e} > {tolerance:.0e}")


def qr_positive(matrix: np.ndarray) -> tuple:
    """Economic QR with the diagonal of R made non-negative."""
    q, r = la.qr(matrix, mode="economic")
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs, r * signs[:, None]


@dataclass(frozen=True)
class ProjectedCoefficients:
    """
    Galerkin projections of the operator terms onto the current bases.

    Energy side (W^T · W): ``m_hat`` per leakage term, ``sigma_hat`` per
    collision term and ``sigma_f_hat`` per fission term. Space side
    (X^T · X): ``d_hat``, ``rho_hat`` and ``rho_f_hat`` likewise. Keys are the
    operator term keys.
    """

    m_hat: Dict[Hashable, np.ndarray] = field(default_factory=dict)
    sigma_hat: Dict[Hashable, np.ndarray] = field(default_factory=dict)
    sigma_f_hat: Dict[Hashable, np.ndarray] = field(default_factory=dict)
    d_hat: Dict[Hashable, np.ndarray] = field(default_factory=dict)
    rho_hat: Dict[Hashable, np.ndarray] = field(default_factory=dict)
    rho_f_hat: Dict[Hashable, np.ndarray] = field(default_factory=dict)

    def combine(self, other: "ProjectedCoefficients") -> "ProjectedCoefficients":
        merged = {}
        for name in ("m_hat", "sigma_hat", "sigma_f_hat", "d_hat", "rho_hat", "rho_f_hat"):
            merged[name] = {**getattr(self, name), **getattr(other, name)}
        return ProjectedCoefficients(**merged)


def _congruence(basis: np.ndarray, matrix: Any) -> np.ndarray:
    return np.asarray(basis.T @ np.asarray(matrix @ basis))


def project_energy(operator: BaseOperator, w: np.ndarray) -> ProjectedCoefficients:
    """W^T M W, W^T Σ W and W^T Σf W for every term of ``operator``."""
    w = np.asarray(w, dtype=float)
    if w.shape[0] != operator.n_energy:
        raise ContractViolationError(f"energy basis has {w.shape[0]} rows, expected "
                                     f"{operator.n_energy}")
    check_orthonormal(w, "energy")
    return ProjectedCoefficients(
        m_hat={t.key: _congruence(w, t.energy) for t in operator.leakage_terms()},
        sigma_hat={t.key: _congruence(w, t.energy) for t in operator.collision_terms()},
        sigma_f_hat={t.key: _congruence(w, t.energy) for t in operator.fission_terms()},
    )


def project_space(operator: BaseOperator, x: np.ndarray) -> ProjectedCoefficients:
    """X^T D X, X^T ρ X (loss side) and X^T ρ X (source side) for every term."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != operator.n_space:
        raise ContractViolationError(f"spatial basis has {x.shape[0]} rows, expected "
                                     f"{operator.n_space}")
    check_orthonormal(x, "spatial")
    rho_hat = {t.key: _congruence(x, t.spatial) for t in operator.collision_terms()}
    collision_spatial = {t.key: t.spatial for t in operator.collision_terms()}
    rho_f_hat = {}
    for t in operator.fission_terms():
        if collision_spatial.get(t.key) is t.spatial:
            rho_f_hat[t.key] = rho_hat[t.key]
        else:
            rho_f_hat[t.key] = _congruence(x, t.spatial)
    return ProjectedCoefficients(
        d_hat={t.key: _congruence(x, t.spatial) for t in operator.leakage_terms()},
        rho_hat=rho_hat,
        rho_f_hat=rho_f_hat,
    )


@dataclass(frozen=True)
class Truncation:
    p1: np.ndarray
    sigma1: np.ndarray
    q1: np.ndarray
    rank: int
    discarded: float
    singular_values: np.ndarray


def truncate(s_hat: np.ndarray, theta: float, r_min: int = 1,
             r_max: Optional[int] = None) -> Truncation:
    """
    Pick the smallest rank whose discarded singular-value tail has norm <= theta.

    Args:
        s_hat: Coefficient matrix to compress
        theta: Absolute tolerance on sqrt(Σ_(j > r1) σ_j²)
        r_min: Lower clamp of the new rank
        r_max: Upper clamp of the new rank (size of s_hat by default)

    Returns:
        Truncation with the leading singular triplets and the discarded tail
    """
    if theta < 0.0:
        raise ValueError(f"theta must be non-negative, got {theta}")
    p, s, qt = la.svd(np.asarray(s_hat, dtype=float), full_matrices=False)
    n = s.shape[0]
    # tails[r] = sqrt(Σ_{j >= r} σ_j²), tails[n] = 0
    tails = np.sqrt(np.append(np.cumsum((s ** 2)[::-1])[::-1], 0.0))
    new_rank = next(r for r in range(1, n + 1) if tails[r] <= theta)
    upper = n if r_max is None else min(int(r_max), n)
    new_rank = max(new_rank, int(r_min))
    new_rank = max(1, min(new_rank, upper))
    return Truncation(
        p1=p[:, :new_rank],
        sigma1=np.diag(s[:new_rank]),
        q1=qt[:new_rank].T,
        rank=new_rank,
        discarded=float(tails[new_rank]),
        singular_values=s,
    )
