"""
Multi-term matrix equations solved by explicit vectorization.

An equation -Σ A_l X B_l + Σ C_l X D_l = Y with X of shape (N, M) is
flattened row-major, x[i*M + beta] = X[i, beta], which turns every term
A X B into kron(A, B^T) acting on x.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Any, Optional, Sequence, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg.lapack import get_lapack_funcs

from .errors import AssemblyError, SolverError

logger = logging.getLogger(__name__)

Matrix = Union[np.ndarray, sp.spmatrix]

RESIDUAL_TOLERANCE = 1e-10
REFINEMENT_SWEEPS = 2
DENSE_SIZE_LIMIT = 2500
BACKENDS = ("auto", "dense", "sparse")


def _shape(matrix: Matrix) -> tuple:
    return tuple(matrix.shape)


def _product(left: Matrix, x: np.ndarray, right: Matrix) -> np.ndarray:
    x_right = np.asarray(right.T @ x.T).T
    return np.asarray(left @ x_right)


@dataclass(frozen=True)
class MultiTermSystem:
    """
    -Σ left_a[l] X right_b[l] + Σ left_c[l] X right_d[l], X of shape (n, m).

    Left factors may be scipy.sparse matrices; right factors may be either.
    """

    left_a: Sequence[Matrix]
    right_b: Sequence[Matrix]
    left_c: Sequence[Matrix]
    right_d: Sequence[Matrix]
    n: int
    m: int

    def __post_init__(self) -> None:
        if len(self.left_a) != len(self.right_b):
            raise AssemblyError(
                f"{len(self.left_a)} left_a factors paired with {len(self.right_b)} right_b factors")
        if len(self.left_c) != len(self.right_d):
            raise AssemblyError(
                f"{len(self.left_c)} left_c factors paired with {len(self.right_d)} right_d factors")
        for label, factors, size in (("left_a", self.left_a, self.n), ("left_c", self.left_c, self.n),
                                     ("right_b", self.right_b, self.m),
                                     ("right_d", self.right_d, self.m)):
            for i, factor in enumerate(factors):
                if _shape(factor) != (size, size):
                    raise AssemblyError(
                        f"{label}[{i}] has shape {_shape(factor)}, expected ({size}, {size})")

    @classmethod
    def from_terms(cls, minus_terms: Sequence[tuple], plus_terms: Sequence[tuple],
                   n: int, m: int) -> "MultiTermSystem":
        return cls(
            left_a=[a for a, _ in minus_terms],
            right_b=[b for _, b in minus_terms],
            left_c=[c for c, _ in plus_terms],
            right_d=[d for _, d in plus_terms],
            n=n,
            m=m,
        )

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the left-hand side for a matrix X of shape (n, m)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n, self.m):
            raise AssemblyError(f"operand has shape {x.shape}, expected ({self.n}, {self.m})")
        result = np.zeros((self.n, self.m))
        for a, b in zip(self.left_a, self.right_b):
            result -= _product(a, x, b)
        for c, d in zip(self.left_c, self.right_d):
            result += _product(c, x, d)
        return result


@dataclass(frozen=True)
class VectorizedOperator:
    """
    Flattened system matrix with its factorization.

    ``factorization`` is an (lu, piv) pair for the dense backend and a
    SuperLU object for the sparse one. Neither is mutated by ``solve``.
    """

    system: MultiTermSystem
    e_matrix: Matrix
    factorization: Any
    backend: str
    condition_estimate: Optional[float] = None

    @property
    def size(self) -> int:
        return self.system.n * self.system.m


def _resolve_backend(backend: str, size: int) -> str:
    if backend not in BACKENDS:
        raise AssemblyError(f"unknown backend '{backend}', expected one of {BACKENDS}")
    if backend == "auto":
        return "dense" if size <= DENSE_SIZE_LIMIT else "sparse"
    return backend


def _dense(matrix: Matrix) -> np.ndarray:
    if sp.issparse(matrix):
        return matrix.toarray()
    return np.asarray(matrix, dtype=float)


def _assemble_dense(system: MultiTermSystem) -> np.ndarray:
    size = system.n * system.m
    e_matrix = np.zeros((size, size))
    for a, b in zip(system.left_a, system.right_b):
        e_matrix -= np.kron(_dense(a), _dense(b).T)
    for c, d in zip(system.left_c, system.right_d):
        e_matrix += np.kron(_dense(c), _dense(d).T)
    return e_matrix


def _assemble_sparse(system: MultiTermSystem) -> sp.csc_matrix:
    size = system.n * system.m
    e_matrix = sp.csc_matrix((size, size))
    for a, b in zip(system.left_a, system.right_b):
        e_matrix = e_matrix - sp.kron(sp.csr_matrix(a), sp.csr_matrix(_dense(b).T), format="csc")
    for c, d in zip(system.left_c, system.right_d):
        e_matrix = e_matrix + sp.kron(sp.csr_matrix(c), sp.csr_matrix(_dense(d).T), format="csc")
    e_matrix.eliminate_zeros()
    return e_matrix


def _dense_condition(e_matrix: np.ndarray, lu: np.ndarray) -> float:
    gecon, = get_lapack_funcs(("gecon",), (lu,))
    anorm = np.linalg.norm(e_matrix, 1)
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond <= 0.0 or not np.isfinite(rcond):
        return float("inf")
    return float(1.0 / rcond)


def assemble_vectorized(system: MultiTermSystem, backend: str = "auto") -> VectorizedOperator:
    """
    Build and factorize the flattened operator of a multi-term system.

    Args:
        system: The matrix equation to flatten
        backend: "dense" (LAPACK LU), "sparse" (SuperLU) or "auto"

    Returns:
        A factorized VectorizedOperator

    Raises:
        SolverError: if the flattened matrix is singular to working precision
    """
    size = system.n * system.m
    backend = _resolve_backend(backend, size)

    if backend == "dense":
        e_matrix = _assemble_dense(system)
        if not np.all(np.isfinite(e_matrix)):
            raise SolverError("system matrix has non-finite entries")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", la.LinAlgWarning)
            lu, piv = la.lu_factor(e_matrix, check_finite=False)
        condition = _dense_condition(e_matrix, lu)
        if not np.isfinite(condition) or condition * np.finfo(float).eps >= 1.0:
            raise SolverError(f"singular system of size {size} (condition estimate {condition:.3e})",
                              condition_estimate=condition)
        factorization = (lu, piv)
    else:
        e_matrix = _assemble_sparse(system)
        try:
            factorization = spla.splu(e_matrix)
        except RuntimeError as e:
            raise SolverError(f"singular system of size {size}: {str(e)}",
                              condition_estimate=float("inf")) from e
        condition = None

    logger.debug(f"Factorized {backend} system n={system.n}, m={system.m}, "
                 f"terms={len(system.left_a)}+{len(system.left_c)}")
    return VectorizedOperator(system=system, e_matrix=e_matrix, factorization=factorization,
                              backend=backend, condition_estimate=condition)


def _solve_flat(op: VectorizedOperator, rhs: np.ndarray) -> np.ndarray:
    if op.backend == "dense":
        return la.lu_solve(op.factorization, rhs, check_finite=False)
    return op.factorization.solve(rhs)


def solve(op: VectorizedOperator, rhs: np.ndarray,
          tolerance: float = RESIDUAL_TOLERANCE) -> np.ndarray:
    """
    Solve the factorized system for a right-hand side of shape (n, m).

    The residual is checked against ``tolerance * ||rhs||_F``; up to two
    sweeps of iterative refinement reuse the factorization before giving up.
    """
    n, m = op.system.n, op.system.m
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (n, m):
        raise AssemblyError(f"right-hand side has shape {rhs.shape}, expected ({n}, {m})")

    flat_rhs = rhs.reshape(n * m)
    solution = _solve_flat(op, flat_rhs).reshape(n, m)
    rhs_norm = np.linalg.norm(rhs)
    residual = np.linalg.norm(op.system.apply(solution) - rhs)

    sweep = 0
    while residual > tolerance * rhs_norm and sweep < REFINEMENT_SWEEPS:
        sweep += 1
        correction = _solve_flat(op, (rhs - op.system.apply(solution)).reshape(n * m))
        solution = solution + correction.reshape(n, m)
        residual = np.linalg.norm(op.system.apply(solution) - rhs)
        logger.warning(f"Iterative refinement sweep {sweep}: relative residual "
                       f"{residual / rhs_norm:.3e}")

    if not np.isfinite(residual) or residual > tolerance * rhs_norm:
        raise SolverError(
            f"residual {residual:.3e} exceeds {tolerance:.1e} * ||Y|| = {tolerance * rhs_norm:.3e}",
            condition_estimate=op.condition_estimate, residual=float(residual))
    return solution


def solve_system(system: MultiTermSystem, rhs: np.ndarray, backend: str = "auto",
                 tolerance: float = RESIDUAL_TOLERANCE) -> np.ndarray:
    """Assemble, factorize and solve once."""
    return solve(assemble_vectorized(system, backend), rhs, tolerance)
