import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg as la

from .errors import DiagnosticDisabledError, KeffError
from .lowrank import LowRankState
from .materials import EnergyGrid
from .operators import BaseOperator

logger = logging.getLogger(__name__)

THERMAL_MAX_EV = 5.0
EPITHERMAL_MAX_EV = 5.0e5
RANGE_NAMES = ("thermal", "epithermal", "fast")
PCM = 1e-5


@dataclass(frozen=True)
class DiagnosticsBundle:
    singular_values: np.ndarray
    spatial_modes: np.ndarray
    energy_modes: np.ndarray
    range_fluxes: Optional[np.ndarray] = None
    avg_spectrum: Optional[np.ndarray] = None


def _first_nonzero_signs(modes: np.ndarray) -> np.ndarray:
    signs = np.ones(modes.shape[1])
    for i in range(modes.shape[1]):
        column = modes[:, i]
        scale = np.max(np.abs(column))
        if scale == 0.0:
            continue
        first = column[np.flatnonzero(np.abs(column) > 1e-12 * scale)[0]]
        signs[i] = 1.0 if first > 0.0 else -1.0
    return signs


def extract_modes(state: LowRankState) -> DiagnosticsBundle:
    """
    Rotate the bases onto the singular vectors of S.

    S = U Σ V^T gives spatial modes X U and energy modes W V; each spatial
    mode is flipped so its first nonzero entry is positive and the matching
    energy mode is flipped with it.
    """
    u, s, vt = la.svd(state.coeff)
    spatial = state.x_basis @ u
    energy = state.w_basis @ vt.T
    signs = _first_nonzero_signs(spatial)
    return DiagnosticsBundle(singular_values=s, spatial_modes=spatial * signs,
                             energy_modes=energy * signs)


def _require_grid(grid: Optional[EnergyGrid], n_groups: int) -> EnergyGrid:
    if grid is None:
        raise DiagnosticDisabledError("energy grid not available; energy diagnostics disabled")
    if grid.n_groups != n_groups:
        raise DiagnosticDisabledError(
            f"energy grid has {grid.n_groups} groups, flux has {n_groups}")
    return grid


def range_weights(grid: EnergyGrid) -> np.ndarray:
    """G x 3 share of every group in the thermal, epithermal and fast ranges."""
    upper = grid.edges[:-1]
    lower = grid.edges[1:]
    bounds = ((0.0, THERMAL_MAX_EV), (THERMAL_MAX_EV, EPITHERMAL_MAX_EV),
              (EPITHERMAL_MAX_EV, np.inf))
    weights = np.zeros((grid.n_groups, 3))
    for column, (low, high) in enumerate(bounds):
        overlap = np.minimum(upper, high) - np.maximum(lower, low)
        weights[:, column] = np.clip(overlap, 0.0, None) / grid.widths
    return weights


def energy_range_flux(phi: np.ndarray, grid: Optional[EnergyGrid]) -> np.ndarray:
    """
    Per-cell flux in the thermal [0, 5] eV, epithermal (5, 5e5] eV and fast ranges.

    A group straddling a range boundary is split in proportion to its
    energy-width overlap. Columns are ordered thermal, epithermal, fast.
    """
    phi = np.asarray(phi, dtype=float)
    grid = _require_grid(grid, phi.shape[1])
    return phi @ range_weights(grid)


def average_spectrum(phi: np.ndarray, grid: Optional[EnergyGrid]) -> np.ndarray:
    """φ_g(r) / ΔE_g."""
    phi = np.asarray(phi, dtype=float)
    grid = _require_grid(grid, phi.shape[1])
    return phi / grid.widths


def build_diagnostics(state: LowRankState, grid: Optional[EnergyGrid]) -> DiagnosticsBundle:
    bundle = extract_modes(state)
    if grid is None:
        logger.warning("No energy grid: range fluxes and average spectrum are skipped")
        return bundle
    phi = state.to_dense()
    return DiagnosticsBundle(
        singular_values=bundle.singular_values,
        spatial_modes=bundle.spatial_modes,
        energy_modes=bundle.energy_modes,
        range_fluxes=energy_range_flux(phi, grid),
        avg_spectrum=average_spectrum(phi, grid),
    )


@dataclass(frozen=True)
class MemoryReport:
    """Entry counts of system matrices and solution representations."""

    n_x: int
    g: int
    rank: int
    full_entries: int
    dlra_entries: int
    coefficient_entries: int
    solution_full: int
    solution_dlra: int


def memory_report(n_x: int, g: int, r: int) -> MemoryReport:
    """
    Full system N_x²G² vs low-rank K/L systems r²N_x² + r²G² (plus r⁴ for S),
    and solution storage N_x G vs N_x r + G r + r².
    """
    for label, value in (("n_x", n_x), ("g", g), ("r", r)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise ValueError(f"{label} must be a positive integer, got {value!r}")
    n_x, g, r = int(n_x), int(g), int(r)
    return MemoryReport(
        n_x=n_x,
        g=g,
        rank=r,
        full_entries=n_x ** 2 * g ** 2,
        dlra_entries=r ** 2 * n_x ** 2 + r ** 2 * g ** 2,
        coefficient_entries=r ** 4,
        solution_full=n_x * g,
        solution_dlra=n_x * r + g * r + r ** 2,
    )


@dataclass(frozen=True)
class RankStudyEntry:
    rank: int
    k_eff: float
    error_pcm: float
    iterations: int
    converged: bool


def rank_study(operator: BaseOperator, ranks: Sequence[int], reference_k: float,
               eps: float, max_iter: int, seed: int = 0, backend: str = "auto"
               ) -> List[RankStudyEntry]:
    """
    Fixed-rank runs at several ranks compared with a reference k_eff in pcm.
    Runs that hit max_iter are reported with their last estimate.
    """
    from .solvers.dlra_solver import dlra_power_iteration

    entries = []
    for rank in ranks:
        try:
            k, _, history = dlra_power_iteration(operator, rank=rank, eps=eps, max_iter=max_iter,
                                                 seed=seed, backend=backend, strict=False)
        except KeffError as e:
            logger.warning(f"Rank study at r={rank} failed: {e.message}")
            continue
        entries.append(RankStudyEntry(rank=rank, k_eff=k, error_pcm=abs(k - reference_k) / PCM,
                                      iterations=history.iterations,
                                      converged=history.converged))
        logger.info(f"Rank study r={rank}: k={k:.10f}, |dk|={abs(k - reference_k) / PCM:.3f} pcm, "
                    f"{history.iterations} iterations")
    return entries
