import logging
from typing import Dict, List, Tuple

import numpy as np
import scipy.sparse as sp

from ..errors import AssemblyError, ConfigurationError
from ..materials import DensityField, MaterialLibrary, interface_diffusion_factor
from ..mesh import SpatialMesh
from .base_operator import BaseOperator, OperatorTerm

logger = logging.getLogger(__name__)

OUTER_BOUNDARIES = ("zero_flux", "reflective")


class OperatorSet(BaseOperator):
    """
    Assembled multigroup diffusion operators on a spherical mesh.

    Loss:   -Σ_(l,k) D^(l,k) φ M^(l,k) + Σ_l ρ^(l) φ Σ^(l)
    Source:  Σ_l ρ^(l) φ Σf^(l)

    Energy matrices act from the right with entry (g', g) coupling source
    group g' into destination group g.
    """

    def __init__(self, mesh: SpatialMesh, library: MaterialLibrary, density: DensityField,
                 spatial_stencils: Dict[Tuple[int, int], sp.csr_matrix],
                 density_diagonals: List[sp.csr_matrix],
                 energy_diffusion: Dict[Tuple[int, int], np.ndarray],
                 removal: List[np.ndarray],
                 fission: List[np.ndarray],
                 outer_boundary: str = "zero_flux"):
        self.mesh = mesh
        self.library = library
        self.density = density
        self.spatial_stencils = spatial_stencils
        self.density_diagonals = density_diagonals
        self.energy_diffusion = energy_diffusion
        self.removal = removal
        self.fission = fission
        self.outer_boundary = outer_boundary
        self.active_materials = [l for l in range(density.n_materials)
                                 if np.any(density.rho[:, l] > 0.0)]
        self._leakage = [OperatorTerm(pair, stencil, energy_diffusion[pair])
                         for pair, stencil in spatial_stencils.items()]
        self._collision = [OperatorTerm(l, density_diagonals[l], removal[l])
                           for l in self.active_materials]
        self._fission = [OperatorTerm(l, density_diagonals[l], fission[l])
                         for l in self.active_materials if library[l].is_fissile]

    @property
    def n_space(self) -> int:
        return self.mesh.n_cells

    @property
    def n_energy(self) -> int:
        return self.library.n_groups

    @property
    def n_materials(self) -> int:
        return self.density.n_materials

    def leakage_terms(self) -> List[OperatorTerm]:
        return list(self._leakage)

    def collision_terms(self) -> List[OperatorTerm]:
        return list(self._collision)

    def fission_terms(self) -> List[OperatorTerm]:
        return list(self._fission)

    def initial_energy_vector(self) -> np.ndarray:
        """Fission spectrum of the first fissile material present in the problem."""
        for term in self._fission:
            chi = self.library[term.key].chi
            if np.any(chi > 0.0):
                return np.array(chi)
        return super().initial_energy_vector()


def _tridiagonal(lower: np.ndarray, diagonal: np.ndarray, upper: np.ndarray) -> sp.csr_matrix:
    n = diagonal.shape[0]
    if n == 1:
        return sp.csr_matrix(diagonal.reshape(1, 1))
    return sp.diags([lower, diagonal, upper], [-1, 0, 1], shape=(n, n), format="csr")


def _pair_stencil(mesh: SpatialMesh, rho_l: np.ndarray, rho_k: np.ndarray,
                  outer_boundary: str) -> sp.csr_matrix:
    """
    Geometry and density part of the diffusion stencil for one material pair.

    Row j couples to j±1 with ρ_j^l ρ_(j±1)^k (ρ_j^l + ρ_(j±1)^k) S_(j±1/2) / (Δr V_j);
    the diagonal carries minus the sum of both faces. The zero-flux outer face
    uses a ghost cell filled with the outermost cell's material.
    """
    scale = 1.0 / (mesh.dr * mesh.volumes)
    inner_faces = mesh.surfaces[1:-1]

    upper = rho_l[:-1] * rho_k[1:] * (rho_l[:-1] + rho_k[1:]) * inner_faces * scale[:-1]
    lower = rho_l[1:] * rho_k[:-1] * (rho_l[1:] + rho_k[:-1]) * inner_faces * scale[1:]

    diagonal = np.zeros(mesh.n_cells)
    diagonal[:-1] -= upper
    diagonal[1:] -= lower
    if outer_boundary == "zero_flux":
        ghost = rho_l[-1] * rho_k[-1] * (rho_l[-1] + rho_k[-1]) * mesh.surfaces[-1] * scale[-1]
        diagonal[-1] -= ghost
    return _tridiagonal(lower, diagonal, upper)


def assemble_operators(mesh: SpatialMesh, library: MaterialLibrary, density: DensityField,
                       outer_boundary: str = "zero_flux") -> OperatorSet:
    """
    Assemble every matrix of the multigroup diffusion eigenproblem.

    Args:
        mesh: Spherical mesh with N_x cells
        library: N_m materials with G groups
        density: N_x x N_m density field whose columns follow the library order
        outer_boundary: "zero_flux" (ghost-cell Dirichlet) or "reflective"

    Returns:
        OperatorSet; material pairs with an identically zero stencil are dropped
    """
    if outer_boundary not in OUTER_BOUNDARIES:
        raise ConfigurationError(
            f"unknown outer boundary '{outer_boundary}', expected one of {OUTER_BOUNDARIES}",
            "mesh.outer_boundary")
    if density.n_cells != mesh.n_cells:
        raise AssemblyError(f"density field has {density.n_cells} cells, mesh has {mesh.n_cells}")
    if density.n_materials != len(library):
        raise AssemblyError(
            f"density field has {density.n_materials} materials, library has {len(library)}")
    if tuple(density.material_names) != tuple(library.names):
        raise AssemblyError("density columns do not follow the library order")

    rho = density.rho
    n_materials = len(library)
    active = [l for l in range(n_materials) if np.any(rho[:, l] > 0.0)]

    spatial_stencils: Dict[Tuple[int, int], sp.csr_matrix] = {}
    energy_diffusion: Dict[Tuple[int, int], np.ndarray] = {}
    for l in active:
        for k in active:
            stencil = _pair_stencil(mesh, rho[:, l], rho[:, k], outer_boundary)
            stencil.eliminate_zeros()
            if stencil.nnz == 0:
                continue
            spatial_stencils[(l, k)] = stencil
            energy_diffusion[(l, k)] = np.diag(
                interface_diffusion_factor(library[l].diffusion, library[k].diffusion))

    density_diagonals = [sp.diags(rho[:, l], 0, format="csr") for l in range(n_materials)]
    removal = [np.diag(record.sigma_t) - record.sigma_s for record in library]
    fission = [np.outer(record.nu_sigma_f, record.chi) for record in library]

    logger.info(f"Assembled operators: N_x={mesh.n_cells}, G={library.n_groups}, "
                f"materials={len(active)}/{n_materials}, stencil pairs={len(spatial_stencils)}, "
                f"outer boundary={outer_boundary}")
    return OperatorSet(
        mesh=mesh,
        library=library,
        density=density,
        spatial_stencils=spatial_stencils,
        density_diagonals=density_diagonals,
        energy_diffusion=energy_diffusion,
        removal=removal,
        fission=fission,
        outer_boundary=outer_boundary,
    )
