import json
import logging
from dataclasses import dataclass
from typing import Any, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, ContractViolationError, MaterialLibraryError
from .mesh import SpatialMesh
from .util import PathLike, read_json

logger = logging.getLogger(__name__)

CHI_TOLERANCE = 1e-10
DENSITY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class MaterialRecord:
    """
    Multigroup constants of one material.

    sigma_s is stored with row g' = source group and column g = destination
    group, so ``phi @ sigma_s`` gathers in-scatter into each group.
    """

    name: str
    diffusion: np.ndarray
    sigma_t: np.ndarray
    sigma_s: np.ndarray
    nu_sigma_f: np.ndarray
    chi: np.ndarray

    @property
    def n_groups(self) -> int:
        return int(self.sigma_t.shape[0])

    @property
    def is_fissile(self) -> bool:
        return bool(np.any(self.nu_sigma_f > 0.0))


@dataclass(frozen=True)
class EnergyGrid:
    """Group boundaries in eV, descending: group 1 is the highest-energy group."""

    edges: np.ndarray

    @property
    def n_groups(self) -> int:
        return int(self.edges.shape[0] - 1)

    @property
    def widths(self) -> np.ndarray:
        return self.edges[:-1] - self.edges[1:]


@dataclass(frozen=True)
class MaterialLibrary:
    records: Tuple[MaterialRecord, ...]
    energy_grid: Optional[EnergyGrid] = None

    @property
    def n_groups(self) -> int:
        return self.records[0].n_groups

    @property
    def names(self) -> List[str]:
        return [record.name for record in self.records]

    def index(self, name: str) -> int:
        for i, record in enumerate(self.records):
            if record.name == name:
                return i
        raise ConfigurationError(f"unknown material '{name}'", "shells")

    def __getitem__(self, key: Union[int, str]) -> MaterialRecord:
        if isinstance(key, str):
            return self.records[self.index(key)]
        return self.records[key]

    def __iter__(self) -> Iterator[MaterialRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class DensityField:
    """Per-cell material densities; column ℓ belongs to ``material_names[ℓ]``."""

    rho: np.ndarray
    material_names: Tuple[str, ...]

    @property
    def n_cells(self) -> int:
        return int(self.rho.shape[0])

    @property
    def n_materials(self) -> int:
        return int(self.rho.shape[1])

    def cell_materials(self) -> np.ndarray:
        """Index of the (indicator) material occupying each cell."""
        return np.argmax(self.rho, axis=1)


def _vector(values: Any, n_groups: int, path: str) -> np.ndarray:
    try:
        array = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as e:
        raise MaterialLibraryError(f"expected a list of numbers: {str(e)}", path) from e
    if array.ndim != 1 or array.shape[0] != n_groups:
        raise MaterialLibraryError(
            f"group count mismatch: expected {n_groups} entries, got shape {array.shape}", path)
    if not np.all(np.isfinite(array)):
        raise MaterialLibraryError("non-finite value", path)
    return array


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _parse_record(entry: Mapping[str, Any], n_groups: int, path: str) -> MaterialRecord:
    if not isinstance(entry, Mapping):
        raise MaterialLibraryError("material entry must be an object", path)
    missing = [key for key in ("name", "diffusion", "sigma_t", "sigma_s", "nu_sigma_f", "chi")
               if key not in entry]
    if missing:
        raise MaterialLibraryError(f"missing field(s) {', '.join(missing)}", path)
    name = entry["name"]
    if not isinstance(name, str) or not name:
        raise MaterialLibraryError("name must be a non-empty string", f"{path}.name")

    diffusion = _vector(entry["diffusion"], n_groups, f"{path}.diffusion")
    sigma_t = _vector(entry["sigma_t"], n_groups, f"{path}.sigma_t")
    nu_sigma_f = _vector(entry["nu_sigma_f"], n_groups, f"{path}.nu_sigma_f")
    chi = _vector(entry["chi"], n_groups, f"{path}.chi")
    try:
        sigma_s = np.asarray(entry["sigma_s"], dtype=float)
    except (TypeError, ValueError) as e:
        raise MaterialLibraryError(f"expected a matrix: {str(e)}", f"{path}.sigma_s") from e
    if sigma_s.shape != (n_groups, n_groups):
        raise MaterialLibraryError(
            f"group count mismatch: expected {n_groups}x{n_groups}, got shape {sigma_s.shape}",
            f"{path}.sigma_s")
    if not np.all(np.isfinite(sigma_s)):
        raise MaterialLibraryError("non-finite value", f"{path}.sigma_s")

    if np.any(diffusion <= 0.0):
        raise MaterialLibraryError("diffusion coefficients must be positive", f"{path}.diffusion")
    for field, values in (("sigma_t", sigma_t), ("sigma_s", sigma_s),
                          ("nu_sigma_f", nu_sigma_f)):
        if np.any(values < 0.0):
            raise MaterialLibraryError("negative cross section", f"{path}.{field}")
    if np.any(chi < 0.0):
        raise MaterialLibraryError("negative chi entry", f"{path}.chi")

    chi_sum = float(chi.sum())
    if chi_sum == 0.0:
        if np.any(nu_sigma_f > 0.0):
            raise MaterialLibraryError("fissile material needs a normalized chi", f"{path}.chi")
    elif abs(chi_sum - 1.0) > CHI_TOLERANCE:
        raise MaterialLibraryError(f"chi not normalized (sum {chi_sum!r})", f"{path}.chi")

    return MaterialRecord(
        name=name,
        diffusion=_readonly(diffusion),
        sigma_t=_readonly(sigma_t),
        sigma_s=_readonly(sigma_s),
        nu_sigma_f=_readonly(nu_sigma_f),
        chi=_readonly(chi),
    )


def _parse_grid(values: Any, n_groups: int) -> EnergyGrid:
    edges = _vector(values, n_groups + 1, "energy_edges_ev")
    if np.any(edges < 0.0):
        raise MaterialLibraryError("energies must be non-negative", "energy_edges_ev")
    if np.any(np.diff(edges) >= 0.0):
        raise MaterialLibraryError("energy edges must be strictly decreasing", "energy_edges_ev")
    return EnergyGrid(edges=_readonly(edges))


def load_material_library(
        document: Union[str, Mapping[str, Any]]) -> Tuple[MaterialLibrary, Optional[EnergyGrid]]:
    """
    Validate a material library document.

    Args:
        document: JSON text or the already-decoded object with ``groups``,
            optional ``energy_edges_ev`` and a ``materials`` list

    Returns:
        (library, energy grid or None)
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise MaterialLibraryError(f"invalid JSON: {str(e)}") from e
    if not isinstance(document, Mapping):
        raise MaterialLibraryError("library document must be an object")

    materials = document.get("materials")
    if not isinstance(materials, Sequence) or isinstance(materials, str) or not materials:
        raise MaterialLibraryError("at least one material is required", "materials")

    groups = document.get("groups")
    if groups is None:
        first = materials[0] if isinstance(materials[0], Mapping) else {}
        groups = len(first.get("sigma_t", []))
    if isinstance(groups, bool) or not isinstance(groups, int) or groups < 1:
        raise MaterialLibraryError(f"groups must be a positive integer, got {groups!r}", "groups")

    records: List[MaterialRecord] = []
    for i, entry in enumerate(materials):
        record = _parse_record(entry, groups, f"materials[{i}]")
        if record.name in (r.name for r in records):
            raise MaterialLibraryError(f"duplicate material name '{record.name}'",
                                       f"materials[{i}].name")
        records.append(record)

    grid = None
    if document.get("energy_edges_ev") is not None:
        grid = _parse_grid(document["energy_edges_ev"], groups)
    else:
        logger.warning("Material library has no energy_edges_ev; "
                       "energy-range diagnostics are disabled")

    library = MaterialLibrary(records=tuple(records), energy_grid=grid)
    logger.info(f"Loaded {len(records)} material(s) with G={groups}: {', '.join(library.names)}")
    return library, grid


def read_material_library(path: PathLike) -> Tuple[MaterialLibrary, Optional[EnergyGrid]]:
    try:
        document = read_json(path)
    except ConfigurationError as e:
        raise MaterialLibraryError(e.message, "materials_file") from e
    return load_material_library(document)


def build_density_field(mesh: SpatialMesh, shells: Sequence[Tuple[float, str]],
                        library: MaterialLibrary) -> DensityField:
    """
    Assign every cell to the shell containing its center.

    Args:
        mesh: Spatial mesh
        shells: (outer_radius_cm, material_name) pairs from the center outwards
        library: Material library whose order defines the density columns

    Returns:
        Indicator DensityField with one column per library material
    """
    if not shells:
        raise ConfigurationError("at least one shell is required", "shells")
    radii = np.asarray([float(outer) for outer, _ in shells])
    if np.any(radii <= 0.0):
        raise ConfigurationError("shell radii must be positive", "shells")
    if np.any(np.diff(radii) <= 0.0):
        raise ConfigurationError("shell radii not increasing (overlapping shells)", "shells")
    if abs(radii[-1] - mesh.radius) > DENSITY_TOLERANCE * max(1.0, mesh.radius):
        raise ConfigurationError(
            f"shells do not cover the mesh: last outer radius {radii[-1]!r} "
            f"!= mesh radius {mesh.radius!r}", "shells")

    columns = []
    for i, (_, name) in enumerate(shells):
        if name not in library.names:
            raise ConfigurationError(f"unknown material '{name}'", f"shells[{i}].material")
        columns.append(library.index(name))

    shell_of_cell = np.searchsorted(radii, mesh.centers, side="left")
    rho = np.zeros((mesh.n_cells, len(library)))
    rho[np.arange(mesh.n_cells), np.asarray(columns)[shell_of_cell]] = 1.0
    logger.debug(f"Density field: {np.count_nonzero(rho.sum(axis=0))} active material(s) "
                 f"over {mesh.n_cells} cells")
    return DensityField(rho=_readonly(rho), material_names=tuple(library.names))


def interface_diffusion_factor(D_l: Any, D_k: Any) -> Any:
    """
    Interface factor D_l·D_k/(D_l + D_k); works element-wise on arrays.

    Twice this factor is the harmonic mean used at a face between two cells.
    """
    D_l = np.asarray(D_l, dtype=float)
    D_k = np.asarray(D_k, dtype=float)
    if np.any(D_l <= 0.0) or np.any(D_k <= 0.0):
        raise ContractViolationError("diffusion coefficients must be positive")
    factor = D_l * D_k / (D_l + D_k)
    if factor.ndim == 0:
        return float(factor)
    return factor
