"""
Deterministic synthetic multigroup libraries.

Measured cross-section sets for the reflected-sphere benchmarks are not
distributable, so problems are built from generated constants with the same
qualitative structure: down-scatter dominated transfer matrices, a fission
spectrum peaked in the MeV range and D = 1/(3Σt).
"""
import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .materials import EnergyGrid, MaterialLibrary, load_material_library
from .util import PathLike, write_json

logger = logging.getLogger(__name__)

TOP_ENERGY_EV = 2.0e7
BOTTOM_ENERGY_EV = 1.0e-5

# Watt fission spectrum parameters (eV, 1/eV)
WATT_A = 0.988e6
WATT_B = 2.249e-6

# Reflected uranium sphere: fuel ball, thin inner steel shell, outer steel reflector
SPHERE_RADIUS_CM = 21.486
FUEL_RADIUS_CM = 13.213
INNER_SHELL_THICKNESS_CM = 1.758
DEFAULT_GROUPS = 87
SPHERE_SHELLS: List[Tuple[float, str]] = [
    (FUEL_RADIUS_CM, "fuel"),
    (FUEL_RADIUS_CM + INNER_SHELL_THICKNESS_CM, "steel_a"),
    (SPHERE_RADIUS_CM, "steel_b"),
]

# name -> (total cross section range in 1/cm, scattering ratio, fissile)
_MATERIAL_PROFILES: Dict[str, Tuple[Tuple[float, float], float, bool]] = {
    "fuel": ((0.25, 0.9), 0.75, True),
    "steel_a": ((0.3, 1.1), 0.92, False),
    "steel_b": ((0.3, 1.0), 0.95, False),
}


def log_energy_edges(n_groups: int) -> np.ndarray:
    return np.logspace(np.log10(TOP_ENERGY_EV), np.log10(BOTTOM_ENERGY_EV), n_groups + 1)


def watt_spectrum(edges: np.ndarray) -> np.ndarray:
    """Group-integrated Watt spectrum (midpoint rule), normalized to one."""
    mids = np.sqrt(edges[:-1] * edges[1:])
    widths = edges[:-1] - edges[1:]
    density = np.exp(-mids / WATT_A) * np.sinh(np.sqrt(WATT_B * mids))
    chi = density * widths
    return chi / chi.sum()


def _scattering_matrix(sigma_t: np.ndarray, ratio: float, rng: np.random.Generator) -> np.ndarray:
    n_groups = sigma_t.shape[0]
    sigma_s = np.zeros((n_groups, n_groups))
    for source in range(n_groups):
        reach = n_groups - source
        decay = 0.6 + 0.8 * rng.random()
        weights = np.exp(-np.arange(reach) / decay)
        weights[0] *= 2.0
        weights /= weights.sum()
        sigma_s[source, source:] = ratio * sigma_t[source] * weights
    return sigma_s


def _material(name: str, n_groups: int, chi: np.ndarray,
              rng: np.random.Generator) -> Dict[str, Any]:
    (low, high), ratio, fissile = _MATERIAL_PROFILES[name]
    sigma_t = np.linspace(low, high, n_groups) * (1.0 + 0.1 * rng.random(n_groups))
    sigma_s = _scattering_matrix(sigma_t, ratio, rng)
    absorption = sigma_t - sigma_s.sum(axis=1)
    if fissile:
        nu_sigma_f = 2.45 * 0.85 * absorption
        material_chi = chi
    else:
        nu_sigma_f = np.zeros(n_groups)
        material_chi = np.zeros(n_groups)
    return {
        "name": name,
        "diffusion": (1.0 / (3.0 * sigma_t)).tolist(),
        "sigma_t": sigma_t.tolist(),
        "sigma_s": sigma_s.tolist(),
        "nu_sigma_f": nu_sigma_f.tolist(),
        "chi": material_chi.tolist(),
    }


def generate_library_document(n_groups: int, seed: int = 0,
                              materials: Optional[List[str]] = None) -> Dict[str, Any]:
    """
    Build a library document for ``n_groups`` log-spaced groups.

    Args:
        n_groups: Number of energy groups G
        seed: Seed of the generator; equal seeds give identical documents
        materials: Subset of "fuel", "steel_a", "steel_b" (all by default)

    Returns:
        Document in the format accepted by load_material_library
    """
    if n_groups < 1:
        raise ValueError(f"n_groups must be positive, got {n_groups}")
    names = list(materials) if materials is not None else list(_MATERIAL_PROFILES)
    unknown = [name for name in names if name not in _MATERIAL_PROFILES]
    if unknown:
        raise ValueError(f"no synthetic profile for {', '.join(unknown)}")

    rng = np.random.default_rng(seed)
    edges = log_energy_edges(n_groups)
    chi = watt_spectrum(edges)
    document = {
        "groups": n_groups,
        "energy_edges_ev": edges.tolist(),
        "materials": [_material(name, n_groups, chi, rng) for name in names],
    }
    logger.debug(f"Generated synthetic library G={n_groups}, seed={seed}, materials={names}")
    return document


def synthetic_library(n_groups: int, seed: int = 0,
                      materials: Optional[List[str]] = None
                      ) -> Tuple[MaterialLibrary, Optional[EnergyGrid]]:
    return load_material_library(generate_library_document(n_groups, seed, materials))


def write_synthetic_library(path: PathLike, n_groups: int, seed: int = 0) -> None:
    write_json(path, generate_library_document(n_groups, seed))
    logger.info(f"Wrote synthetic {n_groups}-group library to {path}")
