import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpatialMesh:
    """
    Uniform 1-D spherical finite-volume mesh.

    edges[0] is the sphere center and edges[-1] the outer radius; surfaces
    holds 4πr² at every edge, volumes the shell volume of every cell.
    """

    n_cells: int
    dr: float
    edges: np.ndarray
    centers: np.ndarray
    volumes: np.ndarray
    surfaces: np.ndarray

    @property
    def radius(self) -> float:
        return float(self.edges[-1])

    @property
    def total_volume(self) -> float:
        return 4.0 * math.pi / 3.0 * self.radius ** 3


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def build_spherical_mesh(total_radius: float, n_cells: int) -> SpatialMesh:
    """
    Build a uniform spherical mesh.

    Args:
        total_radius: Outer radius R in cm
        n_cells: Number of radial cells N_x

    Returns:
        SpatialMesh with dr = R / N_x
    """
    if isinstance(n_cells, bool) or not isinstance(n_cells, (int, np.integer)):
        raise ConfigurationError(f"n_cells must be an integer, got {n_cells!r}", "mesh.n_cells")
    if n_cells < 1:
        raise ConfigurationError(f"n_cells must be at least 1, got {n_cells}", "mesh.n_cells")
    if not (isinstance(total_radius, (int, float, np.floating)) and math.isfinite(total_radius)) \
            or total_radius <= 0:
        raise ConfigurationError(f"radius must be a positive number, got {total_radius!r}",
                                 "mesh.radius_cm")

    n_cells = int(n_cells)
    total_radius = float(total_radius)
    dr = total_radius / n_cells
    edges = np.arange(n_cells + 1, dtype=float) * dr
    edges[-1] = total_radius
    centers = 0.5 * (edges[:-1] + edges[1:])
    volumes = 4.0 * math.pi / 3.0 * (edges[1:] ** 3 - edges[:-1] ** 3)
    surfaces = 4.0 * math.pi * edges ** 2

    logger.debug(f"Spherical mesh: R={total_radius} cm, N_x={n_cells}, dr={dr}")
    return SpatialMesh(
        n_cells=n_cells,
        dr=dr,
        edges=_frozen(edges),
        centers=_frozen(centers),
        volumes=_frozen(volumes),
        surfaces=_frozen(surfaces),
    )
