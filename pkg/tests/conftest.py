import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pytest

from core.materials import build_density_field, load_material_library
from core.mesh import build_spherical_mesh
from core.operators import assemble_operators
from core.synthetic import SPHERE_RADIUS_CM, SPHERE_SHELLS, generate_library_document


# (seed, n_cells, n_groups) of the seeded reflected-sphere oracle cases
SPHERE_CASES = [(0, 20, 4), (1, 30, 6), (2, 40, 8), (3, 16, 3), (4, 25, 5)]


def one_group_document() -> Dict[str, Any]:
    """Infinite-medium one-group material: k = 0.9 / (1 - 0.4) = 1.5."""
    return {
        "groups": 1,
        "materials": [{
            "name": "core",
            "diffusion": [1.0],
            "sigma_t": [1.0],
            "sigma_s": [[0.4]],
            "nu_sigma_f": [0.9],
            "chi": [1.0],
        }],
    }


def two_group_document() -> Dict[str, Any]:
    """Two-group balance: phi_2 = 0.375 phi_1, fission 0.875, removal 0.7, so k = 1.25."""
    return {
        "groups": 2,
        "energy_edges_ev": [2.0e7, 5.0, 0.0],
        "materials": [{
            "name": "core",
            "diffusion": [1.0, 0.5],
            "sigma_t": [1.0, 1.0],
            "sigma_s": [[0.3, 0.3], [0.0, 0.2]],
            "nu_sigma_f": [0.5, 1.0],
            "chi": [1.0, 0.0],
        }],
    }


def homogeneous_operator(document: Dict[str, Any], n_cells: int = 4, radius: float = 2.0,
                         outer_boundary: str = "reflective"):
    library, _ = load_material_library(document)
    mesh = build_spherical_mesh(radius, n_cells)
    density = build_density_field(mesh, [(radius, library.names[0])], library)
    return assemble_operators(mesh, library, density, outer_boundary)


def sphere_operator(n_cells: int, n_groups: int, seed: int = 0,
                    materials: Optional[List[str]] = None, radius: float = SPHERE_RADIUS_CM,
                    shells: Optional[Sequence[Tuple[float, str]]] = None):
    """Synthetic reflected sphere (or a single-material ball when ``materials`` has one name)."""
    document = generate_library_document(n_groups, seed=seed, materials=materials)
    library, _ = load_material_library(document)
    mesh = build_spherical_mesh(radius, n_cells)
    if shells is None:
        shells = SPHERE_SHELLS if materials is None else [(radius, materials[0])]
    density = build_density_field(mesh, shells, library)
    return assemble_operators(mesh, library, density)


def dense_dominant_k(operator) -> float:
    """Largest eigenvalue of E^-1 F for the flattened loss and fission operators."""
    from core.kron_solve import _assemble_dense

    loss = _assemble_dense(operator.lhs_system())
    source = _assemble_dense(operator.fission_system())
    values = np.linalg.eigvals(np.linalg.solve(loss, source))
    return float(np.max(values.real))


def random_orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q


def read_key_values(path: Path) -> Dict[str, str]:
    """Parse a summary.txt record of key=value lines."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return dict(line.split("=", 1) for line in lines if "=" in line)


def write_problem(directory: Path, config: Dict[str, Any],
                  library: Optional[Dict[str, Any]] = None) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    if library is not None:
        (directory / "materials.json").write_text(json.dumps(library), encoding="utf-8")
        config = {"materials_file": "materials.json", **config}
    path = directory / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def one_group_operator():
    return homogeneous_operator(one_group_document())


@pytest.fixture
def two_group_operator():
    return homogeneous_operator(two_group_document())


@pytest.fixture
def small_sphere():
    return sphere_operator(n_cells=12, n_groups=4, seed=3)
