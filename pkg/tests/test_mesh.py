import math

import numpy as np
import pytest

from core.errors import ConfigurationError
from core.mesh import build_spherical_mesh


def test_single_cell_sphere():
    mesh = build_spherical_mesh(1.0, 1)
    np.testing.assert_allclose(mesh.edges, [0.0, 1.0])
    np.testing.assert_allclose(mesh.volumes, [4.0 * math.pi / 3.0], rtol=1e-14)
    np.testing.assert_allclose(mesh.surfaces, [0.0, 4.0 * math.pi], rtol=1e-14)


def test_two_cell_sphere():
    mesh = build_spherical_mesh(2.0, 2)
    np.testing.assert_allclose(mesh.volumes, [4.0 * math.pi / 3.0, 28.0 * math.pi / 3.0],
                               rtol=1e-14)
    assert mesh.surfaces[1] == pytest.approx(4.0 * math.pi, rel=1e-14)
    np.testing.assert_allclose(mesh.centers, [0.5, 1.5])


def test_reflected_sphere_spacing():
    mesh = build_spherical_mesh(21.486, 400)
    assert mesh.dr == pytest.approx(0.053715, rel=1e-14)
    assert mesh.edges[-1] == 21.486
    assert mesh.volumes.sum() == pytest.approx(mesh.total_volume, rel=1e-12)


def test_arrays_are_read_only():
    mesh = build_spherical_mesh(3.0, 5)
    with pytest.raises(ValueError):
        mesh.volumes[0] = 1.0


@pytest.mark.parametrize("radius, n_cells, field", [
    (1.0, 0, "mesh.n_cells"),
    (1.0, 2.5, "mesh.n_cells"),
    (0.0, 4, "mesh.radius_cm"),
    (-2.0, 4, "mesh.radius_cm"),
    (float("nan"), 4, "mesh.radius_cm"),
])
def test_invalid_mesh(radius, n_cells, field):
    with pytest.raises(ConfigurationError) as excinfo:
        build_spherical_mesh(radius, n_cells)
    assert excinfo.value.field_path == field


@pytest.mark.parametrize("seed", range(10))
def test_random_meshes_conserve_volume(seed):
    rng = np.random.default_rng(seed)
    radius = float(rng.uniform(0.1, 100.0))
    n_cells = int(rng.integers(1, 500))
    mesh = build_spherical_mesh(radius, n_cells)
    assert mesh.volumes.sum() == pytest.approx(4.0 * math.pi * radius ** 3 / 3.0, rel=1e-12)
    assert np.all(mesh.volumes > 0.0)
    assert mesh.surfaces[0] == 0.0
    assert np.all(np.diff(mesh.surfaces) > 0.0)
    np.testing.assert_allclose(mesh.surfaces, 4.0 * math.pi * mesh.edges ** 2, rtol=1e-14)
