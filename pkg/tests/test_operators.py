import math

import numpy as np
import pytest

from conftest import homogeneous_operator, one_group_document, sphere_operator, two_group_document
from core.errors import AssemblyError, ConfigurationError
from core.materials import build_density_field, load_material_library
from core.mesh import build_spherical_mesh
from core.operators import assemble_operators


def loop_lhs(operator, phi):
    """Cell-by-cell finite-volume balance with harmonic-mean face coefficients."""
    mesh, library = operator.mesh, operator.library
    owner = operator.density.cell_materials()
    n_cells, n_groups = phi.shape
    result = np.zeros_like(phi)
    for j in range(n_cells):
        here = library[owner[j]]
        for g in range(n_groups):
            leak = 0.0
            for neighbour, face in ((j + 1, mesh.surfaces[j + 1]), (j - 1, mesh.surfaces[j])):
                if 0 <= neighbour < n_cells:
                    there = library[owner[neighbour]]
                    d_face = 2.0 * here.diffusion[g] * there.diffusion[g] / (
                        here.diffusion[g] + there.diffusion[g])
                    leak += face * d_face * (phi[neighbour, g] - phi[j, g])
            if j == n_cells - 1 and operator.outer_boundary == "zero_flux":
                leak -= mesh.surfaces[-1] * here.diffusion[g] * phi[j, g]
            leak /= mesh.dr * mesh.volumes[j]
            collision = here.sigma_t[g] * phi[j, g] - sum(
                here.sigma_s[source, g] * phi[j, source] for source in range(n_groups))
            result[j, g] = -leak + collision
    return result


def loop_fission(operator, phi):
    library = operator.library
    owner = operator.density.cell_materials()
    result = np.zeros_like(phi)
    for j in range(phi.shape[0]):
        material = library[owner[j]]
        production = sum(material.nu_sigma_f[s] * phi[j, s] for s in range(phi.shape[1]))
        result[j] = production * material.chi
    return result


def test_zero_flux_gives_zero(small_sphere):
    np.testing.assert_array_equal(small_sphere.apply_lhs(np.zeros(small_sphere.shape)), 0.0)


def test_scalar_collision_only():
    operator = homogeneous_operator(one_group_document(), n_cells=1, radius=1.0)
    assert operator.leakage_terms() == []
    np.testing.assert_allclose(operator.apply_lhs([[2.0]]), [[1.2]], rtol=1e-15)


def test_one_cell_zero_flux_boundary():
    operator = homogeneous_operator(one_group_document(), n_cells=1, radius=1.0,
                                    outer_boundary="zero_flux")
    # D S / (dr V) = 4π / (4π/3) = 3 plus removal 0.6
    np.testing.assert_allclose(operator.apply_lhs([[1.0]]), [[3.6]], rtol=1e-14)


@pytest.mark.parametrize("outer_boundary", ["zero_flux", "reflective"])
def test_lhs_matches_loop_oracle(outer_boundary, rng):
    operator = sphere_operator(n_cells=9, n_groups=3, seed=5)
    if outer_boundary == "reflective":
        operator = assemble_operators(operator.mesh, operator.library, operator.density,
                                      "reflective")
    phi = rng.standard_normal(operator.shape)
    expected = loop_lhs(operator, phi)
    np.testing.assert_allclose(operator.apply_lhs(phi), expected,
                               atol=1e-13 * np.abs(expected).max())


def test_fission_matches_loop_oracle(rng):
    operator = sphere_operator(n_cells=9, n_groups=3, seed=5)
    phi = rng.standard_normal(operator.shape)
    np.testing.assert_allclose(operator.apply_fission(phi), loop_fission(operator, phi),
                               atol=1e-14)


def test_interface_uses_harmonic_mean():
    document = {
        "groups": 1,
        "materials": [
            {"name": "a", "diffusion": [2.0], "sigma_t": [1.0], "sigma_s": [[0.0]],
             "nu_sigma_f": [0.0], "chi": [0.0]},
            {"name": "b", "diffusion": [6.0], "sigma_t": [1.0], "sigma_s": [[0.0]],
             "nu_sigma_f": [0.0], "chi": [0.0]},
        ],
    }
    library, _ = load_material_library(document)
    mesh = build_spherical_mesh(2.0, 2)
    density = build_density_field(mesh, [(1.0, "a"), (2.0, "b")], library)
    operator = assemble_operators(mesh, library, density, "reflective")
    assert set(operator.spatial_stencils) == {(0, 1), (1, 0)}
    np.testing.assert_allclose(operator.energy_diffusion[(0, 1)], [[1.5]])
    response = operator.apply_lhs([[0.0], [1.0]])
    # harmonic mean 2·2·6/(2+6) = 3 across the face at r = 1
    expected = -3.0 * mesh.surfaces[1] / (mesh.dr * mesh.volumes[0])
    assert response[0, 0] == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("seed", range(6))
def test_random_layouts_use_harmonic_mean(seed):
    rng = np.random.default_rng(seed)
    n_cells = int(rng.integers(3, 15))
    owners = [str(name) for name in rng.choice(["fuel", "steel_a", "steel_b"], n_cells)]
    edges = build_spherical_mesh(5.0, n_cells).edges
    shells = [(float(edges[j + 1]), owners[j]) for j in range(n_cells)]
    operator = sphere_operator(n_cells=n_cells, n_groups=3, seed=seed, radius=5.0, shells=shells)
    assert list(operator.density.cell_materials()) == [
        operator.library.index(name) for name in owners]
    phi = rng.standard_normal(operator.shape)
    expected = loop_lhs(operator, phi)
    np.testing.assert_allclose(operator.apply_lhs(phi), expected,
                               atol=1e-12 * np.abs(expected).max())


def test_reflective_rows_conserve(small_sphere):
    operator = assemble_operators(small_sphere.mesh, small_sphere.library, small_sphere.density,
                                  "reflective")
    ones = np.ones(operator.shape)
    owner = operator.density.cell_materials()
    removal = np.array([operator.library[m].sigma_t - operator.library[m].sigma_s.sum(axis=0)
                        for m in owner])
    np.testing.assert_allclose(operator.apply_lhs(ones), removal, atol=1e-12)


def test_two_group_fission_balance():
    operator = homogeneous_operator(two_group_document(), n_cells=1, radius=1.0)
    np.testing.assert_allclose(operator.apply_fission([[1.0, 0.375]]), [[0.875, 0.0]])


def test_non_fissile_library_has_no_source():
    document = one_group_document()
    document["materials"][0]["nu_sigma_f"] = [0.0]
    document["materials"][0]["chi"] = [0.0]
    operator = homogeneous_operator(document)
    assert operator.fission_terms() == []
    np.testing.assert_array_equal(operator.apply_fission(np.ones(operator.shape)), 0.0)


def test_uniform_flux_fission_rows():
    operator = homogeneous_operator(two_group_document(), n_cells=3)
    np.testing.assert_allclose(operator.apply_fission(np.ones((3, 2))),
                               np.tile([1.5, 0.0], (3, 1)))


def test_inactive_materials_are_skipped():
    operator = sphere_operator(n_cells=6, n_groups=2, seed=0, radius=5.0,
                               shells=[(5.0, "fuel")])
    assert operator.active_materials == [0]
    assert set(operator.spatial_stencils) == {(0, 0)}
    assert [t.key for t in operator.collision_terms()] == [0]


def test_initial_energy_vector_is_fission_spectrum(small_sphere):
    np.testing.assert_allclose(small_sphere.initial_energy_vector(),
                               small_sphere.library["fuel"].chi)


def test_unknown_boundary(small_sphere):
    with pytest.raises(ConfigurationError, match="outer boundary"):
        assemble_operators(small_sphere.mesh, small_sphere.library, small_sphere.density,
                           "vacuum")


def test_operand_shape_checked(small_sphere):
    with pytest.raises(AssemblyError):
        small_sphere.apply_lhs(np.ones((3, 3)))


def test_single_cell_volume_scale():
    mesh = build_spherical_mesh(1.0, 1)
    assert mesh.surfaces[-1] / (mesh.dr * mesh.volumes[0]) == pytest.approx(3.0)
    assert math.isclose(mesh.volumes[0], 4.0 * math.pi / 3.0)
