import copy

import numpy as np
import pytest

from conftest import one_group_document, two_group_document
from core.errors import ConfigurationError, ContractViolationError, MaterialLibraryError
from core.materials import (
    build_density_field,
    interface_diffusion_factor,
    load_material_library,
    read_material_library,
)
from core.mesh import build_spherical_mesh
from core.synthetic import SPHERE_SHELLS, synthetic_library


def test_minimal_library():
    library, grid = load_material_library(one_group_document())
    assert grid is None
    assert library.n_groups == 1
    assert library.names == ["core"]
    assert library["core"].is_fissile


def test_library_from_json_text():
    import json

    library, grid = load_material_library(json.dumps(two_group_document()))
    assert library.n_groups == 2
    np.testing.assert_allclose(grid.widths, [2.0e7 - 5.0, 5.0])


def test_group_count_mismatch():
    document = two_group_document()
    extra = copy.deepcopy(document["materials"][0])
    extra["name"] = "wide"
    for key in ("diffusion", "sigma_t", "nu_sigma_f", "chi"):
        extra[key] = extra[key] + [0.0 if key in ("nu_sigma_f", "chi") else 1.0]
    extra["sigma_s"] = np.zeros((3, 3)).tolist()
    document["materials"].append(extra)
    with pytest.raises(MaterialLibraryError, match="group count mismatch") as excinfo:
        load_material_library(document)
    assert excinfo.value.field_path.startswith("materials[1]")


def test_chi_not_normalized():
    document = two_group_document()
    document["materials"][0]["chi"] = [0.7, 0.2]
    with pytest.raises(MaterialLibraryError, match="chi not normalized") as excinfo:
        load_material_library(document)
    assert excinfo.value.field_path == "materials[0].chi"


def test_negative_cross_section():
    document = one_group_document()
    document["materials"][0]["sigma_s"] = [[-0.1]]
    with pytest.raises(MaterialLibraryError, match="negative cross section"):
        load_material_library(document)


def test_fissile_material_needs_spectrum():
    document = one_group_document()
    document["materials"][0]["chi"] = [0.0]
    with pytest.raises(MaterialLibraryError, match="normalized chi"):
        load_material_library(document)


def test_duplicate_names():
    document = one_group_document()
    document["materials"].append(copy.deepcopy(document["materials"][0]))
    with pytest.raises(MaterialLibraryError, match="duplicate"):
        load_material_library(document)


def test_missing_library_file(tmp_path):
    with pytest.raises(MaterialLibraryError) as excinfo:
        read_material_library(tmp_path / "missing.json")
    assert excinfo.value.field_path == "materials_file"


def test_reflected_sphere_bands():
    library, _ = synthetic_library(4, seed=0)
    mesh = build_spherical_mesh(21.486, 400)
    density = build_density_field(mesh, SPHERE_SHELLS, library)
    owner = density.cell_materials()
    # contiguous bands fuel -> steel_a -> steel_b
    assert np.all(np.diff(owner) >= 0)
    assert set(owner.tolist()) == {0, 1, 2}
    np.testing.assert_allclose(density.rho.sum(axis=1), 1.0)
    assert np.all(mesh.centers[owner == 0] < 13.213)
    in_shell = (mesh.centers > 13.213) & (mesh.centers < 14.971)
    assert np.all(owner[in_shell] == 1)


def test_single_shell():
    library, _ = load_material_library(one_group_document())
    mesh = build_spherical_mesh(3.0, 6)
    density = build_density_field(mesh, [(3.0, "core")], library)
    np.testing.assert_array_equal(density.rho, np.ones((6, 1)))


def test_overlapping_shells():
    library, _ = load_material_library(one_group_document())
    mesh = build_spherical_mesh(5.0, 10)
    with pytest.raises(ConfigurationError, match="shell radii not increasing"):
        build_density_field(mesh, [(5.0, "core"), (4.0, "core")], library)


def test_shells_must_cover_mesh():
    library, _ = load_material_library(one_group_document())
    mesh = build_spherical_mesh(5.0, 10)
    with pytest.raises(ConfigurationError, match="do not cover"):
        build_density_field(mesh, [(4.0, "core")], library)


def test_unknown_shell_material():
    library, _ = load_material_library(one_group_document())
    mesh = build_spherical_mesh(5.0, 10)
    with pytest.raises(ConfigurationError, match="unknown material") as excinfo:
        build_density_field(mesh, [(5.0, "lead")], library)
    assert excinfo.value.field_path == "shells[0].material"


@pytest.mark.parametrize("d_l, d_k, expected", [(2.0, 6.0, 1.5), (1.0, 1.0, 0.5), (3.0, 3.0, 1.5)])
def test_interface_diffusion_factor(d_l, d_k, expected):
    assert interface_diffusion_factor(d_l, d_k) == pytest.approx(expected, rel=1e-15)
    assert interface_diffusion_factor(d_k, d_l) == pytest.approx(expected, rel=1e-15)


def test_interface_factor_elementwise():
    np.testing.assert_allclose(interface_diffusion_factor([2.0, 1.0], [6.0, 1.0]), [1.5, 0.5])


def test_interface_factor_rejects_zero():
    with pytest.raises(ContractViolationError):
        interface_diffusion_factor(0.0, 1.0)
