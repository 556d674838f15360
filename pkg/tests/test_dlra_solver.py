import copy

import numpy as np
import pytest

from conftest import (
    SPHERE_CASES,
    homogeneous_operator,
    one_group_document,
    random_orthonormal,
    sphere_operator,
)
from core.errors import ConfigurationError, RankDeficiencyError
from core.kron_solve import MultiTermSystem
from core.lowrank import LowRankState, project_energy, project_space
from core.solvers import (
    AdaptiveDLRAPowerIteration,
    DLRAPowerIteration,
    dlra_power_iteration,
    dlra_power_iteration_adaptive,
    full_power_iteration,
    k_step,
    l_step,
    s_step,
)
from core.solvers.dlra_solver import initial_low_rank_state
from core.solvers.full_solver import dense_update


@pytest.fixture
def single_material_sphere():
    """One material filling the ball: the fundamental mode is separable (rank one)."""
    return sphere_operator(n_cells=20, n_groups=4, seed=5, materials=["fuel"])


def random_state(rng, n_x, g, rank):
    coeff = rng.standard_normal((rank, rank))
    return LowRankState(x_basis=random_orthonormal(rng, n_x, rank),
                        coeff=coeff / np.linalg.norm(coeff),
                        w_basis=random_orthonormal(rng, g, rank))


class TestInitialState:

    def test_deterministic_and_orthonormal(self, small_sphere):
        first = initial_low_rank_state(small_sphere, 3, seed=7)
        second = initial_low_rank_state(small_sphere, 3, seed=7)
        np.testing.assert_array_equal(first.x_basis, second.x_basis)
        np.testing.assert_array_equal(first.w_basis, second.w_basis)
        assert first.orthonormality_error() <= 1e-12
        assert np.linalg.norm(first.coeff) == pytest.approx(1.0)

    def test_leading_columns(self, small_sphere):
        state = initial_low_rank_state(small_sphere, 2)
        n_x, _ = small_sphere.shape
        np.testing.assert_allclose(state.x_basis[:, 0], np.ones(n_x) / np.sqrt(n_x))
        chi = small_sphere.initial_energy_vector()
        np.testing.assert_allclose(state.w_basis[:, 0], chi / np.linalg.norm(chi))

    @pytest.mark.parametrize("rank", [0, 5, 2.5, True])
    def test_invalid_rank(self, small_sphere, rank):
        with pytest.raises(ConfigurationError, match="rank"):
            initial_low_rank_state(small_sphere, rank)


class TestSubsteps:

    def test_k_step_spans_full_update_for_complete_energy_basis(self, rng):
        operator = sphere_operator(n_cells=6, n_groups=3, seed=2)
        x = random_orthonormal(rng, 6, 3)
        state = LowRankState(x_basis=x, coeff=np.diag([0.8, 0.5, 0.33]), w_basis=np.eye(3))
        x_new, n_x = k_step(operator, state)

        expected = dense_update(operator, state.to_dense())
        np.testing.assert_allclose(x_new @ (x_new.T @ expected), expected,
                                   atol=1e-10 * np.linalg.norm(expected))
        np.testing.assert_allclose(n_x, x_new.T @ x, atol=1e-14)
        assert np.all(np.diag(x_new.T @ expected) >= 0.0)

    def test_l_step_spans_full_update_for_complete_space_basis(self, rng):
        operator = sphere_operator(n_cells=3, n_groups=5, seed=1)
        w = random_orthonormal(rng, 5, 3)
        state = LowRankState(x_basis=np.eye(3), coeff=np.diag([0.8, 0.5, 0.33]), w_basis=w)
        w_new, n_e = l_step(operator, state)

        expected = dense_update(operator, state.to_dense()).T
        np.testing.assert_allclose(w_new @ (w_new.T @ expected), expected,
                                   atol=1e-10 * np.linalg.norm(expected))
        np.testing.assert_allclose(n_e, w_new.T @ w, atol=1e-14)

    def test_rank_one_s_step_closed_form(self, small_sphere, rng):
        n_x, g = small_sphere.shape
        x = random_orthonormal(rng, n_x, 1)
        w = random_orthonormal(rng, g, 1)
        s_init = np.array([[0.7]])
        hats = project_energy(small_sphere, w).combine(project_space(small_sphere, x))

        loss = sum(-hats.d_hat[t.key][0, 0] * hats.m_hat[t.key][0, 0]
                   for t in small_sphere.leakage_terms())
        loss += sum(hats.rho_hat[t.key][0, 0] * hats.sigma_hat[t.key][0, 0]
                    for t in small_sphere.collision_terms())
        source = sum(hats.rho_f_hat[t.key][0, 0] * 0.7 * hats.sigma_f_hat[t.key][0, 0]
                     for t in small_sphere.fission_terms())
        s_tilde = s_step(small_sphere, x, w, s_init)
        assert s_tilde[0, 0] == pytest.approx(source / loss, rel=1e-12)

    def test_s_step_solves_galerkin_system(self, small_sphere, rng):
        n_x, g = small_sphere.shape
        x = random_orthonormal(rng, n_x, 3)
        w = random_orthonormal(rng, g, 3)
        s_init = rng.standard_normal((3, 3))
        hats = project_energy(small_sphere, w).combine(project_space(small_sphere, x))
        s_tilde = s_step(small_sphere, x, w, s_init, hats)

        system = MultiTermSystem.from_terms(
            [(hats.d_hat[t.key], hats.m_hat[t.key]) for t in small_sphere.leakage_terms()],
            [(hats.rho_hat[t.key], hats.sigma_hat[t.key]) for t in small_sphere.collision_terms()],
            3, 3)
        rhs = sum(hats.rho_f_hat[t.key] @ s_init @ hats.sigma_f_hat[t.key]
                  for t in small_sphere.fission_terms())
        assert np.linalg.norm(system.apply(s_tilde) - rhs) <= 1e-10 * np.linalg.norm(rhs)


class TestFixedRank:

    def test_square_full_rank_step_equals_dense_update(self, rng):
        operator = sphere_operator(n_cells=4, n_groups=4, seed=4)
        state = random_state(rng, 4, 4, 4)
        solver = DLRAPowerIteration(operator, init=state)
        result = solver.step(state)

        expected = dense_update(operator, state.to_dense())
        np.testing.assert_allclose(result.k * result.state.to_dense(), expected,
                                   atol=1e-10 * np.linalg.norm(expected))
        assert result.k == pytest.approx(np.linalg.norm(expected), rel=1e-10)

    @pytest.mark.parametrize("seed, n_cells, n_groups", SPHERE_CASES)
    def test_full_rank_matches_full_solver(self, seed, n_cells, n_groups):
        operator = sphere_operator(n_cells=n_cells, n_groups=n_groups, seed=seed)
        k_full, _, _ = full_power_iteration(operator, eps=1e-12)
        k, state, history = dlra_power_iteration(operator, rank=n_groups, eps=1e-12)
        assert history.converged
        assert state.rank == n_groups
        assert k == pytest.approx(k_full, abs=1e-8)

    def test_rank_one_recovers_separable_mode(self, single_material_sphere):
        k_full, phi, _ = full_power_iteration(single_material_sphere, eps=1e-12)
        k, state, history = dlra_power_iteration(single_material_sphere, rank=1, eps=1e-12)
        assert history.converged
        assert k == pytest.approx(k_full, abs=1e-8)
        np.testing.assert_allclose(np.abs(state.to_dense()), np.abs(phi), atol=1e-6)

    def test_low_rank_approaches_full_k(self):
        operator = sphere_operator(n_cells=24, n_groups=6, seed=0)
        k_full, _, _ = full_power_iteration(operator, eps=1e-12)
        errors = []
        for rank in (1, 3, 6):
            k, _, _ = dlra_power_iteration(operator, rank=rank, eps=1e-12)
            errors.append(abs(k - k_full))
        assert errors[-1] <= 1e-8
        assert errors[-1] <= errors[0]

    def test_bases_stay_orthonormal(self, small_sphere):
        errors = []

        def callback(iteration, state):
            errors.append(state.orthonormality_error())
            assert np.linalg.norm(state.coeff) == pytest.approx(1.0, abs=1e-12)
            assert np.linalg.norm(state.to_dense()) == pytest.approx(1.0, abs=1e-10)

        _, state, _ = dlra_power_iteration(small_sphere, rank=2, eps=1e-10, callback=callback)
        assert max(errors) <= 1e-10
        assert state.orthonormality_error() <= 1e-10

    def test_requires_rank(self, small_sphere):
        with pytest.raises(ConfigurationError, match="rank required"):
            DLRAPowerIteration(small_sphere)

    def test_zero_fission_source(self):
        document = copy.deepcopy(one_group_document())
        document["materials"][0]["nu_sigma_f"] = [0.0]
        document["materials"][0]["chi"] = [0.0]
        operator = homogeneous_operator(document)
        with pytest.raises(RankDeficiencyError, match="source vanished"):
            dlra_power_iteration(operator, rank=1)

    def test_non_strict_returns_last_state(self, small_sphere):
        k, state, history = dlra_power_iteration(small_sphere, rank=2, eps=0.0, max_iter=2,
                                                 strict=False)
        assert not history.converged
        assert history.iterations == 2
        assert state.rank == 2


class TestAdaptive:

    def test_rank_doubles_without_truncation(self):
        operator = sphere_operator(n_cells=10, n_groups=8, seed=6)
        _, state, history = dlra_power_iteration_adaptive(
            operator, rank=2, theta=0.0, r_min=1, eps=0.0, max_iter=3, strict=False)
        assert history.ranks == [4, 8, 8]
        assert state.rank == 8
        assert state.shape == (10, 8)

    def test_truncates_to_separable_mode(self, single_material_sphere):
        k_full, _, _ = full_power_iteration(single_material_sphere, eps=1e-12)
        k, state, history = dlra_power_iteration_adaptive(
            single_material_sphere, rank=4, theta=1e-4, r_min=1, eps=1e-12)
        assert history.converged
        assert state.rank == 1
        assert k == pytest.approx(k_full, abs=1e-8)
        assert all(d is not None for d in history.discarded)

    def test_rank_clamps(self, small_sphere):
        _, state, history = dlra_power_iteration_adaptive(
            small_sphere, rank=2, theta=0.0, r_min=2, r_max=3, eps=0.0, max_iter=4,
            strict=False)
        assert max(history.ranks) <= 3
        assert min(history.ranks) >= 2

    def test_absolute_tolerance(self, small_sphere):
        _, _, absolute = dlra_power_iteration_adaptive(
            small_sphere, rank=2, theta=1e3, theta_relative=False, r_min=1, eps=0.0,
            max_iter=5, strict=False)
        assert absolute.ranks == [1] * 5

    def test_initial_rank_defaults_to_r_min(self, small_sphere):
        assert AdaptiveDLRAPowerIteration(small_sphere, r_min=3).rank == 3
        assert AdaptiveDLRAPowerIteration(small_sphere, r_min=9).rank == 4
        _, state, history = dlra_power_iteration_adaptive(
            small_sphere, theta=0.0, r_min=1, eps=0.0, max_iter=1, strict=False)
        assert history.ranks == [2]
        assert state.rank == 2

    @pytest.mark.parametrize("settings, field", [
        ({"theta": -1.0}, "theta"),
        ({"r_min": 0}, "r_min"),
        ({"r_max": 9}, "r_max"),
        ({"rank": 4, "r_max": 3}, "r_max"),
    ])
    def test_invalid_settings(self, small_sphere, settings, field):
        options = {"rank": 2, **settings}
        with pytest.raises(ConfigurationError, match=field):
            AdaptiveDLRAPowerIteration(small_sphere, **options)
