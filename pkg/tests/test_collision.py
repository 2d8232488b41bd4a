"""BGK碰撞核测试"""
import numpy as np
import pytest

from src.core.collision import CollisionKernel, coefficient_axes
from src.core.maxwellian import nodal_values, tensor_A, tensor_B
from src.models.error import ConfigurationError, OrthogonalityError
from src.models.state import MaxwellianParams


class TestConstruction:

    def test_unknown_mode(self, gh_grid):
        with pytest.raises(ConfigurationError):
            CollisionKernel(gh_grid, mode="hard_spheres")

    def test_non_positive_rate(self, gh_grid):
        with pytest.raises(ConfigurationError):
            CollisionKernel(gh_grid, mode="bgk", relaxation_rate=0.0)

    def test_full_only_operations(self, bgk_kernel):
        assert not bgk_kernel.is_full
        with pytest.raises(ConfigurationError):
            bgk_kernel.q_field(bgk_kernel.grid.maxwell_weights, 0.1)


class TestLinearizedOperator:

    def test_kernel_is_collision_invariants(self, bgk_kernel):
        invariants = bgk_kernel.grid.invariants()
        np.testing.assert_allclose(bgk_kernel.linearized_L(invariants), 0.0, atol=1e-10)

    def test_self_adjoint_and_non_negative(self, bgk_kernel, rng):
        grid = bgk_kernel.grid
        g, h = rng.normal(size=(2, grid.size))
        lg, lh = bgk_kernel.linearized_L(g), bgk_kernel.linearized_L(h)
        assert abs(grid.inner(h, lg) - grid.inner(lh, g)) < 1e-10
        assert grid.inner(g, lg) >= 0.0

    def test_relaxation_exp(self, bgk_kernel, rng):
        grid = bgk_kernel.grid
        g = rng.normal(size=grid.size)
        relaxed = bgk_kernel.relaxation_exp(g, 0.7)
        np.testing.assert_allclose(grid.project_hydro(relaxed), grid.project_hydro(g), atol=1e-12)
        np.testing.assert_allclose(grid.project_ortho(relaxed), np.exp(-0.7) * grid.project_ortho(g), atol=1e-12)

    def test_spectral_gap_is_rate(self, gh_grid):
        kernel = CollisionKernel(gh_grid, mode="bgk", relaxation_rate=2.5)
        assert kernel.spectral_gap() == 2.5


class TestBilinearTerm:

    def test_symmetrized_q_conserves_moments(self, bgk_kernel, rng):
        grid = bgk_kernel.grid
        g = rng.normal(size=(3, grid.size))
        q = bgk_kernel.symmetrized_Q(g, g)
        np.testing.assert_allclose(grid.hydro_coefficients(q), 0.0, atol=1e-10)

    def test_q_vanishes_on_orthogonal_part(self, bgk_kernel, rng):
        grid = bgk_kernel.grid
        g = grid.project_ortho(rng.normal(size=grid.size))
        np.testing.assert_allclose(bgk_kernel.symmetrized_Q(g, g), 0.0, atol=1e-12)


class TestTransportCoefficients:

    def test_unit_rate_gives_unit_coefficients(self, bgk_kernel):
        mu, kappa = bgk_kernel.transport_coefficients()
        assert abs(mu - 1.0) < 1e-8
        assert abs(kappa - 1.0) < 1e-8

    def test_coefficients_scale_with_inverse_rate(self, gh_grid):
        mu, kappa = CollisionKernel(gh_grid, mode="bgk", relaxation_rate=2.0).transport_coefficients()
        assert abs(mu - 0.5) < 1e-8
        assert abs(kappa - 0.5) < 1e-8

    def test_isotropic_hat_tensors(self, bgk_kernel):
        grid = bgk_kernel.grid
        a_hat, b_hat, residual = bgk_kernel.hat_tensors()
        mu, kappa = bgk_kernel.transport_coefficients()
        assert residual < 1e-8

        delta = np.eye(3)
        expected_a = mu * (np.einsum("ik,jl->ijkl", delta, delta) + np.einsum("il,jk->ijkl", delta, delta)
                           - (2.0 / 3.0) * np.einsum("ij,kl->ijkl", delta, delta))
        measured_a = np.einsum("n,nij,nkl->ijkl", grid.measure, a_hat, tensor_A(grid.nodes))
        np.testing.assert_allclose(measured_a, expected_a, atol=1e-6)

        measured_b = np.einsum("n,ni,nj->ij", grid.measure, b_hat, tensor_B(grid.nodes))
        np.testing.assert_allclose(measured_b, 2.5 * kappa * delta, atol=1e-6)

    def test_solve_hat_rejects_hydrodynamic_input(self, bgk_kernel):
        with pytest.raises(OrthogonalityError):
            bgk_kernel.solve_hat(np.ones(bgk_kernel.grid.size))

    def test_local_coefficients_proportional_to_density(self, bgk_kernel):
        rho = np.array([0.9, 1.0, 1.1])
        theta = np.array([1.05, 1.0, 0.95])
        mu, kappa = bgk_kernel.local_coefficients(rho, theta)
        np.testing.assert_allclose(mu, rho, rtol=1e-8)
        np.testing.assert_allclose(kappa, rho, rtol=1e-8)

    def test_table_matches_quadrature_at_nodes(self, bgk_kernel):
        rho_axis, theta_axis = coefficient_axes()
        rho, theta = np.meshgrid(rho_axis[::3], theta_axis[::3], indexing="ij")
        mu, kappa = bgk_kernel.local_coefficients(rho.ravel(), theta.ravel())
        expected = np.array([bgk_kernel.local_quadrature(r, t) for r, t in zip(rho.ravel(), theta.ravel())])
        np.testing.assert_allclose(mu, expected[:, 0], rtol=1e-12)
        np.testing.assert_allclose(kappa, expected[:, 1], rtol=1e-12)

    @pytest.mark.parametrize("theta", [0.5, 1.0, 1.7])
    def test_local_quadrature_scales_with_density(self, bgk_kernel, theta):
        mu, kappa = bgk_kernel.local_quadrature(1.6, theta)
        assert mu == pytest.approx(1.6, rel=1e-8)
        assert kappa == pytest.approx(1.6, rel=1e-8)


class TestDissipation:

    def test_vanishes_at_global_maxwellian(self, bgk_kernel):
        assert abs(float(bgk_kernel.entropy_dissipation(bgk_kernel.grid.maxwell_weights))) < 1e-14

    def test_non_negative(self, bgk_kernel, rng):
        grid = bgk_kernel.grid
        f = grid.maxwell_weights * np.exp(0.2 * rng.normal(size=(4, grid.size)))
        assert np.all(bgk_kernel.entropy_dissipation(f) >= 0.0)

    def test_collide_conserves_moments(self, bgk_kernel):
        grid = bgk_kernel.grid
        f = nodal_values(MaxwellianParams(rho=1.1, u=(0.2, 0.0, 0.0), theta=0.9), grid)
        f = f * (1.0 + 0.1 * np.cos(grid.nodes[:, 0]))
        change = bgk_kernel.collide(f)
        for moment in grid.raw_moments(change):
            np.testing.assert_allclose(moment, 0.0, atol=1e-12)
