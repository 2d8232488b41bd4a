"""速度网格与求积测试"""
import math

import numpy as np
import pytest

from numpy.polynomial.hermite_e import hermegauss

from src.core.velocity_grid import VelocityGrid, build_grid, sphere_rule
from src.models.error import ConfigurationError, DimensionError


class TestQuadrature:
    """Gauss测度下的矩"""

    def test_gauss_hermite_moments(self):
        grid = build_grid(points_per_axis=24, rule="gauss_hermite")
        v = grid.nodes
        speed2 = grid.speed_squared

        assert abs(grid.mean(1.0) - 1.0) < 1e-10
        second = np.einsum("n,ni,nj->ij", grid.measure, v, v)
        np.testing.assert_allclose(second, np.eye(3), atol=1e-10)
        assert abs(grid.mean(speed2**2) - 15.0) < 1e-10
        assert abs(grid.mean(speed2**3) - 105.0) < 1e-10

    def test_weights_absorb_gauss_measure(self, gh_grid):
        np.testing.assert_allclose(gh_grid.weights * gh_grid.maxwell_weights, gh_grid.measure, rtol=1e-12)

    def test_quadrature_report(self, gh_grid):
        report = gh_grid.quadrature_report()
        assert set(report) == {"norm_defect", "second_moment_defect", "fourth_moment_defect",
                               "sphere_area_defect"}
        assert all(abs(value) < 1e-10 for value in report.values())

    def test_uniform_grid_normalization(self):
        grid = build_grid(points_per_axis=8, rule="uniform_trapezoid", truncation_radius=6.0)
        assert abs(grid.mean(1.0) - 1.0) <= 1e-3
        # 节点关于原点对称
        np.testing.assert_allclose(np.sort(grid.axis_nodes), np.sort(-grid.axis_nodes))


class TestSphereRule:

    def test_cube_diagonals(self):
        nodes, weights = sphere_rule(2, 4)
        assert nodes.shape == (8, 3)
        np.testing.assert_allclose(np.abs(nodes), 1.0 / math.sqrt(3.0), atol=1e-14)
        assert abs(weights.sum() - 4 * math.pi) < 1e-12

    def test_closed_under_reflection(self):
        nodes, _ = sphere_rule(6, 12)
        for sigma in nodes:
            assert np.min(np.linalg.norm(nodes + sigma, axis=-1)) < 1e-12

    @pytest.mark.parametrize("n_polar, n_azimuth", [(3, 4), (2, 5), (0, 4)])
    def test_rejects_invalid_counts(self, n_polar, n_azimuth):
        with pytest.raises(ConfigurationError):
            sphere_rule(n_polar, n_azimuth)


class TestBuildGrid:

    def test_too_few_points(self):
        with pytest.raises(ConfigurationError):
            build_grid(points_per_axis=3)

    def test_unknown_rule(self):
        with pytest.raises(ConfigurationError):
            build_grid(points_per_axis=6, rule="clenshaw_curtis")

    def test_tight_tolerance_on_uniform_grid(self):
        with pytest.raises(ConfigurationError):
            build_grid(points_per_axis=8, rule="uniform_trapezoid", truncation_radius=6.0, tol_norm=1e-6)

    def test_node_layout(self, gh_grid):
        assert gh_grid.size == 8**3
        assert gh_grid.nodes.shape == (512, 3)
        assert not gh_grid.nodes.flags.writeable


class TestProjections:

    def test_projection_splits_identity(self, gh_grid, rng):
        g = rng.normal(size=(4, gh_grid.size))
        np.testing.assert_allclose(gh_grid.project_hydro(g) + gh_grid.project_ortho(g), g, atol=1e-12)

    def test_ortho_part_is_orthogonal_to_invariants(self, gh_grid, rng):
        g = rng.normal(size=gh_grid.size)
        ortho = gh_grid.project_ortho(g)
        for phi in gh_grid.invariants():
            assert abs(gh_grid.inner(ortho, phi)) < 1e-10

    def test_projection_is_idempotent(self, gh_grid, rng):
        g = rng.normal(size=gh_grid.size)
        once = gh_grid.project_hydro(g)
        np.testing.assert_allclose(gh_grid.project_hydro(once), once, atol=1e-12)

    def test_fluctuation_moments_of_infinitesimal_maxwellian(self, gh_grid):
        v = gh_grid.nodes
        rho, u, theta = 0.3, np.array([0.1, -0.2, 0.05]), -0.4
        g = rho + v @ u + theta * (gh_grid.speed_squared - 3.0) / 2.0

        rho_b, u_b, theta_b = gh_grid.fluctuation_moments(g)
        assert abs(rho_b - rho) < 1e-12
        np.testing.assert_allclose(u_b, u, atol=1e-12)
        assert abs(theta_b - theta) < 1e-12

    def test_shape_mismatch(self, gh_grid):
        with pytest.raises(DimensionError):
            gh_grid.mean(np.ones(gh_grid.size + 1))


class TestCollisionBracket:
    """⟨⟨F⟩⟩ = ∫∫∫ F M M₁ b dσ dv dv₁"""

    def test_bracket_of_one_is_sphere_area(self, gh_grid):
        value = gh_grid.collision_bracket(lambda v, v1, sigma: np.ones(1))
        assert value == pytest.approx(4 * math.pi, rel=1e-12)

    def test_odd_integrand_vanishes(self, gh_grid):
        value = gh_grid.collision_bracket(lambda v, v1, sigma: np.sum(v * v1, axis=-1))
        assert abs(value) < 1e-12

    def test_second_moment(self, gh_grid):
        value = gh_grid.collision_bracket(lambda v, v1, sigma: np.sum(v**2, axis=-1))
        assert value == pytest.approx(12 * math.pi, rel=1e-12)

    def test_kernel_constant_scales_linearly(self, gh_grid):
        integrand = lambda v, v1, sigma: 1.0 + np.sum(v1 * sigma, axis=-1) ** 2  # noqa: E731
        unit = gh_grid.collision_bracket(integrand)
        assert gh_grid.collision_bracket(integrand, kernel_b=2.5) == pytest.approx(2.5 * unit, rel=1e-12)

    def test_chunking_does_not_change_result(self, gh_grid):
        integrand = lambda v, v1, sigma: np.sum((v - v1) * sigma, axis=-1) ** 2  # noqa: E731
        whole = gh_grid.collision_bracket(integrand)
        chunked = gh_grid.collision_bracket(integrand, chunk_pairs=gh_grid.size * 7)
        assert chunked == pytest.approx(whole, rel=1e-12)

    def test_rejects_non_positive_kernel(self, gh_grid):
        with pytest.raises(ConfigurationError):
            gh_grid.collision_bracket(lambda v, v1, sigma: np.ones(1), kernel_b=0.0)

    def test_empty_sphere_rule_is_rejected(self):
        nodes, weights = hermegauss(6)
        with pytest.raises(ConfigurationError):
            VelocityGrid("gauss_hermite", nodes, weights / math.sqrt(2 * math.pi), np.zeros((0, 3)),
                         np.zeros(0), float(np.max(np.abs(nodes))), 1e-12)
