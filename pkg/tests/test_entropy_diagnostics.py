"""相对熵、熵分裂、矩通量展开与熵预算测试"""
import numpy as np
import pytest

from src.core import entropy_diagnostics
from src.core.boltzmann_solver import BoltzmannSolver, well_prepared_initial
from src.core.cns_solver import CNSSolver
from src.core.entropy_diagnostics import (avbv_decomposition, entropy_split, moment_flux_expansions,
                                          quadratic_entropy_approx, relative_entropy,
                                          snapshot_time_derivative, theorem_budget)
from src.core.maxwellian import nodal_values
from src.models.error import PositivityError, TrajectoryMisalignmentError
from src.models.report import RESIDUAL_NAMES
from src.models.state import KineticState, MaxwellianParams, SpatialGrid, Trajectory
from tests.conftest import smooth_fluid


@pytest.fixture(scope="module")
def budget_runs(gh_grid, bgk_kernel):
    """BGK动理学与CNS流体的一次短时间对齐运行"""
    spatial_grid = SpatialGrid(cells=16)
    fluid0 = smooth_fluid(spatial_grid, epsilon=0.1)
    kinetic_solver = BoltzmannSolver(gh_grid, bgk_kernel, spatial_grid, transport="spectral")
    fluid_solver = CNSSolver(bgk_kernel, spatial_grid, mode="spectral")
    kinetic = kinetic_solver.run(well_prepared_initial(fluid0, gh_grid), t_end=0.02, observer_cadence=0.01)
    fluid = fluid_solver.run(fluid0, t_end=0.02, observer_cadence=0.01)
    return kinetic_solver, kinetic, fluid


class TestRelativeEntropy:

    def test_zero_at_target(self, gh_grid):
        params = MaxwellianParams(rho=1.1, u=(0.1, -0.2, 0.0), theta=0.9)
        assert abs(relative_entropy(nodal_values(params, gh_grid), params, gh_grid)) < 1e-14

    def test_nonnegative(self, gh_grid, rng):
        params = MaxwellianParams.absolute()
        f = gh_grid.maxwell_weights * (1.0 + 0.05 * np.tanh(rng.normal(size=gh_grid.size)))
        assert relative_entropy(f, params, gh_grid) >= 0.0

    def test_rejects_nonpositive(self, gh_grid):
        f = gh_grid.maxwell_weights.copy()
        f[0] = -1.0
        with pytest.raises(PositivityError):
            relative_entropy(f, MaxwellianParams.absolute(), gh_grid)

    def test_split_is_additive(self, fine_grid, rng):
        f = fine_grid.maxwell_weights * (1.0 + 0.05 * np.tanh(rng.normal(size=fine_grid.size)))
        split = entropy_split(f, MaxwellianParams.absolute(), fine_grid)
        assert split.kinetic >= 0.0
        assert split.fluid >= 0.0
        assert abs(split.defect) < 1e-7


class TestQuadraticApproximation:

    @pytest.mark.parametrize("epsilon", [1e-2, 1e-3])
    def test_remainder_is_higher_order(self, spatial_grid, field_factory, rng, epsilon):
        fluid = smooth_fluid(spatial_grid, epsilon=epsilon)
        rho_b = fluid.rho_t + field_factory(spatial_grid, rng)
        theta_b = fluid.theta_t + field_factory(spatial_grid, rng)
        u_b = fluid.u_t + np.column_stack([field_factory(spatial_grid, rng) for _ in range(3)])
        approx = quadratic_entropy_approx(rho_b, u_b, theta_b, fluid)
        assert approx.quadratic > 0
        assert abs(approx.remainder) <= 20 * epsilon * approx.quadratic
        np.testing.assert_allclose(approx.r1, -(rho_b[:, None] * u_b) / (1.0 + epsilon * rho_b[:, None]),
                                   atol=1e-10)

    def test_zero_when_moments_match(self, spatial_grid):
        fluid = smooth_fluid(spatial_grid, epsilon=0.01)
        approx = quadratic_entropy_approx(fluid.rho_t, fluid.u_t, fluid.theta_t, fluid)
        assert approx.quadratic == 0.0


class TestMomentFluxes:

    def test_closed_forms_match_quadrature(self, gh_grid, spatial_grid, rng):
        fluid = smooth_fluid(spatial_grid, epsilon=0.1)
        base = well_prepared_initial(fluid, gh_grid)
        g = base.g + 0.1 * np.tanh(rng.normal(size=base.g.shape))
        state = KineticState(g=g, epsilon=0.1, spatial_grid=spatial_grid)
        assert moment_flux_expansions(state, fluid, gh_grid).closure_defect() < 1e-8


class TestAvBvDecomposition:

    def test_single_snapshot_has_no_time_derivative(self, spatial_grid, gh_grid):
        state = well_prepared_initial(smooth_fluid(spatial_grid, epsilon=0.1), gh_grid)
        assert snapshot_time_derivative([state], 0) is None

    def test_snapshot_difference(self, spatial_grid, gh_grid):
        first = KineticState(g=np.zeros((spatial_grid.cells, gh_grid.size)), epsilon=0.1, spatial_grid=spatial_grid)
        second = KineticState(g=np.ones((spatial_grid.cells, gh_grid.size)), epsilon=0.1, time=0.5,
                              spatial_grid=spatial_grid)
        np.testing.assert_allclose(snapshot_time_derivative([first, second], 1), 2.0)
        with pytest.raises(TrajectoryMisalignmentError):
            snapshot_time_derivative([second, first], 0)

    def test_closure_with_exact_time_derivative(self, budget_runs, bgk_kernel):
        solver, kinetic, _ = budget_runs
        state = kinetic.states[1]
        decomposition = avbv_decomposition(kinetic.states, bgk_kernel, index=1,
                                           dg_dt=solver.time_derivative(state), mode="spectral")
        assert decomposition.time_derivative_available
        assert decomposition.closure() < 1e-8


class TestTheoremBudget:

    def test_report_fields(self, budget_runs, bgk_kernel):
        solver, kinetic, fluid = budget_runs
        reports = theorem_budget(kinetic, fluid, bgk_kernel, time_derivative=solver.time_derivative,
                                 mode="spectral")
        assert [r.time for r in reports] == kinetic.times
        first = reports[0]
        assert first.h_over_eps2 < 1e-10
        assert first.dissipation_budget == 0.0
        assert first.flux_budget == 0.0
        for report in reports:
            assert report.h_over_eps2 >= -1e-12
            assert report.dissipation_surrogate
            assert report.dissipation_slack is None
            assert report.bgl_slack_min is None
            assert report.flux_closure_defect < 1e-8
            assert report.avbv_closure < 1e-8
            assert "R_11" not in report.residuals
            assert {"R_1", "R_7", "R_12", "R_13", "r_1", "r_2"} <= set(report.residuals)
            assert set(report.residuals) <= set(RESIDUAL_NAMES)

    def test_misaligned_trajectories(self, budget_runs, bgk_kernel):
        _, kinetic, fluid = budget_runs
        shortened = Trajectory(kind="fluid", states=fluid.states[:-1])
        with pytest.raises(TrajectoryMisalignmentError):
            theorem_budget(kinetic, shortened, bgk_kernel)

    def test_closure_defect_is_reported_not_absorbed(self, budget_runs, bgk_kernel, monkeypatch):
        solver, kinetic, fluid = budget_runs
        baseline = theorem_budget(kinetic, fluid, bgk_kernel, time_derivative=solver.time_derivative,
                                  mode="spectral")

        original = entropy_diagnostics._snapshot_terms

        def inflated(*args, **kwargs):
            terms = original(*args, **kwargs)
            terms.rates["closure"] += 1000.0
            return terms

        monkeypatch.setattr(entropy_diagnostics, "_snapshot_terms", inflated)
        reports = theorem_budget(kinetic, fluid, bgk_kernel, time_derivative=solver.time_derivative,
                                 mode="spectral")

        for before, after in zip(baseline, reports):
            assert after.budget_slack == pytest.approx(before.budget_slack, rel=1e-12, abs=1e-14)
            assert after.gronwall_majorant == pytest.approx(before.gronwall_majorant, rel=1e-12, abs=1e-14)
            assert after.closure_integral == pytest.approx(before.closure_integral + 1000.0 * after.time)
        assert baseline[0].closure_integral == 0.0
