"""扰动Boltzmann求解器测试"""
import math

import numpy as np
import pytest

from src.core.boltzmann_solver import BoltzmannSolver, homogeneous_initial, well_prepared_initial
from src.core.entropy_diagnostics import modulated_entropy
from src.models.error import CFLViolationError, PositivityError
from src.models.state import KineticState, observation_times


@pytest.fixture
def solver(gh_grid, bgk_kernel, spatial_grid):
    return BoltzmannSolver(gh_grid, bgk_kernel, spatial_grid, transport="spectral")


class TestTransport:

    def test_spectral_transport_is_exact_shift(self, solver, gh_grid, spatial_grid):
        x = spatial_grid.x
        g = np.tile(np.cos(x)[:, None], (1, gh_grid.size))
        dt, epsilon = 0.01, 0.1
        shifted = solver.transport(g, dt, epsilon)
        expected = np.cos(x[:, None] - gh_grid.nodes[:, 0][None, :] * dt / epsilon)
        np.testing.assert_allclose(shifted, expected, atol=1e-12)

    def test_upwind_conserves_mass(self, gh_grid, bgk_kernel, spatial_grid, rng):
        upwind = BoltzmannSolver(gh_grid, bgk_kernel, spatial_grid, transport="upwind")
        g = rng.normal(size=(spatial_grid.cells, gh_grid.size))
        epsilon = 0.1
        moved = upwind.transport(g, upwind.max_stable_dt(epsilon), epsilon)
        np.testing.assert_allclose(moved.sum(axis=0), g.sum(axis=0), atol=1e-10)

    def test_cfl_violation(self, solver, gh_grid, spatial_grid):
        state = KineticState(g=np.zeros((spatial_grid.cells, gh_grid.size)), epsilon=0.1,
                             spatial_grid=spatial_grid)
        with pytest.raises(CFLViolationError):
            solver.step(state, 2.0 * solver.max_stable_dt(0.1))


class TestEvolution:

    def test_conservation_on_well_prepared_run(self, solver, gh_grid, spatial_grid, fluid_factory):
        fluid = fluid_factory(spatial_grid, epsilon=0.1)
        initial = well_prepared_initial(fluid, gh_grid)
        trajectory = solver.run(initial, t_end=0.05, observer_cadence=0.025)

        before = solver.conserved_totals(trajectory.initial)
        after = solver.conserved_totals(trajectory.final)
        for key in before:
            assert abs(after[key] - before[key]) <= 1e-8 * 0.05

    def test_observation_times_are_hit_exactly(self, solver, gh_grid, spatial_grid, fluid_factory):
        initial = well_prepared_initial(fluid_factory(spatial_grid, epsilon=0.2), gh_grid)
        trajectory = solver.run(initial, t_end=0.03, observer_cadence=0.01)
        assert trajectory.times == observation_times(0.03, 0.01)
        assert len(trajectory) == 4

    def test_zero_end_time(self, solver, gh_grid, spatial_grid, fluid_factory):
        initial = well_prepared_initial(fluid_factory(spatial_grid, epsilon=0.2), gh_grid)
        assert len(solver.run(initial, t_end=0.0, observer_cadence=0.01)) == 1

    def test_homogeneous_relaxation_decreases_entropy(self, solver, gh_grid, spatial_grid, rng):
        profile = 0.1 * gh_grid.project_ortho(np.tanh(rng.normal(size=gh_grid.size)))
        initial = homogeneous_initial(profile, spatial_grid, epsilon=0.1)
        trajectory = solver.run(initial, t_end=0.02, observer_cadence=0.002)

        entropies = np.array([solver.h_theorem_entropy(state) for state in trajectory.states])
        assert np.all(np.diff(entropies) <= 1e-12)
        assert entropies[-1] < entropies[0]

    def test_entropy_never_rises_within_a_step(self, solver, gh_grid, spatial_grid, rng):
        profile = 0.1 * gh_grid.project_ortho(np.tanh(rng.normal(size=gh_grid.size)))
        initial = homogeneous_initial(profile, spatial_grid, epsilon=0.1)
        entropies = []
        trajectory = solver.run(initial, t_end=0.02, observer_cadence=0.01,
                                on_step=lambda state: entropies.append(solver.h_theorem_entropy(state)))

        steps_per_interval = max(1, math.ceil(0.01 / solver.max_stable_dt(0.1) - 1e-9))
        assert len(entropies) == 1 + 2 * steps_per_interval
        assert entropies[0] == pytest.approx(solver.h_theorem_entropy(trajectory.initial))
        assert np.max(np.diff(entropies)) <= 1e-12

    def test_on_step_not_called_for_zero_end_time(self, solver, gh_grid, spatial_grid, fluid_factory):
        initial = well_prepared_initial(fluid_factory(spatial_grid, epsilon=0.2), gh_grid)
        calls = []
        solver.run(initial, t_end=0.0, observer_cadence=0.01, on_step=calls.append)
        assert calls == []

    def test_time_derivative_of_global_equilibrium(self, solver, gh_grid, spatial_grid):
        state = KineticState(g=np.zeros((spatial_grid.cells, gh_grid.size)), epsilon=0.1,
                             spatial_grid=spatial_grid)
        np.testing.assert_allclose(solver.time_derivative(state), 0.0, atol=1e-14)


class TestInitialData:

    def test_well_prepared_initial_has_zero_entropy(self, gh_grid, spatial_grid, fluid_factory):
        fluid = fluid_factory(spatial_grid, epsilon=0.05)
        initial = well_prepared_initial(fluid, gh_grid)
        assert modulated_entropy(initial, fluid, gh_grid) <= 1e-10

    def test_homogeneous_initial_is_uniform(self, gh_grid, spatial_grid, rng):
        profile = rng.normal(size=gh_grid.size)
        state = homogeneous_initial(profile, spatial_grid, epsilon=0.1)
        assert state.g.shape == (spatial_grid.cells, gh_grid.size)
        np.testing.assert_allclose(state.g - state.g[0], 0.0)


class TestPositivity:

    def test_negative_density_raises_with_snapshot(self, solver, gh_grid, spatial_grid):
        g = np.zeros((spatial_grid.cells, gh_grid.size))
        g[3, 7] = -20.0
        state = KineticState(g=g, epsilon=0.1, time=0.4, spatial_grid=spatial_grid)
        with pytest.raises(PositivityError) as excinfo:
            solver.check_positivity(state)
        snapshot = excinfo.value.snapshot
        assert snapshot.cell_index == 3
        assert snapshot.node_index == 7
        assert snapshot.min_density < 0
        assert snapshot.time == 0.4


class TestHomogeneousRelaxation:
    """空间均匀数据上输运为恒等, 碰撞子步可以与解析解比较"""

    @staticmethod
    def split_profile(grid, rng):
        hydro = grid.project_hydro(rng.normal(size=grid.size))
        ortho = grid.project_ortho(np.tanh(rng.normal(size=grid.size)))
        return hydro, ortho

    def test_linear_run_matches_exponential_decay(self, gh_grid, bgk_kernel, spatial_grid, rng):
        linear = BoltzmannSolver(gh_grid, bgk_kernel, spatial_grid, transport="spectral", enable_q=False)
        hydro, ortho = self.split_profile(gh_grid, rng)
        epsilon, t_end = 0.1, 0.02
        initial = homogeneous_initial(0.1 * (hydro + ortho), spatial_grid, epsilon)
        final = linear.run(initial, t_end=t_end, observer_cadence=0.01).final

        decay = np.exp(-bgk_kernel.relaxation_rate * t_end / epsilon**2)
        expected = 0.1 * (hydro + decay * ortho)
        np.testing.assert_allclose(final.g, np.broadcast_to(expected, final.g.shape), atol=1e-12)

    def test_quadratic_term_scales_with_amplitude_squared(self, gh_grid, bgk_kernel, spatial_grid, rng):
        linear = BoltzmannSolver(gh_grid, bgk_kernel, spatial_grid, transport="spectral", enable_q=False)
        full = BoltzmannSolver(gh_grid, bgk_kernel, spatial_grid, transport="spectral", enable_q=True)
        hydro, ortho = self.split_profile(gh_grid, rng)

        def nonlinear_gap(amplitude: float) -> np.ndarray:
            initial = homogeneous_initial(amplitude * (hydro + ortho), spatial_grid, epsilon=0.1)
            with_q = full.run(initial, t_end=0.02, observer_cadence=0.01).final.g
            without_q = linear.run(initial, t_end=0.02, observer_cadence=0.01).final.g
            return with_q - without_q

        coarse = nonlinear_gap(0.1)
        fine = nonlinear_gap(0.05)
        assert np.max(np.abs(coarse)) > 1e-8
        np.testing.assert_allclose(coarse, 4.0 * fine, rtol=1e-6, atol=1e-13)
