"""
扰动Boltzmann方程的时间推进
∂ₜg + (1/ε)v·∇ₓg + (1/ε²)𝓛g = (1/ε)Q(g,g), 周期一维平板 × 三维速度
"""

import math
from typing import Callable, Dict, Literal, Optional

import numpy as np

from ..models.error import CFLViolationError, DiagnosticSnapshot, LabError, PositivityError, SolverAbort
from ..models.state import FluidState, KineticState, SpatialGrid, Trajectory, observation_times
from ..utils.logger import get_logger
from ..utils.spectral import derivative, phase_shift
from .collision import CollisionKernel
from .config import config
from .maxwellian import log_ratio
from .velocity_grid import VelocityGrid

logger = get_logger(__name__)

TransportScheme = Literal["spectral", "upwind"]


class BoltzmannSolver:
    """Strang分裂: 半步输运 → 碰撞(指数Euler) → 半步输运"""

    def __init__(self, grid: VelocityGrid, kernel: CollisionKernel, spatial_grid: SpatialGrid,
                 transport: Optional[TransportScheme] = None, cfl: Optional[float] = None,
                 enable_q: bool = True):
        self.grid = grid
        self.kernel = kernel
        self.spatial_grid = spatial_grid
        self.transport_scheme = transport or config.solver.transport
        self.cfl = config.solver.cfl if cfl is None else cfl
        self.enable_q = enable_q

    def max_stable_dt(self, epsilon: float) -> float:
        """dt ≤ c·ε·Δx/v_max"""
        return self.cfl * epsilon * self.spatial_grid.dx / self.grid.v_max

    def _check_cfl(self, dt: float, epsilon: float) -> None:
        if dt <= 0:
            raise CFLViolationError("时间步长必须为正", dt=dt)
        limit = self.max_stable_dt(epsilon)
        if dt > limit * (1 + 1e-12):
            raise CFLViolationError("时间步长违反输运CFL条件", dt=dt, limit=limit, epsilon=epsilon)

    def transport(self, g: np.ndarray, dt: float, epsilon: float) -> np.ndarray:
        """精确或迎风求解 ∂ₜg + (1/ε)v₁∂₁g = 0"""
        speed = self.grid.nodes[:, 0] / epsilon
        if self.transport_scheme == "spectral":
            return phase_shift(g, speed * dt, self.spatial_grid)

        courant = speed * dt / self.spatial_grid.dx
        backward = g - np.roll(g, 1, axis=0)
        forward = np.roll(g, -1, axis=0) - g
        return g - np.maximum(courant, 0.0) * backward - np.minimum(courant, 0.0) * forward

    def collision_source(self, g: np.ndarray, epsilon: float) -> np.ndarray:
        """(1/ε)Q(g,g)"""
        if not self.enable_q:
            return np.zeros_like(g)
        return self.kernel.symmetrized_Q(g, g) / epsilon

    def collision_substep(self, g: np.ndarray, dt: float, epsilon: float) -> np.ndarray:
        """指数Euler: g ← e^{−τ𝓛}g + dt·φ₁(−τ𝓛)(1/ε)Q(g,g), τ = dt/ε²"""
        tau = dt / epsilon**2
        updated = self.kernel.relaxation_exp(g, tau)
        if self.enable_q:
            updated = updated + dt * self.kernel.relaxation_phi1(self.collision_source(g, epsilon), tau)
        return updated

    def time_derivative(self, state: KineticState) -> np.ndarray:
        """方程右端 −(1/ε)v·∇g − (1/ε²)𝓛g + (1/ε)Q(g,g)"""
        g, epsilon = state.g, state.epsilon
        streaming = self.grid.nodes[:, 0][None, :] * derivative(g, self.spatial_grid, "spectral")
        return -streaming / epsilon - self.kernel.linearized_L(g) / epsilon**2 + self.collision_source(g, epsilon)

    def step(self, state: KineticState, dt: float) -> KineticState:
        """推进一个Strang步

        Raises:
            CFLViolationError: dt超过输运CFL上限
            PositivityError: f = M(1+εg) 失去正性
        """
        epsilon = state.epsilon
        self._check_cfl(dt, epsilon)

        g = self.transport(state.g, 0.5 * dt, epsilon)
        g = self.collision_substep(g, dt, epsilon)
        g = self.transport(g, 0.5 * dt, epsilon)

        advanced = state.evolve(g, state.time + dt)
        self.check_positivity(advanced)
        return advanced

    def check_positivity(self, state: KineticState) -> None:
        """f = M(1 + εg) > 0 逐节点检查"""
        ratio = 1.0 + state.epsilon * state.g
        if np.all(ratio > 0):
            return
        cell, node = np.unravel_index(int(np.argmin(ratio)), ratio.shape)
        snapshot = DiagnosticSnapshot(
            time=state.time,
            epsilon=state.epsilon,
            min_density=float(ratio[cell, node] * self.grid.maxwell_weights[node]),
            cell_index=int(cell),
            node_index=int(node),
            velocity=[float(c) for c in self.grid.nodes[node]],
            totals=self.conserved_totals(state),
        )
        logger.error("分布函数失去正性", time=state.time, epsilon=state.epsilon, cell=int(cell), node=int(node))
        raise PositivityError("重构分布 f = M(1+εg) 出现非正值", snapshot=snapshot,
                              time=state.time, epsilon=state.epsilon)

    def conserved_totals(self, state: KineticState) -> Dict[str, float]:
        """全平板上 ∫∫ f·{1, v, |v|²} 的总量, f = M(1 + εg)"""
        rho_b, u_b, theta_b = self.grid.fluctuation_moments(state.g)
        integrate = self.spatial_grid.integrate
        length = self.spatial_grid.length
        eps = state.epsilon
        # ⟨|v|² g⟩ = 3θ^b + 3ρ^b
        energy_fluct = 3.0 * (theta_b + rho_b)
        totals = {
            "mass": length + eps * float(integrate(rho_b)),
            "energy": 3.0 * length + eps * float(integrate(energy_fluct)),
        }
        for axis in range(3):
            totals[f"momentum_{axis + 1}"] = eps * float(integrate(u_b[:, axis]))
        return totals

    def h_theorem_entropy(self, state: KineticState) -> float:
        """H(f|M) 在全平板上的值, 用 log1p 避免 εg 很小时的抵消"""
        eps_g = state.epsilon * state.g
        if np.any(eps_g <= -1.0):
            raise PositivityError("H(f|M) 要求 f > 0", time=state.time, epsilon=state.epsilon)
        integrand = (1.0 + eps_g) * np.log1p(eps_g) - eps_g
        return float(self.spatial_grid.integrate(self.grid.mean(integrand)))

    def run(self, initial: KineticState, t_end: float, observer_cadence: float,
            dt: Optional[float] = None,
            on_step: Optional[Callable[[KineticState], None]] = None) -> Trajectory:
        """推进到t_end, 在每个观测时刻记录快照

        步长在每个观测区间内均分, 使观测时刻被精确命中。
        on_step 在初值和每一步之后被调用。

        Raises:
            SolverAbort: 任一步失败, 附带失败时刻
        """
        trajectory = Trajectory(kind="kinetic", states=[initial])
        if t_end <= 0:
            return trajectory

        dt_max = min(dt or self.max_stable_dt(initial.epsilon), self.max_stable_dt(initial.epsilon))
        logger.info("动理学求解开始", epsilon=initial.epsilon, t_end=t_end, dt_max=dt_max,
                    transport=self.transport_scheme, mode=self.kernel.mode)

        state = initial
        if on_step is not None:
            on_step(state)
        times = observation_times(t_end, observer_cadence)
        for start, stop in zip(times[:-1], times[1:]):
            steps = max(1, math.ceil((stop - start) / dt_max - 1e-9))
            step_dt = (stop - start) / steps
            for _ in range(steps):
                try:
                    state = self.step(state, step_dt)
                except LabError as e:
                    logger.error("动理学求解中止", time=state.time, error=str(e))
                    raise SolverAbort(f"动理学求解在 t={state.time:.6g} 中止: {e.message}",
                                      time=state.time, cause=e) from e
                if on_step is not None:
                    on_step(state)
            # 消除累积舍入, 与观测时刻严格对齐
            state = state.evolve(state.g, stop)
            trajectory.append(state)

        logger.info("动理学求解完成", epsilon=initial.epsilon, snapshots=len(trajectory))
        return trajectory


def well_prepared_initial(fluid_init: FluidState, grid: VelocityGrid) -> KineticState:
    """构造 g^in 使 M(1+εg^in) = ℳ(1+ερ̃, εũ, 1+εθ̃) 逐节点成立"""
    epsilon = fluid_init.epsilon
    g = np.expm1(log_ratio(fluid_init.maxwellian_field(), grid)) / epsilon
    return KineticState(g=g, epsilon=epsilon, time=fluid_init.time, spatial_grid=fluid_init.spatial_grid)


def homogeneous_initial(profile: np.ndarray, spatial_grid: SpatialGrid, epsilon: float) -> KineticState:
    """空间均匀的初值 g(x, v) = ĝ(v)"""
    g = np.tile(np.asarray(profile, dtype=float), (spatial_grid.cells, 1))
    return KineticState(g=g, epsilon=epsilon, spatial_grid=spatial_grid)
