"""
小Mach数可压Navier-Stokes方程(涨落形式)与不可压NSF参考解

(ρ, u, θ) = (1+ερ̃, εũ, 1+εθ̃), 场只沿x₁变化, 速度保持三个分量。
"""

import math
from typing import Callable, Dict, List, Literal, NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from ..models.error import ConfigurationError, IncompressibilityError, LabError, SolverAbort
from ..models.state import FluidState, SpatialGrid, Trajectory, observation_times
from ..utils.logger import get_logger
from ..utils.spectral import DerivativeMode, dealias, derivative
from .collision import CollisionKernel
from .config import config

logger = get_logger(__name__)

EnergyForm = Literal["cns_eps", "cns"]
CoefficientFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

# (粘性加热系数, 热传导系数)
ENERGY_FORMS: Dict[str, Tuple[float, float]] = {
    "cns_eps": (1.0 / 3.0, 5.0 / 3.0),
    "cns": (0.5, 2.5),
}

_E1 = np.array([1.0, 0.0, 0.0])


class FluidRates(NamedTuple):
    """涨落场的时间导数"""
    rho_t: np.ndarray
    u_t: np.ndarray
    theta_t: np.ndarray


def _energy_coefficients(energy_form: Optional[str]) -> Tuple[float, float]:
    form = energy_form or config.solver.energy_form
    if form not in ENERGY_FORMS:
        raise ConfigurationError("未知的能量方程形式", energy_form=form)
    return ENERGY_FORMS[form]


def stress_tensor(u: np.ndarray, spatial_grid: SpatialGrid, mode: Optional[DerivativeMode] = None) -> np.ndarray:
    """σ(u) = ∇u + ∇uᵀ − (2/3)(∇·u)I, 形状(C, 3, 3)"""
    mode = mode or config.solver.derivative
    u = np.asarray(u, dtype=float)
    gradient = np.zeros(u.shape[:1] + (3, 3))
    gradient[:, 0, :] = derivative(u, spatial_grid, mode)
    divergence = gradient[:, 0, 0]
    return gradient + np.swapaxes(gradient, 1, 2) - (2.0 / 3.0) * divergence[:, None, None] * np.eye(3)


def acoustic_block(state: FluidState, mode: Optional[DerivativeMode] = None) -> FluidRates:
    """刚性声学块 (−(1/ε)∇·ũ, −(1/ε)∇(ρ̃+θ̃), −(2/3)(1/ε)∇·ũ)"""
    mode = mode or config.solver.derivative
    grid, eps = state.spatial_grid, state.epsilon
    div_u = derivative(state.u_t[:, 0], grid, mode)
    d_pressure = derivative(state.rho_t + state.theta_t, grid, mode)
    return FluidRates(rho_t=-div_u / eps,
                      u_t=-(d_pressure / eps)[:, None] * _E1,
                      theta_t=-(2.0 / 3.0) * div_u / eps)


def cns_rhs(state: FluidState, mu_fn: CoefficientFn, kappa_fn: CoefficientFn,
            energy_form: Optional[EnergyForm] = None, mode: Optional[DerivativeMode] = None,
            include_acoustic: bool = True, dealias_products: bool = False) -> FluidRates:
    """(CNS_ε) 的涨落形式右端

    每个方程除以其首项ε幂次; 声学项单独由 acoustic_block 给出,
    include_acoustic=False 时只返回非刚性部分。

    Args:
        mu_fn, kappa_fn: 局部 (ρ_ε, θ_ε) 处的粘性与热传导系数
    """
    mode = mode or config.solver.derivative
    heating, conduction = _energy_coefficients(energy_form)
    grid, eps = state.spatial_grid, state.epsilon
    rho_t, u_t, theta_t = state.rho_t, state.u_t, state.theta_t
    rho, theta = state.rho, state.theta
    mu = np.asarray(mu_fn(rho, theta), dtype=float)
    kappa = np.asarray(kappa_fn(rho, theta), dtype=float)

    def d(values: np.ndarray) -> np.ndarray:
        return derivative(values, grid, mode)

    def product(values: np.ndarray) -> np.ndarray:
        return dealias(values) if dealias_products else values

    d_u = d(u_t)
    d_theta = d(theta_t)
    div_u = d_u[:, 0]
    sigma = stress_tensor(u_t, grid, mode)
    d_pressure = d(rho_t + theta_t)

    # 1/ρ − 1 = −ερ̃/ρ 吸收到非刚性部分
    mass = -d(product(rho_t * u_t[:, 0]))
    momentum = (-product(u_t[:, :1] * d_u)
                + ((rho_t / rho) * d_pressure - d(product(rho_t * theta_t)) / rho)[:, None] * _E1
                + d(product(mu[:, None] * sigma[:, 0, :])) / rho[:, None])
    energy = (-product(u_t[:, 0] * d_theta) - (2.0 / 3.0) * product(theta_t * div_u)
              + eps * heating * mu * np.einsum("cij,cij->c", sigma, sigma) / rho
              + conduction * d(product(kappa * d_theta)) / rho)

    if include_acoustic:
        acoustic = acoustic_block(state, mode)
        mass = mass + acoustic.rho_t
        momentum = momentum + acoustic.u_t
        energy = energy + acoustic.theta_t
    return FluidRates(rho_t=mass, u_t=momentum, theta_t=energy)


def boussinesq_defect(state: FluidState) -> float:
    """‖ρ̃ + θ̃‖_{L²}"""
    return float(np.sqrt(state.spatial_grid.integrate((state.rho_t + state.theta_t) ** 2)))


def divergence_norm(u: np.ndarray, spatial_grid: SpatialGrid, mode: Optional[DerivativeMode] = None) -> float:
    """‖∇·u‖_∞"""
    mode = mode or config.solver.derivative
    return float(np.max(np.abs(derivative(np.asarray(u, dtype=float)[:, 0], spatial_grid, mode))))


def acoustic_initial(spatial_grid: SpatialGrid, epsilon: float, amplitude: float = 0.1,
                     wavenumber: int = 1) -> FluidState:
    """驻波声学模态 ρ̃ = a·cos(kx), θ̃ = (2/3)a·cos(kx), ũ = 0

    线性化后 θ̃ − (2/3)ρ̃ = 0 保持不变, ρ̃ 以频率 √(5/3)k/ε 振荡。
    """
    wave = amplitude * np.cos(wavenumber * spatial_grid.x)
    cells = spatial_grid.cells
    return FluidState(rho_t=wave, u_t=np.zeros((cells, 3)), theta_t=(2.0 / 3.0) * wave,
                      epsilon=epsilon, spatial_grid=spatial_grid)


def sound_speed() -> float:
    """涨落形式下的声速 √(5/3)"""
    return math.sqrt(5.0 / 3.0)


class CNSSolver:
    """Strang分裂: 声学+常系数扩散块按Fourier模态精确推进, 其余项用Heun格式"""

    def __init__(self, kernel: CollisionKernel, spatial_grid: SpatialGrid,
                 energy_form: Optional[EnergyForm] = None, mode: Optional[DerivativeMode] = None,
                 cfl: Optional[float] = None, dissipation: bool = True,
                 dealias_products: Optional[bool] = None):
        self.kernel = kernel
        self.spatial_grid = spatial_grid
        self.energy_form = energy_form or config.solver.energy_form
        self.mode = mode or config.solver.derivative
        self.cfl = config.solver.cfl if cfl is None else cfl
        self.dissipation = dissipation
        self.dealias_products = config.solver.dealias if dealias_products is None else dealias_products
        self.heating, self.conduction = _energy_coefficients(self.energy_form)

        if dissipation:
            self.mu0, self.kappa0 = kernel.transport_coefficients()
        else:
            self.mu0, self.kappa0 = 0.0, 0.0
        self._propagators: Dict[Tuple[float, float], np.ndarray] = {}

    def viscosity(self, rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if not self.dissipation:
            return np.zeros_like(np.asarray(rho, dtype=float))
        return self.kernel.local_coefficients(rho, theta)[0]

    def conductivity(self, rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if not self.dissipation:
            return np.zeros_like(np.asarray(rho, dtype=float))
        return self.kernel.local_coefficients(rho, theta)[1]

    def rhs(self, state: FluidState) -> FluidRates:
        return cns_rhs(state, self.viscosity, self.conductivity, self.energy_form, self.mode,
                       dealias_products=self.dealias_products)

    # ------------------------------------------------------------------
    # 线性块
    # ------------------------------------------------------------------

    def _first_derivative_symbol(self) -> np.ndarray:
        """与 derivative() 一致的一阶导数Fourier符号"""
        k = self.spatial_grid.wavenumbers
        if self.mode == "central":
            return 1j * np.sin(k * self.spatial_grid.dx) / self.spatial_grid.dx
        symbol = 1j * k
        if self.spatial_grid.cells % 2 == 0:
            symbol[-1] = 0.0
        return symbol

    def linear_rhs(self, state: FluidState) -> FluidRates:
        """声学块加上 (1,1) 处常系数扩散"""
        grid = self.spatial_grid
        acoustic = acoustic_block(state, self.mode)

        def dd(values: np.ndarray) -> np.ndarray:
            return derivative(derivative(values, grid, self.mode), grid, self.mode)

        viscous = self.mu0 * dd(state.u_t)
        viscous[:, 0] *= 4.0 / 3.0
        return FluidRates(rho_t=acoustic.rho_t,
                          u_t=acoustic.u_t + viscous,
                          theta_t=acoustic.theta_t + self.conduction * self.kappa0 * dd(state.theta_t))

    def linear_propagator(self, dt: float, epsilon: float) -> np.ndarray:
        """每个Fourier模态上 (ρ̂, û₁, û₂, û₃, θ̂) 的5×5传播矩阵 exp(dt·A(k))"""
        key = (float(dt), float(epsilon))
        if key not in self._propagators:
            d1 = self._first_derivative_symbol()
            d2 = d1 * d1
            propagators = np.empty((d1.shape[0], 5, 5), dtype=complex)
            for m, (a, b) in enumerate(zip(d1, d2)):
                block = np.zeros((5, 5), dtype=complex)
                block[0, 1] = -a / epsilon
                block[1, 0] = block[1, 4] = -a / epsilon
                block[1, 1] = (4.0 / 3.0) * self.mu0 * b
                block[2, 2] = block[3, 3] = self.mu0 * b
                block[4, 1] = -(2.0 / 3.0) * a / epsilon
                block[4, 4] = self.conduction * self.kappa0 * b
                propagators[m] = expm(dt * block)
            self._propagators[key] = propagators
        return self._propagators[key]

    def apply_linear(self, state: FluidState, dt: float) -> FluidState:
        """精确推进线性块"""
        cells = self.spatial_grid.cells
        stacked = np.column_stack([state.rho_t, state.u_t, state.theta_t])
        coeffs = np.fft.rfft(stacked, axis=0)
        advanced = np.einsum("mij,mj->mi", self.linear_propagator(dt, state.epsilon), coeffs)
        values = np.fft.irfft(advanced, n=cells, axis=0)
        return state.evolve(values[:, 0], values[:, 1:4], values[:, 4], state.time + dt)

    def remainder(self, state: FluidState) -> FluidRates:
        full = self.rhs(state)
        linear = self.linear_rhs(state)
        return FluidRates(*(a - b for a, b in zip(full, linear)))

    # ------------------------------------------------------------------
    # 时间推进
    # ------------------------------------------------------------------

    def max_stable_dt(self, state: FluidState) -> float:
        """显式余项的稳定步长: 对流速度与变系数扩散偏差"""
        dx = self.spatial_grid.dx
        speed = 1.0 + float(np.max(np.abs(state.u_t))) + float(np.max(np.abs(state.rho_t)))
        limit = self.cfl * dx / speed
        if self.dissipation:
            mu, kappa = self.kernel.local_coefficients(state.rho, state.theta)
            spread = max(float(np.max(np.abs((4.0 / 3.0) * (mu / state.rho - self.mu0)))),
                         float(np.max(np.abs(self.conduction * (kappa / state.rho - self.kappa0)))))
            if spread > 0:
                limit = min(limit, self.cfl * 2.0 * dx**2 / (math.pi**2 * spread))
        return limit

    def step(self, state: FluidState, dt: float) -> FluidState:
        """半步线性 → Heun余项 → 半步线性

        Raises:
            PositivityError: ρ_ε 或 θ_ε 失去正性
        """
        half = self.apply_linear(state, 0.5 * dt)
        first = self.remainder(half)
        predictor = half.evolve(*(x + dt * r for x, r in zip((half.rho_t, half.u_t, half.theta_t), first)),
                                time=half.time)
        second = self.remainder(predictor)
        corrected = half.evolve(*(x + 0.5 * dt * (r1 + r2) for x, r1, r2 in
                                  zip((half.rho_t, half.u_t, half.theta_t), first, second)),
                                time=half.time)
        advanced = self.apply_linear(corrected, 0.5 * dt)
        return advanced.evolve(advanced.rho_t, advanced.u_t, advanced.theta_t, state.time + dt)

    def run(self, initial: FluidState, t_end: float, observer_cadence: float,
            dt: Optional[float] = None) -> Trajectory:
        """推进到t_end, 观测时刻与动理学求解器一致

        Raises:
            SolverAbort: 任一步失败, 附带失败时刻
        """
        trajectory = Trajectory(kind="fluid", states=[initial])
        if t_end <= 0:
            return trajectory

        dt_max = self.max_stable_dt(initial)
        if dt is not None:
            dt_max = min(dt_max, dt)
        logger.info("流体求解开始", epsilon=initial.epsilon, t_end=t_end, dt_max=dt_max,
                    energy_form=self.energy_form, dissipation=self.dissipation)

        state = initial
        times = observation_times(t_end, observer_cadence)
        for start, stop in zip(times[:-1], times[1:]):
            steps = max(1, math.ceil((stop - start) / dt_max - 1e-9))
            step_dt = (stop - start) / steps
            for _ in range(steps):
                try:
                    state = self.step(state, step_dt)
                except LabError as e:
                    logger.error("流体求解中止", time=state.time, error=str(e))
                    raise SolverAbort(f"流体求解在 t={state.time:.6g} 中止: {e.message}",
                                      time=state.time, cause=e) from e
            state = state.evolve(state.rho_t, state.u_t, state.theta_t, stop)
            trajectory.append(state)

        logger.info("流体求解完成", epsilon=initial.epsilon, snapshots=len(trajectory),
                    boussinesq_defect=boussinesq_defect(state))
        return trajectory


# ----------------------------------------------------------------------
# 不可压NSF参考解
# ----------------------------------------------------------------------

def leray_project(u: np.ndarray, spatial_grid: SpatialGrid) -> np.ndarray:
    """Leray投影 û ← û − k(k·û)/|k|², 波矢沿x₁"""
    u = np.asarray(u, dtype=float)
    k = spatial_grid.wavenumbers
    coeffs = np.fft.rfft(u, axis=0)
    k_sq = k**2
    k_sq_inv = np.where(k_sq > 0, 1.0 / np.where(k_sq > 0, k_sq, 1.0), 0.0)
    k_dot_u = k * coeffs[:, 0]
    coeffs[:, 0] -= k * k_dot_u * k_sq_inv
    return np.fft.irfft(coeffs, n=u.shape[0], axis=0)


def _diffuse(values: np.ndarray, dt: float, nu: float, spatial_grid: SpatialGrid) -> np.ndarray:
    """扩散方程在Fourier空间的精确推进"""
    k = spatial_grid.wavenumbers
    factor = np.exp(-dt * nu * k**2)
    if values.ndim > 1:
        factor = factor[:, None]
    return np.fft.irfft(np.fft.rfft(values, axis=0) * factor, n=values.shape[0], axis=0)


def insf_initial(fluid: FluidState) -> Tuple[np.ndarray, np.ndarray]:
    """(Leray投影后的ũ, ϑ = (3/5)θ̃ − (2/5)ρ̃)"""
    u = leray_project(fluid.u_t, fluid.spatial_grid)
    vartheta = 0.6 * fluid.theta_t - 0.4 * fluid.rho_t
    return u, vartheta


def insf_step(u: np.ndarray, vartheta: np.ndarray, dt: float, mu: float, kappa: float,
              spatial_grid: SpatialGrid, tol: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """不可压NSF一步: 显式对流(2/3去混叠) → Leray投影 → 精确扩散

    Raises:
        IncompressibilityError: 输入的 ∇·u 超过容差
    """
    tol = config.solver.insf_divergence_tol if tol is None else tol
    divergence = divergence_norm(u, spatial_grid, "spectral")
    if divergence > tol:
        raise IncompressibilityError("输入速度场不满足 ∇·u = 0", divergence=divergence, tol=tol)

    u = np.asarray(u, dtype=float)
    vartheta = np.asarray(vartheta, dtype=float)
    advection_u = -dealias(u[:, :1] * derivative(u, spatial_grid, "spectral"))
    advection_t = -dealias(u[:, 0] * derivative(vartheta, spatial_grid, "spectral"))

    u = leray_project(u + dt * advection_u, spatial_grid)
    vartheta = vartheta + dt * advection_t
    return _diffuse(u, dt, mu, spatial_grid), _diffuse(vartheta, dt, kappa, spatial_grid)


def insf_run(u: np.ndarray, vartheta: np.ndarray, t_end: float, observer_cadence: float, mu: float,
             kappa: float, spatial_grid: SpatialGrid, dt: float) -> List[Tuple[float, np.ndarray, np.ndarray]]:
    """按观测时刻记录 (t, u, ϑ)"""
    records = [(0.0, np.asarray(u, dtype=float), np.asarray(vartheta, dtype=float))]
    if t_end <= 0:
        return records
    times = observation_times(t_end, observer_cadence)
    for start, stop in zip(times[:-1], times[1:]):
        steps = max(1, math.ceil((stop - start) / dt - 1e-9))
        step_dt = (stop - start) / steps
        for _ in range(steps):
            u, vartheta = insf_step(u, vartheta, step_dt, mu, kappa, spatial_grid)
        records.append((stop, u, vartheta))
    return records
