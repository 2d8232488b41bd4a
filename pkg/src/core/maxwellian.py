"""
局部Maxwell分布
求值、矩反演、张量A(V)/B(V)、离散矩匹配以及log ℳ的输运恒等式
"""

import math
from typing import Optional, Tuple, Union

import numpy as np

from ..models.error import DegenerateMomentError
from ..models.state import MaxwellianField, MaxwellianParams, SpatialGrid
from ..utils.logger import get_logger
from ..utils.spectral import DerivativeMode, check_resolution, derivative
from .config import config
from .velocity_grid import VelocityGrid

logger = get_logger(__name__)

ParamsLike = Union[MaxwellianParams, MaxwellianField]


def _as_arrays(params: ParamsLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """统一取出 (ρ, u, θ) 数组"""
    return (np.asarray(params.rho, dtype=float), np.asarray(params.u, dtype=float),
            np.asarray(params.theta, dtype=float))


def evaluate(params: MaxwellianParams, v: np.ndarray) -> np.ndarray:
    """ℳ(ρ,u,θ)(v) = ρ(2πθ)^{-3/2} exp(−|v−u|²/(2θ))

    即 eval 操作, 改名以免遮蔽内置函数 eval。
    """
    return np.exp(log_maxwellian(params, v))


def log_maxwellian(params: MaxwellianParams, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    rho, u, theta = _as_arrays(params)
    diff = v - u
    return (math.log(rho) - 1.5 * math.log(2 * math.pi * theta)
            - np.sum(diff**2, axis=-1) / (2 * theta))


def log_ratio(params: ParamsLike, grid: VelocityGrid) -> np.ndarray:
    """log(ℳ(ρ,u,θ)/M) 在速度节点上的精确值

    参数为单个Maxwell分布时返回(N,), 为参数场时返回(C, N)。
    """
    rho, u, theta = _as_arrays(params)
    if rho.ndim == 0:
        diff = grid.nodes - u
        return (np.log(rho) - 1.5 * np.log(theta) - np.sum(diff**2, axis=-1) / (2 * theta)
                + 0.5 * grid.speed_squared)
    diff = grid.nodes[None, :, :] - u[:, None, :]
    return (np.log(rho)[:, None] - 1.5 * np.log(theta)[:, None]
            - np.sum(diff**2, axis=-1) / (2 * theta[:, None]) + 0.5 * grid.speed_squared[None, :])


def nodal_values(params: ParamsLike, grid: VelocityGrid) -> np.ndarray:
    """ℳ 在速度节点上的取值"""
    return np.exp(grid.log_maxwell + log_ratio(params, grid))


def _invert_moments(mass: np.ndarray, momentum: np.ndarray,
                    energy: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    mass = np.asarray(mass, dtype=float)
    momentum = np.asarray(momentum, dtype=float)
    energy = np.asarray(energy, dtype=float)
    if np.any(mass <= 0):
        raise DegenerateMomentError("质量矩非正, 无法构造Maxwell分布", mass_min=float(np.min(mass)))
    u = momentum / mass[..., None]
    theta = (energy / mass - np.sum(u**2, axis=-1)) / 3.0
    if np.any(theta <= 0):
        index = int(np.argmin(theta))
        raise DegenerateMomentError("矩反演得到非正温度", theta_min=float(np.min(theta)), cell_index=index)
    return mass, u, theta


def from_raw_moments(mass: float, momentum: np.ndarray, energy: float) -> MaxwellianParams:
    """由 (∫f, ∫vf, ∫|v|²f) 反演 (ρ, u, θ)

    Raises:
        DegenerateMomentError: 隐含温度非正
    """
    rho, u, theta = _invert_moments(mass, momentum, energy)
    return MaxwellianParams(rho=float(rho), u=tuple(float(c) for c in u), theta=float(theta))


def field_from_raw_moments(mass: np.ndarray, momentum: np.ndarray, energy: np.ndarray) -> MaxwellianField:
    """逐单元的矩反演"""
    rho, u, theta = _invert_moments(mass, momentum, energy)
    return MaxwellianField(rho=rho, u=u, theta=theta)


def maxwellian_of(f: np.ndarray, grid: VelocityGrid) -> ParamsLike:
    """与f具有相同矩的局部Maxwell分布参数 M_f"""
    mass, momentum, energy = grid.raw_moments(f)
    if np.ndim(mass) == 0:
        return from_raw_moments(mass, momentum, energy)
    return field_from_raw_moments(mass, momentum, energy)


def discrete_maxwellian(f: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """离散矩匹配的 M_f: ℳ_f·(1 + c·φ), c 使五个离散矩与f完全一致"""
    f = np.asarray(f, dtype=float)
    values = nodal_values(maxwellian_of(f, grid), grid)
    phi = grid.invariants()

    weighted_phi = phi * grid.weights
    target = f @ weighted_phi.T
    current = values @ weighted_phi.T
    # J_ab = Σ w ℳ_f φ_a φ_b, 每个单元一个5×5系统
    jacobian = np.einsum("...k,ak,bk->...ab", values, weighted_phi, phi)
    coeffs = np.linalg.solve(jacobian, (target - current)[..., None])[..., 0]
    return values * (1.0 + coeffs @ phi)


def tensor_A(V: np.ndarray) -> np.ndarray:
    """A(V) = V⊗V − |V|²/3·I, 形状(..., 3, 3)"""
    V = np.asarray(V, dtype=float)
    outer = V[..., :, None] * V[..., None, :]
    return outer - (np.sum(V**2, axis=-1) / 3.0)[..., None, None] * np.eye(3)


def tensor_B(V: np.ndarray) -> np.ndarray:
    """B(V) = V(|V|²/2 − 5/2), 形状(..., 3)"""
    V = np.asarray(V, dtype=float)
    return V * (0.5 * np.sum(V**2, axis=-1) - 2.5)[..., None]


def closed_form_relative_entropy(a: ParamsLike, b: ParamsLike) -> np.ndarray:
    """两个Maxwell分布之间的 H(ℳ_a|ℳ_b) 闭式值"""
    rho_a, u_a, theta_a = _as_arrays(a)
    rho_b, u_b, theta_b = _as_arrays(b)
    ratio = theta_a / theta_b
    return (rho_a * np.log(rho_a / rho_b) - rho_a + rho_b
            + rho_a * 1.5 * (ratio - 1.0 - np.log(ratio))
            + rho_a * np.sum((u_a - u_b) ** 2, axis=-1) / (2 * theta_b))


def log_maxwellian_transport(params_field: MaxwellianField, spatial_grid: SpatialGrid, grid: VelocityGrid,
                             mode: Optional[DerivativeMode] = None) -> np.ndarray:
    """v·∇ₓ log ℳ(ρ,u,θ) 的Euler算子分解形式, 形状(C, N)

    ((u·∇ρ + ρ∇·u, u·∇u + (θ/ρ)∇ρ + ∇θ, u·∇θ + (2/3)θ∇·u), (1/ρ, V/√θ, (|V|²/2−3/2)/θ))
    + A(V):∇u + B(V)·∇θ/√θ, 其中 V = (v−u)/√θ, 场只沿x₁变化。
    """
    mode = mode or config.solver.derivative
    rho, u, theta = _as_arrays(params_field)
    for name, values in (("rho", rho), ("u", u), ("theta", theta)):
        check_resolution(values, name)

    d_rho = derivative(rho, spatial_grid, mode)
    d_u = derivative(u, spatial_grid, mode)
    d_theta = derivative(theta, spatial_grid, mode)
    div_u = d_u[:, 0]
    e1 = np.array([1.0, 0.0, 0.0])

    mass_term = u[:, 0] * d_rho + rho * div_u
    momentum_term = u[:, :1] * d_u + ((theta / rho) * d_rho + d_theta)[:, None] * e1
    energy_term = u[:, 0] * d_theta + (2.0 / 3.0) * theta * div_u

    sqrt_theta = np.sqrt(theta)
    V = (grid.nodes[None, :, :] - u[:, None, :]) / sqrt_theta[:, None, None]
    V2 = np.sum(V**2, axis=-1)

    euler_part = (mass_term[:, None] / rho[:, None]
                  + np.einsum("cnj,cj->cn", V, momentum_term) / sqrt_theta[:, None]
                  + (energy_term / theta)[:, None] * (0.5 * V2 - 1.5))
    # 只有 ∂₁ 非零: A(V):∇u = Σ_j A_1j ∂₁u_j
    a_part = V[..., 0] * np.einsum("cnj,cj->cn", V, d_u) - V2 / 3.0 * div_u[:, None]
    b_part = tensor_B(V)[..., 0] * (d_theta / sqrt_theta)[:, None]
    return euler_part + a_part + b_part


def linearized_transport(rho: np.ndarray, u: np.ndarray, theta: np.ndarray, spatial_grid: SpatialGrid,
                         grid: VelocityGrid, mode: Optional[DerivativeMode] = None) -> np.ndarray:
    """g = ρ + u·v + (|v|²/2−3/2)θ 时 v·∇ₓg 的声学分解形式, 形状(C, N)

    ((∇·u, ∇(ρ+θ), (2/3)∇·u), (1, v, |v|²/2−3/2)) + A(v):∇u + B(v)·∇θ
    """
    mode = mode or config.solver.derivative
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    theta = np.asarray(theta, dtype=float)
    for name, values in (("rho", rho), ("u", u), ("theta", theta)):
        check_resolution(values, name)

    d_u = derivative(u, spatial_grid, mode)
    d_theta = derivative(theta, spatial_grid, mode)
    d_pressure = derivative(rho + theta, spatial_grid, mode)
    div_u = d_u[:, 0]

    v = grid.nodes
    v1 = v[:, 0][None, :]
    v2 = grid.speed_squared[None, :]
    acoustic = (div_u[:, None] + v1 * d_pressure[:, None]
                + (2.0 / 3.0) * div_u[:, None] * (0.5 * v2 - 1.5))
    a_part = v1 * (d_u @ v.T) - v2 / 3.0 * div_u[:, None]
    b_part = tensor_B(v)[:, 0][None, :] * d_theta[:, None]
    return acoustic + a_part + b_part


def direct_transport(log_values: np.ndarray, spatial_grid: SpatialGrid, grid: VelocityGrid,
                     mode: Optional[DerivativeMode] = None) -> np.ndarray:
    """直接计算 v·∇ₓφ = v₁∂₁φ, φ 形状(C, N)"""
    mode = mode or config.solver.derivative
    return grid.nodes[:, 0][None, :] * derivative(log_values, spatial_grid, mode)
