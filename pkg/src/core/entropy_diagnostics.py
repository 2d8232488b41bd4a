"""
相对熵诊断
H(f|g)、熵分裂与二次近似、矩通量展开、⟨A,g⟩/⟨B,g⟩ 分解、耗散等价、BGL不等式以及整体熵预算

所有空间积分与求解器一致, 使用周期梯形求积; 所有速度积分使用网格求积。
余项一律按显式公式计算, 剩余的闭合残差单独报告。
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import kl_div

from ..models.error import (DegenerateMomentError, DimensionError, PositivityError,
                            TrajectoryMisalignmentError)
from ..models.report import EntropyReport
from ..models.state import FluidState, KineticState, SpatialGrid, Trajectory
from ..utils.logger import get_logger
from ..utils.spectral import DerivativeMode, derivative
from .cns_solver import ENERGY_FORMS, stress_tensor
from .collision import CollisionKernel, QField
from .config import config
from .maxwellian import ParamsLike, log_ratio, maxwellian_of, tensor_A, tensor_B
from .velocity_grid import VelocityGrid

logger = get_logger(__name__)

_IDENTITY = np.eye(3)


# ----------------------------------------------------------------------
# 相对熵与熵分裂
# ----------------------------------------------------------------------

def _density_ratio(f: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """G = f/M, 要求 f > 0"""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != grid.size:
        raise DimensionError("分布函数长度与速度网格不匹配", expected=grid.size, actual=f.shape[-1])
    if np.any(f <= 0):
        raise PositivityError("相对熵要求分布函数严格为正", min_value=float(np.min(f)))
    return f / grid.maxwell_weights


def _entropy_density(ratio: np.ndarray, target_ratio: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """∫(f log(f/g) − f + g) dv = Σ W·kl_div(f/M, g/M)"""
    return grid.mean(kl_div(ratio, target_ratio))


def _integrate_cells(values: np.ndarray, spatial_grid: Optional[SpatialGrid]):
    if spatial_grid is None:
        return values if np.ndim(values) else float(values)
    return float(spatial_grid.integrate(values))


def relative_entropy(f: np.ndarray, target: ParamsLike, grid: VelocityGrid,
                     spatial_grid: Optional[SpatialGrid] = None):
    """H(f|ℳ_target) = ∬ (f log(f/g) − f + g) dv dx

    Args:
        f: 数密度, 形状(N,)或(C, N)
        target: 单个Maxwell参数或逐单元参数场
        spatial_grid: 给出时对x积分返回标量, 否则返回逐单元的值

    Raises:
        PositivityError: f 存在非正值
    """
    ratio = _density_ratio(f, grid)
    target_ratio = np.exp(log_ratio(target, grid))
    return _integrate_cells(_entropy_density(ratio, target_ratio, grid), spatial_grid)


def modulated_entropy(state: KineticState, fluid: FluidState, grid: VelocityGrid) -> float:
    """H(f_ε|M_ε)/ε², f_ε = M(1+εg), 直接由g计算避免下溢"""
    ratio = 1.0 + state.epsilon * state.g
    if np.any(ratio <= 0):
        raise PositivityError("相对熵要求分布函数严格为正", time=state.time, epsilon=state.epsilon)
    target_ratio = np.exp(log_ratio(fluid.maxwellian_field(), grid))
    return float(state.spatial_grid.integrate(_entropy_density(ratio, target_ratio, grid))) / state.epsilon**2


def fluctuation_moments(g: np.ndarray, grid: VelocityGrid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(ρ^b, u^b, θ^b) = (⟨g⟩, ⟨vg⟩, ⟨(|v|²−3)/3·g⟩)"""
    return grid.fluctuation_moments(g)


class EntropySplit(NamedTuple):
    """H(f|M_ε) = H(f|M_f) + H(M_f|M_ε)"""
    kinetic: object
    fluid: object
    total: object

    @property
    def defect(self):
        """可加性残差, 等于ℳ_f节点值的离散矩偏差与 log(ℳ_f/M_ε) 的内积"""
        return self.total - self.kinetic - self.fluid


def _split_from_ratio(ratio: np.ndarray, target_ratio: np.ndarray, grid: VelocityGrid,
                      spatial_grid: Optional[SpatialGrid]) -> EntropySplit:
    mf = maxwellian_of(ratio * grid.maxwell_weights, grid)
    mf_ratio = np.exp(log_ratio(mf, grid))
    return EntropySplit(
        kinetic=_integrate_cells(_entropy_density(ratio, mf_ratio, grid), spatial_grid),
        fluid=_integrate_cells(_entropy_density(mf_ratio, target_ratio, grid), spatial_grid),
        total=_integrate_cells(_entropy_density(ratio, target_ratio, grid), spatial_grid),
    )


def entropy_split(f: np.ndarray, target: ParamsLike, grid: VelocityGrid,
                  spatial_grid: Optional[SpatialGrid] = None) -> EntropySplit:
    """熵分裂, M_f 为与f同矩的局部Maxwell分布(节点取值)

    Raises:
        PositivityError: f 存在非正值
        DegenerateMomentError: 矩反演失败
    """
    ratio = _density_ratio(f, grid)
    return _split_from_ratio(ratio, np.exp(log_ratio(target, grid)), grid, spatial_grid)


# ----------------------------------------------------------------------
# H(M_f|M_ε)/ε² 的二次近似
# ----------------------------------------------------------------------

@dataclass
class QuadraticApproximation:
    """H(M_f|M_ε)/ε² = 二次主项 + R₈ + R₉ + R₁₀

    r8, r9, r10 为逐单元的密度、温度、速度三部分精确值与其二次部分之差。
    """
    quadratic: float
    exact: float
    r8: np.ndarray
    r9: np.ndarray
    r10: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    quadratic_density: np.ndarray = field(repr=False)

    @property
    def remainder(self) -> float:
        return self.exact - self.quadratic


def quadratic_entropy_approx(rho_b: np.ndarray, u_b: np.ndarray, theta_b: np.ndarray,
                             fluid: FluidState) -> QuadraticApproximation:
    """二次近似主项与 R₈, R₉, R₁₀

    ρ_f = 1+ερ^b, u_f = εu^b/(1+ερ^b) = εu^b + ε²r₁, θ_f = 1+εθ^b+ε²r₂。
    """
    eps = fluid.epsilon
    rho_b = np.asarray(rho_b, dtype=float)
    u_b = np.asarray(u_b, dtype=float)
    theta_b = np.asarray(theta_b, dtype=float)

    rho_f = 1.0 + eps * rho_b
    if np.any(rho_f <= 0):
        raise DegenerateMomentError("扰动矩给出非正密度", rho_min=float(np.min(rho_f)))
    u_f = eps * u_b / rho_f[:, None]
    energy = 3.0 + 3.0 * eps * (theta_b + rho_b)
    theta_f = (energy / rho_f - np.sum(u_f**2, axis=-1)) / 3.0
    if np.any(theta_f <= 0):
        raise DegenerateMomentError("扰动矩给出非正温度", theta_min=float(np.min(theta_f)))

    rho_e, u_e, theta_e = fluid.rho, fluid.u, fluid.theta
    # kl_div(a, b) = a log(a/b) − a + b; kl_div(1, r) = r − 1 − log r
    density = kl_div(rho_f, rho_e) / eps**2
    temperature = 1.5 * rho_f * kl_div(1.0, theta_f / theta_e) / eps**2
    velocity = rho_f * np.sum((u_f - u_e) ** 2, axis=-1) / (2.0 * theta_e * eps**2)

    q_density = 0.5 * (rho_b - fluid.rho_t) ** 2
    q_temperature = 0.75 * (theta_b - fluid.theta_t) ** 2
    q_velocity = 0.5 * np.sum((u_b - fluid.u_t) ** 2, axis=-1)
    quadratic_density = q_density + q_temperature + q_velocity

    integrate = fluid.spatial_grid.integrate
    return QuadraticApproximation(
        quadratic=float(integrate(quadratic_density)),
        exact=float(integrate(density + temperature + velocity)),
        r8=density - q_density,
        r9=temperature - q_temperature,
        r10=velocity - q_velocity,
        r1=(u_f - eps * u_b) / eps**2,
        r2=(theta_f - 1.0 - eps * theta_b) / eps**2,
        quadratic_density=quadratic_density,
    )


# ----------------------------------------------------------------------
# 矩通量展开
# ----------------------------------------------------------------------

class MomentFluxes(NamedTuple):
    """∫(V/√θ)f, ∫(1/θ)(|V|²/2−3/2)f, ∫A(V)f, ∫B(V)f/√θ, V = (v−u)/√θ"""
    v_f: np.ndarray
    v_square_f: np.ndarray
    av_f: np.ndarray
    bv_f: np.ndarray


@dataclass
class FluxExpansions:
    """直接求积与闭式展开的对照"""
    direct: MomentFluxes
    closed: MomentFluxes
    printed_v_square_f: np.ndarray = field(repr=False)

    def closure_defect(self) -> float:
        """四个量中最大的 ‖直接 − 闭式‖∞ / max(1, ‖闭式‖∞)"""
        defects = []
        for direct, closed in zip(self.direct, self.closed):
            scale = max(1.0, float(np.max(np.abs(closed))) if closed.size else 0.0)
            defects.append(float(np.max(np.abs(direct - closed))) / scale if closed.size else 0.0)
        return max(defects)

    def printed_defect(self) -> float:
        """印刷形式的二次矩展开相对直接求积的偏差"""
        return float(np.max(np.abs(self.printed_v_square_f - self.direct.v_square_f)))


def _velocity_moments(g: np.ndarray, grid: VelocityGrid) -> Tuple[np.ndarray, np.ndarray]:
    """(⟨A(v), g⟩, ⟨B(v), g⟩)"""
    weighted = np.asarray(g, dtype=float) * grid.measure
    a_moment = np.einsum("cn,nij->cij", weighted, tensor_A(grid.nodes))
    b_moment = np.einsum("cn,ni->ci", weighted, tensor_B(grid.nodes))
    return a_moment, b_moment


def direct_moment_fluxes(state: KineticState, fluid: FluidState, grid: VelocityGrid) -> MomentFluxes:
    """对 f = M(1+εg) 直接求积"""
    F = grid.measure * (1.0 + state.epsilon * state.g)
    theta = fluid.theta
    sqrt_theta = np.sqrt(theta)
    V = (grid.nodes[None, :, :] - fluid.u[:, None, :]) / sqrt_theta[:, None, None]
    half_square = 0.5 * np.sum(V**2, axis=-1)
    return MomentFluxes(
        v_f=np.einsum("cn,cni->ci", F, V) / sqrt_theta[:, None],
        v_square_f=np.einsum("cn,cn->c", F, half_square - 1.5) / theta,
        av_f=np.einsum("cn,cnij->cij", F, tensor_A(V)),
        bv_f=np.einsum("cn,cni->ci", F, tensor_B(V)) / sqrt_theta[:, None],
    )


def closed_moment_fluxes(state: KineticState, fluid: FluidState,
                         grid: VelocityGrid) -> Tuple[MomentFluxes, np.ndarray]:
    """用 (ε, ρ^b, u^b, θ^b, ⟨A,g⟩, ⟨B,g⟩, ρ̃, ũ, θ̃) 表示的闭式, 附带印刷形式的二次矩"""
    eps = state.epsilon
    rho_b, u_b, theta_b = grid.fluctuation_moments(state.g)
    a_g, b_g = _velocity_moments(state.g, grid)
    ut, tt = fluid.u_t, fluid.theta_t
    theta = fluid.theta
    th2 = theta**2

    ut2 = np.sum(ut**2, axis=-1)
    dot = np.sum(ut * u_b, axis=-1)

    v_f = (eps * (u_b - ut) - eps**2 * rho_b[:, None] * ut) / theta[:, None]

    v_square = (eps * 1.5 * (theta_b - tt) / th2
                - eps**2 * 1.5 * tt * rho_b / th2
                + eps**2 * ut2 / (2.0 * th2)
                - eps**2 * dot / th2
                + eps**3 * ut2 * rho_b / (2.0 * th2))
    printed = (eps * 1.5 * (theta_b - theta) / th2
               + eps**2 * 1.5 * tt * rho_b / th2
               - eps**2 * dot / th2
               + eps**3 * ut2 * rho_b / (2.0 * th2))

    a_ut = tensor_A(ut)
    cross = ut[:, :, None] * u_b[:, None, :] + u_b[:, :, None] * ut[:, None, :]
    av_f = ((eps**2 * (a_ut - cross + (2.0 / 3.0) * dot[:, None, None] * _IDENTITY)
             + eps**3 * rho_b[:, None, None] * a_ut) / theta[:, None, None]
            + eps * a_g / theta[:, None, None])

    a_g_ut = np.einsum("cij,cj->ci", a_g, ut)
    bv_f = (eps**2 * 2.5 * (tt[:, None] * ut - tt[:, None] * u_b - theta_b[:, None] * ut)
            + eps * b_g
            - eps**2 * a_g_ut
            + eps**3 * (-0.5 * ut2[:, None] * ut + 0.5 * ut2[:, None] * u_b
                        + 2.5 * (rho_b * tt)[:, None] * ut + dot[:, None] * ut)
            - eps**4 * 0.5 * (ut2 * rho_b)[:, None] * ut) / th2[:, None]

    return MomentFluxes(v_f=v_f, v_square_f=v_square, av_f=av_f, bv_f=bv_f), printed


def moment_flux_expansions(state: KineticState, fluid: FluidState, grid: VelocityGrid) -> FluxExpansions:
    """四个速度积分的直接求积与闭式展开"""
    closed, printed = closed_moment_fluxes(state, fluid, grid)
    return FluxExpansions(direct=direct_moment_fluxes(state, fluid, grid), closed=closed,
                          printed_v_square_f=printed)


# ----------------------------------------------------------------------
# ⟨A,g⟩/ε 与 ⟨B,g⟩/ε 的分解
# ----------------------------------------------------------------------

@dataclass
class AvBvDecomposition:
    """(1/ε)⟨A,g⟩ = −μσ(u^b) + A(u^b) + R_A, (1/ε)⟨B,g⟩ = −(5/2)κ∇θ^b + (5/2)u^bθ^b + R_B

    R_A = 2⟨Â,Q(𝒫⊥g,𝒫g)⟩ + ⟨Â,Q(𝒫⊥g,𝒫⊥g)⟩ − ⟨Â,v·∇𝒫⊥g⟩ − ε⟨Â,∂ₜ𝒫⊥g⟩, R_B 同理。
    """
    direct_A: np.ndarray
    leading_A: np.ndarray
    r_A: np.ndarray
    direct_B: np.ndarray
    leading_B: np.ndarray
    r_B: np.ndarray
    transport_A: np.ndarray = field(repr=False)
    time_A: np.ndarray = field(repr=False)
    transport_B: np.ndarray = field(repr=False)
    time_B: np.ndarray = field(repr=False)
    time_derivative_available: bool = True

    @property
    def closure_A(self) -> np.ndarray:
        return self.direct_A - self.leading_A - self.r_A

    @property
    def closure_B(self) -> np.ndarray:
        return self.direct_B - self.leading_B - self.r_B

    def closure(self) -> float:
        """两个恒等式的最大逐点残差"""
        return max(float(np.max(np.abs(self.closure_A))), float(np.max(np.abs(self.closure_B))))


def snapshot_time_derivative(snapshots: Sequence[KineticState], index: int) -> Optional[np.ndarray]:
    """相邻快照的中心差分 ∂ₜg, 端点单侧; 只有一个快照时返回None"""
    count = len(snapshots)
    if count < 2:
        return None
    index = index % count
    lo = max(index - 1, 0)
    hi = min(index + 1, count - 1)
    dt = snapshots[hi].time - snapshots[lo].time
    if dt <= 0:
        raise TrajectoryMisalignmentError("快照时间不递增, 无法差分",
                                          timestamps=[snapshots[lo].time, snapshots[hi].time])
    return (snapshots[hi].g - snapshots[lo].g) / dt


def avbv_decomposition(snapshots: Sequence[KineticState], kernel: CollisionKernel, index: int = 0,
                       dg_dt: Optional[np.ndarray] = None,
                       mode: Optional[DerivativeMode] = None) -> AvBvDecomposition:
    """在第index个快照上分解 (1/ε)⟨A,g⟩ 与 (1/ε)⟨B,g⟩

    Args:
        snapshots: 同一轨迹上按时间排列的快照
        dg_dt: 给定的 ∂ₜg, 为空时用相邻快照差分
    """
    mode = mode or config.solver.derivative
    state = snapshots[index]
    grid = kernel.grid
    spatial_grid = state.spatial_grid
    eps = state.epsilon
    g = state.g

    available = True
    if dg_dt is None:
        dg_dt = snapshot_time_derivative(snapshots, index)
        if dg_dt is None:
            logger.warning("只有一个快照, ∂ₜg 不可用, 时间项按零处理", time=state.time, epsilon=eps)
            dg_dt = np.zeros_like(g)
            available = False

    a_hat, b_hat, _ = kernel.hat_tensors()
    mu, kappa = kernel.transport_coefficients()
    a_rows = a_hat.reshape(grid.size, 9)

    def against_a(h: np.ndarray) -> np.ndarray:
        return ((h * grid.measure) @ a_rows).reshape(h.shape[:-1] + (3, 3))

    def against_b(h: np.ndarray) -> np.ndarray:
        return (h * grid.measure) @ b_hat

    hydro = grid.project_hydro(g)
    ortho = g - hydro
    collision = 2.0 * kernel.symmetrized_Q(ortho, hydro) + kernel.symmetrized_Q(ortho, ortho)
    streaming = grid.nodes[:, 0][None, :] * derivative(ortho, spatial_grid, mode)
    time_part = eps * grid.project_ortho(dg_dt)

    rho_b, u_b, theta_b = grid.fluctuation_moments(g)
    a_g, b_g = _velocity_moments(g, grid)
    grad_theta_b = np.zeros_like(u_b)
    grad_theta_b[:, 0] = derivative(theta_b, spatial_grid, mode)

    transport_a, time_a = against_a(streaming), against_a(time_part)
    transport_b, time_b = against_b(streaming), against_b(time_part)
    return AvBvDecomposition(
        direct_A=a_g / eps,
        leading_A=-mu * stress_tensor(u_b, spatial_grid, mode) + tensor_A(u_b),
        r_A=against_a(collision) - transport_a - time_a,
        direct_B=b_g / eps,
        leading_B=-2.5 * kappa * grad_theta_b + 2.5 * u_b * theta_b[:, None],
        r_B=against_b(collision) - transport_b - time_b,
        transport_A=transport_a,
        time_A=time_a,
        transport_B=transport_b,
        time_B=time_b,
        time_derivative_available=available,
    )


# ----------------------------------------------------------------------
# 熵耗散与q场
# ----------------------------------------------------------------------

@dataclass
class DissipationEquivalence:
    """D(f)/ε⁴ = ¼⟨⟨q²⟩⟩ + R₁₁"""
    d_over_eps4: np.ndarray
    quarter_bracket_q2: np.ndarray
    r11: np.ndarray
    q_field: QField = field(repr=False)

    @property
    def defect(self) -> float:
        return float(np.max(np.abs(self.d_over_eps4 - self.quarter_bracket_q2 - self.r11)))


def dissipation_equivalence(f: np.ndarray, epsilon: float, kernel: CollisionKernel) -> DissipationEquivalence:
    """D(f)/ε⁴、¼⟨⟨q_ε²⟩⟩ 与 R₁₁, f 为数密度

    Raises:
        ConfigurationError: 非 maxwell_molecules 模式
        PositivityError: f 存在非正值
    """
    q = kernel.q_field(f, epsilon)
    return DissipationEquivalence(
        d_over_eps4=np.asarray(kernel.entropy_dissipation(f)) / epsilon**4,
        quarter_bracket_q2=0.25 * np.asarray(q.square_bracket()),
        r11=np.asarray(q.r11()),
        q_field=q,
    )


def bgl_slack(q: QField, kernel: CollisionKernel) -> np.ndarray:
    """¼⟨⟨q²⟩⟩ − ½(1/μ)⟨⟨Âq⟩⟩:⟨⟨Âq⟩⟩ − (2/5)(1/κ)⟨⟨B̂q⟩⟩·⟨⟨B̂q⟩⟩, 逐单元"""
    a_hat, b_hat, _ = kernel.hat_tensors()
    mu, kappa = kernel.transport_coefficients()
    size = kernel.grid.size
    brackets = q.bracket_sym(np.vstack([a_hat.reshape(size, 9).T, b_hat.T]))
    a_part = np.sum(brackets[..., :9] ** 2, axis=-1)
    b_part = np.sum(brackets[..., 9:] ** 2, axis=-1)
    return 0.25 * np.asarray(q.square_bracket()) - 0.5 * a_part / mu - 0.4 * b_part / kappa


# ----------------------------------------------------------------------
# 熵预算
# ----------------------------------------------------------------------

class _SnapshotTerms(NamedTuple):
    """单个观测时刻的被积量(已对x积分)与逐时刻量"""
    instant: Dict[str, float]
    rates: Dict[str, float]
    magnitudes: Dict[str, float]


def _contract_row(matrix: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """M:∇w, 场只沿x₁变化时等于 Σ_j M_1j ∂₁w_j"""
    return np.einsum("cj,cj->c", matrix[:, 0, :], gradient)


def _snapshot_terms(kinetic: KineticState, fluid: FluidState, kernel: CollisionKernel,
                    decomposition: AvBvDecomposition, energy_form: str,
                    mode: DerivativeMode) -> _SnapshotTerms:
    grid = kernel.grid
    spatial_grid = kinetic.spatial_grid
    integrate = spatial_grid.integrate
    eps = kinetic.epsilon

    def d(values: np.ndarray) -> np.ndarray:
        return derivative(values, spatial_grid, mode)

    def total(values: np.ndarray) -> float:
        return float(integrate(values))

    def l1(values: np.ndarray) -> float:
        return float(integrate(np.abs(values)))

    rho_b, u_b, theta_b = grid.fluctuation_moments(kinetic.g)
    a_g, b_g = _velocity_moments(kinetic.g, grid)
    ut, tt = fluid.u_t, fluid.theta_t
    rho, theta = fluid.rho, fluid.theta
    th2 = theta**2
    mu0, kappa0 = kernel.transport_coefficients()
    mu_loc, kappa_loc = kernel.local_coefficients(rho, theta)
    heating, conduction = ENERGY_FORMS[energy_form]
    heat_factor = 1.5 * conduction

    sigma_t = stress_tensor(ut, spatial_grid, mode)
    sigma_b = stress_tensor(u_b, spatial_grid, mode)
    sigma_d = sigma_t - sigma_b
    grad_u = d(ut)
    grad_t = d(tt)
    grad_b = d(theta_b)
    viscous = d(mu_loc[:, None] * sigma_t[:, 0, :])
    heat = d(kappa_loc * grad_t)
    sigma_sq = np.einsum("cij,cij->c", sigma_t, sigma_t)

    # 相对熵与分裂
    ratio = 1.0 + eps * kinetic.g
    if np.any(ratio <= 0):
        raise PositivityError("相对熵要求分布函数严格为正", time=kinetic.time, epsilon=eps)
    target_ratio = np.exp(log_ratio(fluid.maxwellian_field(), grid))
    split = _split_from_ratio(ratio, target_ratio, grid, spatial_grid)
    quad = quadratic_entropy_approx(rho_b, u_b, theta_b, fluid)

    # 通量恒等式: 直接求积
    expansions = moment_flux_expansions(kinetic, fluid, grid)
    direct = expansions.direct
    flux_direct = (np.einsum("ci,ci->c", viscous, direct.v_f) / (eps * rho)
                   + (heating * mu_loc * sigma_sq + conduction * heat / eps) * direct.v_square_f / rho
                   + (_contract_row(direct.av_f, grad_u) + direct.bv_f[:, 0] * grad_t) / eps**2)

    # 主项与 R₁…R₄
    ut2 = np.sum(ut**2, axis=-1)
    dot = np.sum(ut * u_b, axis=-1)
    lead_1 = np.einsum("ci,ci->c", viscous, u_b - ut) / (rho * theta)
    lead_2 = heat_factor * heat * (theta_b - tt) / (rho * th2)
    lead_3 = _contract_row(tensor_A(ut - u_b) - tensor_A(u_b) + a_g / eps, grad_u) / theta
    lead_4 = (2.5 * (tt * ut[:, 0] - tt * u_b[:, 0] - theta_b * ut[:, 0]) + b_g[:, 0] / eps) * grad_t / th2

    w = (-1.5 * tt * rho_b + 0.5 * ut2 - dot + 0.5 * eps * ut2 * rho_b) / th2
    r_1 = -eps * np.einsum("ci,ci->c", viscous, ut) * rho_b / (rho * theta)
    r_2 = (eps * heating * mu_loc * sigma_sq * (1.5 * (theta_b - tt) / th2 + eps * w) / rho
           + eps * conduction * heat * w / rho)
    r_3 = eps * rho_b * _contract_row(tensor_A(ut), grad_u) / theta
    cubic = (-0.5 * ut2 * ut[:, 0] + 0.5 * ut2 * u_b[:, 0] + 2.5 * rho_b * tt * ut[:, 0]
             + ut[:, 0] * dot) / th2
    r_4 = (eps * cubic - eps**2 * 0.5 * ut2 * ut[:, 0] * rho_b / th2
           - np.einsum("cj,cj->c", a_g[:, 0, :], ut) / th2) * grad_t
    flux_closure = flux_direct - (lead_1 + lead_2 + lead_3 + lead_4 + r_1 + r_2 + r_3 + r_4)

    # 分部积分: R₅, R₆
    r_5 = (np.einsum("ci,ci->c", viscous, u_b - ut) * (1.0 / (rho * theta) - 1.0)
           + (eps * tt / theta) * mu0 * _contract_row(sigma_b, grad_u)
           + 0.5 * (mu_loc - mu0) * np.einsum("cij,cij->c", sigma_t, sigma_d))
    r_6 = ((1.0 / (rho * th2) - 1.0) * heat_factor * heat * (theta_b - tt)
           + (1.0 - 1.0 / th2) * 2.5 * kappa0 * grad_b * grad_t
           + (heat_factor * kappa_loc - 2.5 * kappa0) * grad_t * (grad_t - grad_b))

    # 对流项与 R_A, R_B 的贡献
    convection = (_contract_row(tensor_A(ut - u_b), grad_u) / theta
                  + 2.5 * (ut[:, 0] - u_b[:, 0]) * (tt - theta_b) * grad_t / th2)
    r_a = _contract_row(decomposition.r_A, grad_u) / theta
    r_b = decomposition.r_B[:, 0] * grad_t / th2
    avbv_residual = (_contract_row(decomposition.closure_A, grad_u) / theta
                     + decomposition.closure_B[:, 0] * grad_t / th2)

    # R₁₂, R₁₃
    r_12 = np.einsum("cij,cij->c", decomposition.transport_A + decomposition.time_A, sigma_b)
    r_13 = (decomposition.transport_B[:, 0] + decomposition.time_B[:, 0]) * grad_b

    # 熵耗散
    f = grid.maxwell_weights * ratio
    dissipation_base = 0.5 * mu0 * np.einsum("cij,cij->c", sigma_b, sigma_b) + 2.5 * kappa0 * grad_b**2
    flux_integrand = 0.5 * mu0 * np.einsum("cij,cij->c", sigma_d, sigma_d) + 2.5 * kappa0 * (grad_t - grad_b) ** 2

    rates: Dict[str, float] = {
        "flux": total(flux_integrand),
        "R_12_signed": total(r_12),
        "R_13_signed": total(r_13),
        "grad_sup": float(max(np.max(np.abs(grad_u)), np.max(np.abs(grad_t)))),
        "closure": l1(flux_closure) + l1(avbv_residual),
    }
    magnitudes: Dict[str, float] = {
        "R_1": l1(r_1), "R_2": l1(r_2), "R_3": l1(r_3), "R_4": l1(r_4),
        "R_5": l1(r_5), "R_6": l1(r_6), "R_12": l1(r_12), "R_13": l1(r_13),
        "R_A": l1(r_a), "R_B": l1(r_b),
    }
    instant: Dict[str, float] = {
        "h_total": float(split.total) / eps**2,
        "h_kinetic": float(split.kinetic) / eps**2,
        "h_fluid": float(split.fluid) / eps**2,
        "split_defect": float(split.defect) / eps**2,
        "quad_approx": quad.quadratic,
        "R_8": l1(quad.r8), "R_9": l1(quad.r9), "R_10": l1(quad.r10),
        "r_1": l1(np.linalg.norm(quad.r1, axis=-1)), "r_2": l1(quad.r2),
        "convection": total(convection),
        "convection_base": total(np.sum((ut - u_b) ** 2, axis=-1) + (tt - theta_b) ** 2),
        "flux_closure": l1(flux_closure),
        "avbv_closure": decomposition.closure(),
    }

    if kernel.is_full:
        d_cells, r11_cells, slack_min, r3_total, r4_total = [], [], np.inf, 0.0, 0.0
        # q场按单元逐个构造, 控制三元组数组的内存
        for cell in range(f.shape[0]):
            equivalence = dissipation_equivalence(f[cell], eps, kernel)
            d_cells.append(float(equivalence.d_over_eps4))
            r11_cells.append(float(equivalence.r11))
            slack_min = min(slack_min, float(np.min(bgl_slack(equivalence.q_field, kernel))))
            for chunk, (_, _, r3, r4) in zip(kernel.triple_chunks(), equivalence.q_field.remainders()):
                r3_total += spatial_grid.dx * float(np.sum(chunk.omega * np.abs(r3)))
                r4_total += spatial_grid.dx * float(np.sum(chunk.omega * np.abs(r4)))
        d_over_eps4 = np.asarray(d_cells)
        r_11 = np.asarray(r11_cells)
        rates["R_11_signed"] = total(r_11)
        magnitudes["R_11"] = l1(r_11)
        instant["bgl_slack_min"] = slack_min
        instant["r_3"] = r3_total
        instant["r_4"] = r4_total
    else:
        d_over_eps4 = np.asarray(kernel.entropy_dissipation(f)) / eps**4
    rates["dissipation"] = total(d_over_eps4 - dissipation_base)

    return _SnapshotTerms(instant=instant, rates=rates, magnitudes=magnitudes)


def _check_alignment(kinetic_traj: Trajectory, fluid_traj: Trajectory) -> None:
    kinetic_times = kinetic_traj.times
    fluid_times = fluid_traj.times
    if not kinetic_times or len(kinetic_times) != len(fluid_times):
        raise TrajectoryMisalignmentError("动理学与流体轨迹的快照数量不一致",
                                          timestamps=sorted(set(kinetic_times) ^ set(fluid_times)),
                                          kinetic=len(kinetic_times), fluid=len(fluid_times))
    offending = [tk for tk, tf in zip(kinetic_times, fluid_times) if abs(tk - tf) > 1e-12 * max(1.0, abs(tk))]
    if offending:
        raise TrajectoryMisalignmentError("动理学与流体轨迹的观测时刻不一致", timestamps=offending)
    kinetic0, fluid0 = kinetic_traj.initial, fluid_traj.initial
    if kinetic0.epsilon != fluid0.epsilon or kinetic0.spatial_grid != fluid0.spatial_grid:
        raise TrajectoryMisalignmentError("动理学与流体轨迹的ε或空间网格不一致", timestamps=[kinetic0.time],
                                          kinetic_epsilon=kinetic0.epsilon, fluid_epsilon=fluid0.epsilon)


def theorem_budget(kinetic_traj: Trajectory, fluid_traj: Trajectory, kernel: CollisionKernel,
                   time_derivative: Optional[Callable[[KineticState], np.ndarray]] = None,
                   energy_form: Optional[str] = None,
                   mode: Optional[DerivativeMode] = None) -> List[EntropyReport]:
    """逐观测时刻组装熵预算

    Args:
        time_derivative: 给出时用它计算 ∂ₜg(如求解器的方程右端), 否则用相邻快照差分

    Raises:
        TrajectoryMisalignmentError: 两条轨迹的观测时刻、ε或网格不一致
    """
    _check_alignment(kinetic_traj, fluid_traj)
    energy_form = energy_form or config.solver.energy_form
    mode = mode or config.solver.derivative
    snapshots = kinetic_traj.states
    times = np.asarray(kinetic_traj.times, dtype=float)
    epsilon = snapshots[0].epsilon

    logger.info("熵预算计算开始", epsilon=epsilon, snapshots=len(snapshots), mode=kernel.mode)

    terms: List[_SnapshotTerms] = []
    for index, (kinetic, fluid) in enumerate(zip(snapshots, fluid_traj.states)):
        dg_dt = time_derivative(kinetic) if time_derivative is not None else None
        decomposition = avbv_decomposition(snapshots, kernel, index=index, dg_dt=dg_dt, mode=mode)
        terms.append(_snapshot_terms(kinetic, fluid, kernel, decomposition, energy_form, mode))

    def cumulative(values: Sequence[float]) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.size < 2:
            return np.zeros_like(values)
        return cumulative_trapezoid(values, times, initial=0.0)

    def series(source: str, key: str) -> List[float]:
        return [getattr(t, source)[key] for t in terms]

    dissipation_budget = cumulative(series("rates", "dissipation"))
    flux_budget = cumulative(series("rates", "flux"))
    grad_integral = cumulative(series("rates", "grad_sup"))
    closure_integral = cumulative(series("rates", "closure"))
    integrated = {name: cumulative(series("magnitudes", name)) for name in terms[0].magnitudes}
    signed = {name: cumulative(series("rates", f"{name}_signed"))
              for name in ("R_11", "R_12", "R_13") if f"{name}_signed" in terms[0].rates}

    # 对流常数: sup_t |对流项| / (‖∇(ũ,θ̃)‖∞ · ∫(|ũ−u^b|² + |θ̃−θ^b|²))
    ratios = [abs(t.instant["convection"]) / (t.rates["grad_sup"] * t.instant["convection_base"])
              for t in terms if t.rates["grad_sup"] > 0 and t.instant["convection_base"] > 0]
    convection_constant = max(ratios) if ratios else 0.0

    remainder_sum = np.array([t.instant["R_8"] + t.instant["R_9"] + t.instant["R_10"] for t in terms])
    r_7 = convection_constant * cumulative(np.array(series("rates", "grad_sup")) * remainder_sum)

    h0 = terms[0].instant["h_total"]
    full = kernel.is_full
    reports: List[EntropyReport] = []
    for i, t in enumerate(terms):
        residuals = {name: float(values[i]) for name, values in integrated.items()}
        residuals["R_7"] = float(r_7[i])
        for name in ("R_8", "R_9", "R_10", "r_1", "r_2", "r_3", "r_4"):
            if name in t.instant:
                residuals[name] = float(t.instant[name])

        # R̃ + R₅ + R₆ + R₇ + R₁₁ + R₁₂ + 2R₁₃; 闭合残差单独报告, 不计入上界
        remainder_total = (sum(residuals[name] for name in ("R_1", "R_2", "R_3", "R_4", "R_A", "R_B",
                                                            "R_5", "R_6", "R_7", "R_12"))
                           + 2.0 * residuals["R_13"] + residuals.get("R_11", 0.0))
        majorant = (h0 + remainder_total) * float(np.exp(convection_constant * grad_integral[i]))
        left = t.instant["h_total"] + float(dissipation_budget[i]) + float(flux_budget[i])

        dissipation_slack = None
        if full:
            dissipation_slack = float(dissipation_budget[i] - (signed["R_11"][i] + signed["R_12"][i]
                                                               + 2.0 * signed["R_13"][i]))

        reports.append(EntropyReport(
            time=float(times[i]),
            h_over_eps2=t.instant["h_total"],
            h_kinetic=t.instant["h_kinetic"],
            h_fluid=t.instant["h_fluid"],
            split_defect=t.instant["split_defect"],
            quad_approx=t.instant["quad_approx"],
            dissipation_budget=float(dissipation_budget[i]),
            flux_budget=float(flux_budget[i]),
            dissipation_surrogate=not full,
            residuals=residuals,
            flux_closure_defect=t.instant["flux_closure"],
            avbv_closure=t.instant["avbv_closure"],
            closure_integral=float(closure_integral[i]),
            convection_constant=convection_constant,
            gronwall_majorant=majorant,
            budget_slack=majorant - left,
            dissipation_slack=dissipation_slack,
            bgl_slack_min=t.instant.get("bgl_slack_min"),
        ))

    logger.info("熵预算计算完成", epsilon=epsilon,
                sup_h_over_eps2=max(r.h_over_eps2 for r in reports),
                min_budget_slack=min(r.budget_slack for r in reports))
    return reports
