"""
离散速度空间
张量积速度节点、Gauss权重求积、内积、碰撞括号与流体投影
"""

import math
from typing import Callable, Literal, Optional, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cholesky, solve_triangular

from ..models.error import ConfigurationError, DimensionError
from ..utils.logger import get_logger
from .config import config

logger = get_logger(__name__)

GridRule = Literal["gauss_hermite", "uniform_trapezoid"]

LOG_NORMALIZATION = -1.5 * math.log(2 * math.pi)
SPHERE_AREA = 4 * math.pi


def _read_only(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def sphere_rule(n_polar: int, n_azimuth: int) -> Tuple[np.ndarray, np.ndarray]:
    """单位球面乘积求积: cos(极角)上的Gauss-Legendre × 半步偏移的均匀方位角

    两个节点数都必须为偶数, 这样节点集对 σ → −σ 封闭。
    """
    if n_polar <= 0 or n_azimuth <= 0:
        raise ConfigurationError("球面求积节点数必须为正", n_polar=n_polar, n_azimuth=n_azimuth)
    if n_polar % 2 or n_azimuth % 2:
        raise ConfigurationError("球面求积节点数必须为偶数", n_polar=n_polar, n_azimuth=n_azimuth)

    cos_polar, polar_weights = leggauss(n_polar)
    sin_polar = np.sqrt(1.0 - cos_polar**2)
    azimuth = 2 * math.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth

    nodes = np.stack([
        np.outer(sin_polar, np.cos(azimuth)),
        np.outer(sin_polar, np.sin(azimuth)),
        np.repeat(cos_polar[:, None], n_azimuth, axis=1),
    ], axis=-1).reshape(-1, 3)
    weights = np.repeat(polar_weights * (2 * math.pi / n_azimuth), n_azimuth)
    return nodes, weights


class VelocityGrid:
    """张量积速度网格

    所有速度场的最后一维长度为 N = n³, 节点按 (i, j, k) 的字典序展开。
    ⟨f, g⟩ = Σ_k weights_k · maxwell_weights_k · f_k · g_k。
    """

    def __init__(self, rule: GridRule, axis_nodes: np.ndarray, axis_weights: np.ndarray,
                 sphere_nodes: np.ndarray, sphere_weights: np.ndarray,
                 truncation_radius: float, tol_norm: float):
        self.rule = rule
        self.points_per_axis = int(axis_nodes.shape[0])
        self.truncation_radius = float(truncation_radius)
        self.tol_norm = float(tol_norm)
        self.axis_nodes = _read_only(axis_nodes)

        mesh = np.meshgrid(axis_nodes, axis_nodes, axis_nodes, indexing="ij")
        self.nodes = _read_only(np.stack([m.ravel() for m in mesh], axis=-1))
        self.speed_squared = _read_only(np.sum(self.nodes**2, axis=-1))
        self.log_maxwell = _read_only(LOG_NORMALIZATION - 0.5 * self.speed_squared)
        self.maxwell_weights = _read_only(np.exp(self.log_maxwell))

        w = np.einsum("i,j,k->ijk", axis_weights, axis_weights, axis_weights).ravel()
        if rule == "gauss_hermite":
            # 轴权重已吸收Gauss测度, w 就是 weights·maxwell_weights
            self.measure = _read_only(w)
            self.weights = _read_only(w / self.maxwell_weights)
        else:
            self.weights = _read_only(w)
            self.measure = _read_only(w * self.maxwell_weights)

        self.sphere_nodes = _read_only(sphere_nodes)
        self.sphere_weights = _read_only(sphere_weights)

        self._check_invariants()
        self.hydro_basis = _read_only(self._orthonormal_invariants())

    @property
    def size(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def v_max(self) -> float:
        """x₁方向最大输运速度"""
        return float(np.max(np.abs(self.axis_nodes)))

    def _check_invariants(self) -> None:
        if np.any(self.weights <= 0):
            raise ConfigurationError("速度网格存在非正权重", rule=self.rule)
        if not np.allclose(np.sort(self.axis_nodes), np.sort(-self.axis_nodes), atol=1e-12, rtol=0):
            raise ConfigurationError("速度网格不关于 v → −v 对称", rule=self.rule)
        normalization = float(self.measure.sum())
        if abs(normalization - 1.0) > self.tol_norm:
            raise ConfigurationError("Gauss测度归一化超出容差", normalization=normalization,
                                     tol_norm=self.tol_norm, rule=self.rule)
        if self.sphere_weights.size == 0:
            raise ConfigurationError("球面求积为空")
        area = float(self.sphere_weights.sum())
        if abs(area - SPHERE_AREA) > self.tol_norm * SPHERE_AREA:
            raise ConfigurationError("球面权重之和不等于4π", area=area)

    def invariants(self) -> np.ndarray:
        """五个碰撞不变量 {1, v₁, v₂, v₃, |v|²}, 形状(5, N)"""
        return np.vstack([np.ones(self.size), self.nodes.T, self.speed_squared])

    def _orthonormal_invariants(self) -> np.ndarray:
        """在离散内积下正交归一化的不变量基"""
        phi = self.invariants()
        gram = (phi * self.measure) @ phi.T
        lower = cholesky(gram, lower=True)
        return solve_triangular(lower, phi, lower=True)

    def _check_field(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.ndim == 0:
            return np.broadcast_to(f, (self.size,))
        if f.shape[-1] != self.size:
            raise DimensionError("速度场长度与网格不匹配", expected=self.size, actual=f.shape[-1])
        return f

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """⟨f, g⟩ = ∫ f g M dv, 对最后一维求积"""
        f = self._check_field(f)
        g = self._check_field(g)
        return np.sum(f * g * self.measure, axis=-1)

    def mean(self, f: np.ndarray) -> np.ndarray:
        """⟨f⟩ = ∫ f M dv"""
        return np.sum(self._check_field(f) * self.measure, axis=-1)

    def raw_moments(self, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """数密度f的 (∫f, ∫vf, ∫|v|²f)"""
        f = self._check_field(f)
        weighted = f * self.weights
        mass = weighted.sum(axis=-1)
        momentum = weighted @ self.nodes
        energy = weighted @ self.speed_squared
        return mass, momentum, energy

    def hydro_coefficients(self, g: np.ndarray) -> np.ndarray:
        """g 在正交基上的五个系数, 形状(..., 5)"""
        g = self._check_field(g)
        return (g * self.measure) @ self.hydro_basis.T

    def project_hydro(self, g: np.ndarray) -> np.ndarray:
        """到 𝒩 = span{1, v, |v|²} 的正交投影 𝒫g"""
        return self.hydro_coefficients(g) @ self.hydro_basis

    def project_ortho(self, g: np.ndarray) -> np.ndarray:
        """𝒫⊥g = g − 𝒫g"""
        g = self._check_field(g)
        return g - self.project_hydro(g)

    def fluctuation_moments(self, g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ρ^b, u^b, θ^b) = (⟨g⟩, ⟨vg⟩, ⟨(|v|²−3)/3·g⟩)"""
        g = self._check_field(g)
        weighted = g * self.measure
        rho_b = weighted.sum(axis=-1)
        u_b = weighted @ self.nodes
        theta_b = weighted @ ((self.speed_squared - 3.0) / 3.0)
        return rho_b, u_b, theta_b

    def collision_bracket(self, integrand: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
                          kernel_b: float = 1.0, chunk_pairs: Optional[int] = None) -> float:
        """⟨⟨F⟩⟩ = ∫∫∫ F(v, v₁, σ) M M₁ b dσ dv dv₁ 的三重求积

        Args:
            integrand: 接收可广播的 v(K,1,1,3), v₁(1,N,1,3), σ(1,1,S,3), 返回可广播到(K,N,S)的数组
            kernel_b: 截面常数 b > 0
        """
        if kernel_b <= 0:
            raise ConfigurationError("截面常数必须为正", kernel_b=kernel_b)
        if self.sphere_nodes.shape[0] == 0:
            raise ConfigurationError("球面求积为空")
        chunk_pairs = chunk_pairs or config.kernel.chunk_pairs
        step = max(1, chunk_pairs // self.size)

        n, s = self.size, self.sphere_nodes.shape[0]
        v1 = self.nodes[None, :, None, :]
        sigma = self.sphere_nodes[None, None, :, :]
        total = 0.0
        for start in range(0, n, step):
            stop = min(n, start + step)
            v = self.nodes[start:stop, None, None, :]
            values = np.broadcast_to(np.asarray(integrand(v, v1, sigma), dtype=float), (stop - start, n, s))
            total += float(np.einsum("kls,k,l,s->", values, self.measure[start:stop],
                                     self.measure, self.sphere_weights))
        return kernel_b * total

    def quadrature_report(self) -> dict:
        """⟨1⟩, ⟨|v|²⟩, ⟨|v|⁴⟩ 相对 1, 3, 15 的求积残差"""
        return {
            "norm_defect": float(self.mean(1.0) - 1.0),
            "second_moment_defect": float(self.mean(self.speed_squared) - 3.0),
            "fourth_moment_defect": float(self.mean(self.speed_squared**2) - 15.0),
            "sphere_area_defect": float(self.sphere_weights.sum() - SPHERE_AREA),
        }


def build_grid(points_per_axis: Optional[int] = None, rule: Optional[GridRule] = None,
               truncation_radius: Optional[float] = None, sphere_polar: Optional[int] = None,
               sphere_azimuth: Optional[int] = None, tol_norm: Optional[float] = None) -> VelocityGrid:
    """构建速度网格, 未给出的参数取配置值

    Raises:
        ConfigurationError: 尺寸非法、规则未知或不变量不成立
    """
    grid_config = config.grid
    points_per_axis = grid_config.points_per_axis if points_per_axis is None else points_per_axis
    rule = rule or grid_config.rule
    truncation_radius = grid_config.truncation_radius if truncation_radius is None else truncation_radius
    sphere_polar = grid_config.sphere_polar if sphere_polar is None else sphere_polar
    sphere_azimuth = grid_config.sphere_azimuth if sphere_azimuth is None else sphere_azimuth

    if points_per_axis < 4:
        raise ConfigurationError("每轴速度节点数至少为4", points_per_axis=points_per_axis)

    if rule == "gauss_hermite":
        axis_nodes, axis_weights = hermegauss(points_per_axis)
        axis_weights = axis_weights / math.sqrt(2 * math.pi)
        radius = float(np.max(np.abs(axis_nodes)))
        default_tol = 1e-12
    elif rule == "uniform_trapezoid":
        if truncation_radius <= 0:
            raise ConfigurationError("均匀网格的截断半宽必须为正", truncation_radius=truncation_radius)
        spacing = 2 * truncation_radius / points_per_axis
        axis_nodes = -truncation_radius + spacing * (np.arange(points_per_axis) + 0.5)
        axis_weights = np.full(points_per_axis, spacing)
        radius = float(truncation_radius)
        default_tol = 1e-3
    else:
        raise ConfigurationError(f"未知的速度网格规则: {rule}", rule=rule)

    if tol_norm is None:
        tol_norm = grid_config.tol_norm if grid_config.tol_norm is not None else default_tol

    sphere_nodes, sphere_weights = sphere_rule(sphere_polar, sphere_azimuth)
    grid = VelocityGrid(rule, axis_nodes, axis_weights, sphere_nodes, sphere_weights, radius, tol_norm)
    logger.debug("速度网格已构建", rule=rule, nodes=grid.size, sphere_nodes=sphere_nodes.shape[0])
    return grid
