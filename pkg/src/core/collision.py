"""
碰撞算子
BGK弛豫与Maxwell分子全碰撞求积: 𝓛、Q、Â/B̂、输运系数、熵耗散D(f)与q场
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Literal, Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import eigh, eigvalsh, null_space
from scipy.sparse import csr_matrix, diags
from scipy.sparse.linalg import cg

from ..models.error import (ConfigurationError, OrthogonalityError, PositivityError,
                            SolverConvergenceError)
from ..models.state import MaxwellianParams
from ..utils.logger import get_logger
from .config import KernelConfig, config
from .maxwellian import discrete_maxwellian, evaluate, log_ratio, maxwellian_of, tensor_A, tensor_B
from .velocity_grid import VelocityGrid

logger = get_logger(__name__)

KernelMode = Literal["bgk", "maxwell_molecules"]

# 单个三元组在缓存中占用的非零元: 两个27点模板 + 两个选择行 + Δ矩阵
_NNZ_PER_TRIPLE = 27 * 2 + 2 + 56
_ORTHOGONALITY_TOL = 1e-8


def _axis_stencil(axis_nodes: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """一维三点Lagrange模板, 返回 (索引, 权重), 形状均为(T, 3)"""
    n = axis_nodes.shape[0]
    right = np.clip(np.searchsorted(axis_nodes, x), 0, n - 1)
    left = np.clip(right - 1, 0, n - 1)
    nearest = np.where(np.abs(axis_nodes[left] - x) <= np.abs(axis_nodes[right] - x), left, right)
    center = np.clip(nearest, 1, n - 2)

    idx = np.stack([center - 1, center, center + 1], axis=-1)
    x0, x1, x2 = axis_nodes[idx[:, 0]], axis_nodes[idx[:, 1]], axis_nodes[idx[:, 2]]
    weights = np.stack([
        (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2)),
        (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2)),
        (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1)),
    ], axis=-1)
    return idx, weights


def interpolation_matrix(grid: VelocityGrid, points: np.ndarray) -> csr_matrix:
    """三二次Lagrange插值矩阵(27点模板), 对二次多项式精确"""
    n = grid.points_per_axis
    ix, wx = _axis_stencil(grid.axis_nodes, points[:, 0])
    iy, wy = _axis_stencil(grid.axis_nodes, points[:, 1])
    iz, wz = _axis_stencil(grid.axis_nodes, points[:, 2])

    count = points.shape[0]
    indices = (ix[:, :, None, None] * n * n + iy[:, None, :, None] * n + iz[:, None, None, :]).reshape(count, 27)
    data = (wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]).reshape(count, 27)
    indptr = np.arange(0, 27 * count + 1, 27)
    return csr_matrix((data.ravel(), indices.ravel(), indptr), shape=(count, grid.size))


def _matvec(matrix: csr_matrix, h: np.ndarray) -> np.ndarray:
    """对最后一维作用稀疏矩阵"""
    if h.ndim == 1:
        return matrix @ h
    return (matrix @ h.reshape(-1, h.shape[-1]).T).T.reshape(h.shape[:-1] + (matrix.shape[0],))


def _rmatvec(matrix: csr_matrix, x: np.ndarray) -> np.ndarray:
    """对最后一维作用稀疏矩阵的转置"""
    if x.ndim == 1:
        return matrix.T @ x
    return (matrix.T @ x.reshape(-1, x.shape[-1]).T).T.reshape(x.shape[:-1] + (matrix.shape[1],))


@dataclass(frozen=True)
class TripleChunk:
    """一块碰撞三元组 (v_k, v_l, σ_m), k < l, 权重已含对称因子2"""
    k: np.ndarray
    l: np.ndarray
    omega: np.ndarray
    post: csr_matrix
    partner: csr_matrix
    delta: csr_matrix

    @property
    def size(self) -> int:
        return int(self.omega.shape[0])

    def difference(self, h: np.ndarray) -> np.ndarray:
        """Δh = h' + h₁' − h − h₁"""
        return _matvec(self.delta, h)


@dataclass
class QField:
    """碰撞三元组上的q场, q = (G'G₁' − GG₁)/ε²"""
    kernel: "CollisionKernel"
    epsilon: float
    values: List[np.ndarray]
    post_log: Optional[List[np.ndarray]] = field(default=None, repr=False)
    pre_log: Optional[List[np.ndarray]] = field(default=None, repr=False)

    def square_bracket(self) -> np.ndarray:
        """⟨⟨q²⟩⟩"""
        return sum(np.sum(chunk.omega * q**2, axis=-1)
                   for chunk, q in zip(self.kernel.triple_chunks(), self.values))

    def bracket_sym(self, h: np.ndarray) -> np.ndarray:
        """对称化括号 ⟨⟨h q⟩⟩ = −¼⟨⟨Δh q⟩⟩, h 形状(H, N), 返回(..., H)"""
        h = np.atleast_2d(h)
        total = 0.0
        for chunk, q in zip(self.kernel.triple_chunks(), self.values):
            dh = chunk.difference(h)
            total = total + np.einsum("ht,...t->...h", dh * chunk.omega, q)
        return -0.25 * total

    def remainders(self) -> Iterator[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        """逐块给出 (X', X, r₃, r₄), X' = G'G₁' − 1, r₃ = log(1+X') − X' + X'²/2"""
        if self.post_log is None or self.pre_log is None:
            raise ConfigurationError("q场不是由分布函数构造的, 无法给出三次余项")
        for a, b in zip(self.post_log, self.pre_log):
            x_post = np.expm1(a)
            x_pre = np.expm1(b)
            yield x_post, x_pre, a - x_post + 0.5 * x_post**2, b - x_pre + 0.5 * x_pre**2

    def r11(self) -> np.ndarray:
        """R₁₁ = ¼⟨⟨−½q²(X'+X) + (r₃−r₄)q/ε²⟩⟩"""
        eps2 = self.epsilon**2
        total = 0.0
        for chunk, q, (x_post, x_pre, r3, r4) in zip(self.kernel.triple_chunks(), self.values,
                                                     self.remainders()):
            integrand = -0.5 * q**2 * (x_post + x_pre) + (r3 - r4) * q / eps2
            total = total + np.sum(chunk.omega * integrand, axis=-1)
        return 0.25 * total


class CollisionKernel:
    """碰撞核

    mode=bgk 时只有 relaxation_rate 生效, mode=maxwell_molecules 时只有 b_const 生效。
    创建后不可变, 全碰撞模式的三元组、插值模板与𝓛矩阵按需构建并缓存。
    """

    def __init__(self, grid: VelocityGrid, mode: KernelMode = "bgk", b_const: Optional[float] = None,
                 relaxation_rate: Optional[float] = None, chunk_pairs: Optional[int] = None,
                 stencil_cache_limit: Optional[int] = None, cg_tol: Optional[float] = None,
                 cg_maxiter: Optional[int] = None, residual_tol: Optional[float] = None):
        kernel_config = config.kernel
        self.grid = grid
        self.mode = mode
        if mode == "bgk":
            rate = kernel_config.relaxation_rate if relaxation_rate is None else relaxation_rate
            if rate <= 0:
                raise ConfigurationError("BGK弛豫率必须为正", relaxation_rate=rate)
            self.relaxation_rate: Optional[float] = float(rate)
            self.b_const: Optional[float] = None
        elif mode == "maxwell_molecules":
            b = kernel_config.b_const if b_const is None else b_const
            if b <= 0:
                raise ConfigurationError("截面常数必须为正", b_const=b)
            self.b_const = float(b)
            self.relaxation_rate = None
        else:
            raise ConfigurationError(f"未知的碰撞核模式: {mode}", mode=mode)

        self.chunk_pairs = chunk_pairs or kernel_config.chunk_pairs
        self.stencil_cache_limit = kernel_config.stencil_cache_limit if stencil_cache_limit is None \
            else stencil_cache_limit
        self.cg_tol = cg_tol or kernel_config.cg_tol
        self.cg_maxiter = cg_maxiter or kernel_config.cg_maxiter
        self.residual_tol = residual_tol or kernel_config.residual_tol

        self._chunk_cache: Optional[List[TripleChunk]] = None
        self._stiffness: Optional[np.ndarray] = None
        self._eigen: Optional[Tuple[np.ndarray, np.ndarray]] = None
        self._hats: Optional[Tuple[np.ndarray, np.ndarray, float]] = None
        self._coefficient_table: Optional[Tuple[RegularGridInterpolator, RegularGridInterpolator]] = None

    @classmethod
    def from_config(cls, grid: VelocityGrid, kernel_config: Optional[KernelConfig] = None) -> "CollisionKernel":
        kernel_config = kernel_config or config.kernel
        active = {"relaxation_rate": kernel_config.relaxation_rate} if kernel_config.mode == "bgk" \
            else {"b_const": kernel_config.b_const}
        return cls(grid, mode=kernel_config.mode, chunk_pairs=kernel_config.chunk_pairs,
                   stencil_cache_limit=kernel_config.stencil_cache_limit, cg_tol=kernel_config.cg_tol,
                   cg_maxiter=kernel_config.cg_maxiter, residual_tol=kernel_config.residual_tol, **active)

    @property
    def is_full(self) -> bool:
        return self.mode == "maxwell_molecules"

    def _require_full(self, operation: str) -> None:
        if not self.is_full:
            raise ConfigurationError(f"{operation} 需要 maxwell_molecules 模式", mode=self.mode)

    # ------------------------------------------------------------------
    # 全碰撞求积的三元组
    # ------------------------------------------------------------------

    def _build_chunk(self, k: np.ndarray, l: np.ndarray) -> TripleChunk:
        grid = self.grid
        sphere = grid.sphere_nodes
        s = sphere.shape[0]

        v, v1 = grid.nodes[k], grid.nodes[l]
        center = 0.5 * (v + v1)
        radius = 0.5 * np.linalg.norm(v - v1, axis=-1)
        offset = radius[:, None, None] * sphere[None, :, :]
        post = (center[:, None, :] + offset).reshape(-1, 3)
        partner = (center[:, None, :] - offset).reshape(-1, 3)

        lo, hi = grid.axis_nodes[0], grid.axis_nodes[-1]
        tol = 1e-12 * max(1.0, abs(hi))
        inside = (np.all((post >= lo - tol) & (post <= hi + tol), axis=-1)
                  & np.all((partner >= lo - tol) & (partner <= hi + tol), axis=-1))

        kk = np.repeat(k, s)[inside]
        ll = np.repeat(l, s)[inside]
        mm = np.tile(np.arange(s), k.shape[0])[inside]
        omega = 2.0 * self.b_const * grid.measure[kk] * grid.measure[ll] * grid.sphere_weights[mm]

        count = kk.shape[0]
        rows = np.arange(count)
        select_k = csr_matrix((np.ones(count), (rows, kk)), shape=(count, grid.size))
        select_l = csr_matrix((np.ones(count), (rows, ll)), shape=(count, grid.size))
        post_matrix = interpolation_matrix(grid, post[inside])
        partner_matrix = interpolation_matrix(grid, partner[inside])
        delta = (post_matrix + partner_matrix - select_k - select_l).tocsr()
        return TripleChunk(k=kk, l=ll, omega=omega, post=post_matrix, partner=partner_matrix, delta=delta)

    def triple_chunks(self) -> Iterator[TripleChunk]:
        """按块遍历碰撞三元组, 总非零元不超过缓存上限时缓存全部模板"""
        self._require_full("碰撞三元组")
        if self._chunk_cache is not None:
            yield from self._chunk_cache
            return

        upper_k, upper_l = np.triu_indices(self.grid.size, k=1)
        estimate = upper_k.shape[0] * self.grid.sphere_nodes.shape[0] * _NNZ_PER_TRIPLE
        cache: Optional[List[TripleChunk]] = [] if estimate <= self.stencil_cache_limit else None
        for start in range(0, upper_k.shape[0], self.chunk_pairs):
            stop = start + self.chunk_pairs
            chunk = self._build_chunk(upper_k[start:stop], upper_l[start:stop])
            if cache is not None:
                cache.append(chunk)
            yield chunk
        if cache is not None:
            self._chunk_cache = cache
            logger.debug("碰撞三元组模板已缓存", triples=sum(c.size for c in cache))

    def triple_field(self, generator: Callable[[TripleChunk], np.ndarray], epsilon: float = 1.0) -> QField:
        """由逐块生成函数构造任意三元组场(用于BGL不等式等检验)"""
        return QField(kernel=self, epsilon=epsilon, values=[generator(chunk) for chunk in self.triple_chunks()])

    # ------------------------------------------------------------------
    # 线性化算子
    # ------------------------------------------------------------------

    def _stiffness_matrix(self) -> np.ndarray:
        """K = ¼ Δᵀ diag(ω) Δ, 满足 ⟨h, 𝓛g⟩ = hᵀ K g"""
        if self._stiffness is None:
            size = self.grid.size
            stiffness = np.zeros((size, size))
            triples = 0
            for chunk in self.triple_chunks():
                stiffness += 0.25 * (chunk.delta.T @ (diags(chunk.omega) @ chunk.delta)).toarray()
                triples += chunk.size
            stiffness = 0.5 * (stiffness + stiffness.T)
            isolated = int(np.sum(np.diag(stiffness) <= 0))
            if isolated:
                logger.warning("存在未被任何碰撞三元组覆盖的速度节点", isolated=isolated)
            logger.info("线性化碰撞矩阵已组装", nodes=size, triples=triples)
            self._stiffness = stiffness
        return self._stiffness

    def _symmetric_matrix(self) -> np.ndarray:
        sqrt_w = np.sqrt(self.grid.measure)
        return self._stiffness_matrix() / sqrt_w[:, None] / sqrt_w[None, :]

    def _symmetric_eigen(self) -> Tuple[np.ndarray, np.ndarray]:
        """S = W^{-1/2} K W^{-1/2} 的特征分解"""
        if self._eigen is None:
            eigenvalues, eigenvectors = eigh(self._symmetric_matrix())
            self._eigen = (np.maximum(eigenvalues, 0.0), eigenvectors)
        return self._eigen

    def linearized_L(self, g: np.ndarray) -> np.ndarray:
        """𝓛g = −(C(M, Mg) + C(Mg, M))/M"""
        g = np.asarray(g, dtype=float)
        if not self.is_full:
            return self.relaxation_rate * self.grid.project_ortho(g)
        return (g @ self._stiffness_matrix()) / self.grid.measure

    def relaxation_exp(self, g: np.ndarray, tau: float) -> np.ndarray:
        """e^{−τ𝓛} g"""
        g = np.asarray(g, dtype=float)
        if not self.is_full:
            hydro = self.grid.project_hydro(g)
            return hydro + np.exp(-self.relaxation_rate * tau) * (g - hydro)
        return self._spectral_apply(g, np.exp(-tau * self._symmetric_eigen()[0]))

    def relaxation_phi1(self, g: np.ndarray, tau: float) -> np.ndarray:
        """φ₁(−τ𝓛) g = ∫₀¹ e^{−sτ𝓛} g ds"""
        g = np.asarray(g, dtype=float)
        if not self.is_full:
            hydro = self.grid.project_hydro(g)
            return hydro + _phi1(self.relaxation_rate * tau) * (g - hydro)
        return self._spectral_apply(g, _phi1(tau * self._symmetric_eigen()[0]))

    def _spectral_apply(self, g: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
        eigenvectors = self._symmetric_eigen()[1]
        sqrt_w = np.sqrt(self.grid.measure)
        coeffs = (g * sqrt_w) @ eigenvectors
        return ((coeffs * multiplier) @ eigenvectors.T) / sqrt_w

    def spectral_gap(self) -> float:
        """𝓛 在 𝒩⊥ 上的最小特征值"""
        if not self.is_full:
            return float(self.relaxation_rate)
        sqrt_w = np.sqrt(self.grid.measure)
        complement = null_space(self.grid.invariants() * sqrt_w)
        restricted = complement.T @ self._symmetric_matrix() @ complement
        gap = float(eigvalsh(restricted)[0])
        if gap <= 1e-12:
            logger.warning("𝒩⊥ 上存在零特征值, 速度网格可能过粗", gap=gap)
        return gap

    # ------------------------------------------------------------------
    # 双线性项
    # ------------------------------------------------------------------

    def _pair_products(self, chunk: TripleChunk, f: np.ndarray, g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """S₁ = f'g₁' − f g₁, S₂ = f₁'g' − f₁ g"""
        f_post, f_partner = _matvec(chunk.post, f), _matvec(chunk.partner, f)
        g_post, g_partner = _matvec(chunk.post, g), _matvec(chunk.partner, g)
        f_k, f_l = f[..., chunk.k], f[..., chunk.l]
        g_k, g_l = g[..., chunk.k], g[..., chunk.l]
        return f_post * g_partner - f_k * g_l, f_partner * g_post - f_l * g_k

    def bilinear_Q(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Q(f, g) = C(Mf, Mg)/M, 未对称化

        弱形式 ⟨h, Q(f,g)⟩ = ½⟨⟨(h − h')(f'g₁' − f g₁)⟩⟩; 只有质量严格守恒。
        """
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        if not self.is_full:
            return self._bgk_Q(f, g)
        f, g = np.broadcast_arrays(f, g)
        total = np.zeros(f.shape)
        for chunk in self.triple_chunks():
            s1, s2 = self._pair_products(chunk, f, g)
            w1, w2 = chunk.omega * s1, chunk.omega * s2
            total += (_scatter(chunk.k, w1, self.grid.size) - _rmatvec(chunk.post, w1)
                      + _scatter(chunk.l, w2, self.grid.size) - _rmatvec(chunk.partner, w2))
        return 0.25 * total / self.grid.measure

    def symmetrized_Q(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """½(Q(f,g) + Q(g,f)), 弱形式 −⅛⟨⟨Δh (S₁ + S₂)⟩⟩, 守恒全部五个矩"""
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        if not self.is_full:
            return self._bgk_Q(f, g)
        f, g = np.broadcast_arrays(f, g)
        total = np.zeros(f.shape)
        for chunk in self.triple_chunks():
            s1, s2 = self._pair_products(chunk, f, g)
            total += _rmatvec(chunk.delta, chunk.omega * (s1 + s2))
        return -0.125 * total / self.grid.measure

    def _bgk_Q(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """BGK弛豫关于M的二阶项 ½𝓛((𝒫f)(𝒫g))"""
        return 0.5 * self.linearized_L(self.grid.project_hydro(f) * self.grid.project_hydro(g))

    # ------------------------------------------------------------------
    # 非线性碰撞、熵耗散与q场
    # ------------------------------------------------------------------

    def _log_G(self, f: np.ndarray) -> np.ndarray:
        """log G = log(f/M), 要求 f > 0"""
        if np.any(f <= 0):
            index = np.unravel_index(int(np.argmin(f)), f.shape)
            raise PositivityError("全碰撞模式要求分布函数严格为正", min_value=float(np.min(f)),
                                  index=[int(i) for i in index])
        return np.log(f) - self.grid.log_maxwell

    def _log_products(self, chunk: TripleChunk, log_g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """碰撞后 log(G'G₁') (插值log G) 与碰撞前 log(G G₁)"""
        post = _matvec(chunk.post, log_g) + _matvec(chunk.partner, log_g)
        pre = log_g[..., chunk.k] + log_g[..., chunk.l]
        return post, pre

    def collide(self, f: np.ndarray) -> np.ndarray:
        """C(f, f) 作用于数密度f

        bgk: rate·(M_f − f), M_f 为离散矩匹配的Maxwell分布;
        maxwell_molecules: 弱形式 −¼⟨⟨Δh (f'f₁' − f f₁)⟩⟩, 碰撞后值通过插值 log(f/M) 得到。
        """
        f = np.asarray(f, dtype=float)
        if not self.is_full:
            if np.any(f < 0):
                raise PositivityError("分布函数出现负值", min_value=float(np.min(f)))
            return self.relaxation_rate * (discrete_maxwellian(f, self.grid) - f)

        log_g = self._log_G(f)
        total = np.zeros(f.shape)
        for chunk in self.triple_chunks():
            post, pre = self._log_products(chunk, log_g)
            gain_loss = np.exp(pre) * np.expm1(post - pre)
            total += _rmatvec(chunk.delta, chunk.omega * gain_loss)
        return -0.25 * total / self.grid.weights

    def entropy_dissipation(self, f: np.ndarray) -> np.ndarray:
        """D(f) = ¼∫∫∫ (f'f₁' − f f₁) log(f'f₁'/(f f₁)) b dσ dv dv₁

        bgk模式返回替代量 rate·∫(f − M_f) log(f/M_f) dv。
        """
        f = np.asarray(f, dtype=float)
        if not self.is_full:
            if np.any(f <= 0):
                raise PositivityError("熵耗散要求分布函数严格为正", min_value=float(np.min(f)))
            log_target = self.grid.log_maxwell + log_ratio(maxwellian_of(f, self.grid), self.grid)
            integrand = (f - np.exp(log_target)) * (np.log(f) - log_target)
            return self.relaxation_rate * np.sum(integrand * self.grid.weights, axis=-1)

        log_g = self._log_G(f)
        total = 0.0
        for chunk in self.triple_chunks():
            post, pre = self._log_products(chunk, log_g)
            diff = post - pre
            total = total + np.sum(chunk.omega * np.exp(pre) * np.expm1(diff) * diff, axis=-1)
        return 0.25 * total

    def q_field(self, f: np.ndarray, epsilon: float) -> QField:
        """q_ε = (G'G₁' − G G₁)/ε², G = f/M"""
        self._require_full("q场")
        f = np.asarray(f, dtype=float)
        log_g = self._log_G(f)
        values, post_logs, pre_logs = [], [], []
        for chunk in self.triple_chunks():
            post, pre = self._log_products(chunk, log_g)
            values.append((np.expm1(post) - np.expm1(pre)) / epsilon**2)
            post_logs.append(post)
            pre_logs.append(pre)
        return QField(kernel=self, epsilon=epsilon, values=values, post_log=post_logs, pre_log=pre_logs)

    # ------------------------------------------------------------------
    # Â, B̂ 与输运系数
    # ------------------------------------------------------------------

    def solve_hat(self, h: np.ndarray) -> np.ndarray:
        """求解 𝓛ĥ = h, ĥ ∈ 𝒩⊥

        Raises:
            OrthogonalityError: h 不在 𝒩⊥ 中
            SolverConvergenceError: 共轭梯度未达到残差容差
        """
        h = np.asarray(h, dtype=float)
        if h.ndim > 1:
            return np.stack([self.solve_hat(row) for row in h.reshape(-1, h.shape[-1])]).reshape(h.shape)

        norm = float(np.sqrt(self.grid.inner(h, h)))
        hydro_norm = float(np.linalg.norm(self.grid.hydro_coefficients(h)))
        if hydro_norm > _ORTHOGONALITY_TOL * max(1.0, norm):
            raise OrthogonalityError("输入不在 𝒩⊥ 中", hydro_norm=hydro_norm, norm=norm)

        if not self.is_full:
            return h / self.relaxation_rate

        sqrt_w = np.sqrt(self.grid.measure)
        y, info = cg(self._symmetric_matrix(), h * sqrt_w, rtol=self.cg_tol, maxiter=self.cg_maxiter)
        solution = self.grid.project_ortho(y / sqrt_w)

        defect = self.linearized_L(solution) - h
        residual = float(np.sqrt(self.grid.inner(defect, defect)))
        if info != 0 or residual > self.residual_tol * max(1.0, norm):
            raise SolverConvergenceError("Â/B̂ 迭代求解未收敛", residual=residual, info=int(info))
        return solution

    def hat_tensors(self) -> Tuple[np.ndarray, np.ndarray, float]:
        """(Â, B̂, 残差): Â 形状(N,3,3), B̂ 形状(N,3), 基于 ρ = θ = 1"""
        if self._hats is None:
            v = self.grid.nodes
            a_rows = self.grid.project_ortho(tensor_A(v).reshape(-1, 9).T)
            b_rows = self.grid.project_ortho(tensor_B(v).T)
            a_hat = self.solve_hat(a_rows)
            b_hat = self.solve_hat(b_rows)
            defect = np.vstack([self.linearized_L(a_hat) - a_rows, self.linearized_L(b_hat) - b_rows])
            residual = float(np.max(np.sqrt(self.grid.inner(defect, defect))))
            self._hats = (a_hat.T.reshape(-1, 3, 3), b_hat.T, residual)
        return self._hats

    def transport_coefficients(self) -> Tuple[float, float]:
        """μ = (1/10)⟨A:Â⟩, κ = (2/15)⟨B·B̂⟩"""
        a_hat, b_hat, residual = self.hat_tensors()
        v = self.grid.nodes
        mu = 0.1 * float(self.grid.mean(np.einsum("nij,nij->n", tensor_A(v), a_hat)))
        kappa = (2.0 / 15.0) * float(self.grid.mean(np.einsum("ni,ni->n", tensor_B(v), b_hat)))
        logger.debug("输运系数", mode=self.mode, mu=mu, kappa=kappa, residual=residual)
        return mu, kappa

    def local_quadrature(self, rho: float, theta: float) -> Tuple[float, float]:
        """单个 (ρ,θ) 处 μ = (1/10)∫A(V):Â(V)ℳ dv, κ = (2/15)∫B(V)·B̂(V)ℳ dv 的求积

        在 V = v/√θ 上求积, ℳ(ρ,0,θ)(√θV)θ^{3/2} 给出局部权重。𝓛_ℳ 在V变量下等于
        ν(ρ,θ)·𝓛, ν 为局部碰撞频率与参考频率之比: bgk弛豫率固定, ν = 1;
        Maxwell分子 ν = ∫ℳ₁dv₁ / ∫M₁dv₁。
        """
        a_hat, b_hat, _ = self.hat_tensors()
        v = self.grid.nodes
        local = evaluate(MaxwellianParams(rho=rho, theta=theta), math.sqrt(theta) * v) * theta**1.5
        weights = self.grid.weights * local
        frequency = float(weights.sum() / self.grid.measure.sum()) if self.is_full else 1.0

        mu = 0.1 * float(np.sum(weights * np.einsum("nij,nij->n", tensor_A(v), a_hat))) / frequency
        kappa = (2.0 / 15.0) * float(np.sum(weights * np.einsum("ni,ni->n", tensor_B(v), b_hat))) / frequency
        return mu, kappa

    def local_coefficients(self, rho: np.ndarray, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """局部 μ(ρ,θ), κ(ρ,θ), 由 (ρ,θ) 节点上的求积表插值

        bgk的𝓛_ℳ不依赖ρ, μ, κ 与ρ成正比; Maxwell分子的𝓛_ℳ与ρ成正比, μ, κ 为常数。
        """
        if self._coefficient_table is None:
            rho_axis, theta_axis = coefficient_axes()
            mu_values = np.empty((rho_axis.size, theta_axis.size))
            kappa_values = np.empty_like(mu_values)
            for i, rho_node in enumerate(rho_axis):
                for j, theta_node in enumerate(theta_axis):
                    mu_values[i, j], kappa_values[i, j] = self.local_quadrature(float(rho_node), float(theta_node))
            logger.debug("局部输运系数表已构建", mode=self.mode, nodes=mu_values.size)
            self._coefficient_table = (
                RegularGridInterpolator((rho_axis, theta_axis), mu_values, bounds_error=False, fill_value=None),
                RegularGridInterpolator((rho_axis, theta_axis), kappa_values, bounds_error=False, fill_value=None),
            )
        mu_table, kappa_table = self._coefficient_table
        points = np.stack(np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(theta, dtype=float)), axis=-1)
        return mu_table(points), kappa_table(points)


def coefficient_axes() -> Tuple[np.ndarray, np.ndarray]:
    """局部输运系数表的 (ρ, θ) 节点"""
    return np.linspace(0.25, 2.0, 8), np.linspace(0.25, 2.0, 8)


def _phi1(z: np.ndarray) -> np.ndarray:
    """φ₁(z) = (1 − e^{−z})/z"""
    z = np.asarray(z, dtype=float)
    safe = np.where(np.abs(z) > 1e-12, z, 1.0)
    return np.where(np.abs(z) > 1e-12, -np.expm1(-safe) / safe, 1.0 - 0.5 * z)


def _scatter(index: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    """按节点累加三元组上的值, 最后一维为三元组维"""
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=size)
    flat = values.reshape(-1, values.shape[-1])
    out = np.stack([np.bincount(index, weights=row, minlength=size) for row in flat])
    return out.reshape(values.shape[:-1] + (size,))
