"""周期网格上的谱微分与分辨率检查工具"""
from typing import Literal, Optional

import numpy as np

from ..core.config import config
from ..models.error import ResolutionError
from ..models.state import SpatialGrid
from .logger import get_logger

logger = get_logger(__name__)

DerivativeMode = Literal["spectral", "central"]


def _broadcast(multiplier: np.ndarray, ndim: int) -> np.ndarray:
    """把沿第一个轴的系数扩展到目标维数"""
    return multiplier.reshape((-1,) + (1,) * (ndim - 1))


def derivative(values: np.ndarray, spatial_grid: SpatialGrid, mode: DerivativeMode = "spectral",
               order: int = 1) -> np.ndarray:
    """沿x₁(第一个轴)求导

    Args:
        values: 形状为(C, ...)的周期场
        spatial_grid: 空间网格
        mode: spectral为Fourier谱微分, central为二阶中心差分
        order: 导数阶数, 1或2
    """
    values = np.asarray(values, dtype=float)
    if order not in (1, 2):
        raise ValueError(f"不支持的导数阶数: {order}")

    if mode == "central":
        dx = spatial_grid.dx
        forward = np.roll(values, -1, axis=0)
        backward = np.roll(values, 1, axis=0)
        if order == 1:
            return (forward - backward) / (2 * dx)
        return (forward - 2 * values + backward) / dx**2

    cells = values.shape[0]
    k = spatial_grid.wavenumbers
    multiplier = (1j * k) ** order
    if order % 2 == 1 and cells % 2 == 0:
        # 奇数阶导数去掉Nyquist模态
        multiplier[-1] = 0.0
    coeffs = np.fft.rfft(values, axis=0) * _broadcast(multiplier, values.ndim)
    return np.fft.irfft(coeffs, n=cells, axis=0)


def phase_shift(values: np.ndarray, displacement: np.ndarray, spatial_grid: SpatialGrid) -> np.ndarray:
    """精确平移 g(x) → g(x − a), 每一列使用各自的位移

    Args:
        values: 形状(C, N)
        displacement: 形状(N,), 每个速度节点的位移 a = v₁·dt/ε
    """
    cells = values.shape[0]
    k = spatial_grid.wavenumbers
    phase = np.exp(-1j * np.outer(k, displacement))
    if cells % 2 == 0:
        phase[-1] = np.cos(k[-1] * displacement)
    return np.fft.irfft(np.fft.rfft(values, axis=0) * phase, n=cells, axis=0)


def dealias(values: np.ndarray) -> np.ndarray:
    """2/3规则去混叠"""
    values = np.asarray(values, dtype=float)
    cells = values.shape[0]
    coeffs = np.fft.rfft(values, axis=0)
    index = np.arange(coeffs.shape[0])
    mask = index < (2.0 / 3.0) * (cells // 2)
    return np.fft.irfft(coeffs * _broadcast(mask.astype(float), values.ndim), n=cells, axis=0)


def spectral_tail_ratio(values: np.ndarray) -> float:
    """最高1/3波数段的能量占比"""
    values = np.asarray(values, dtype=float)
    coeffs = np.fft.rfft(values - values.mean(axis=0), axis=0)
    energy = np.abs(coeffs) ** 2
    energy = energy.reshape(energy.shape[0], -1).sum(axis=1)
    total = float(energy.sum())
    if total <= np.finfo(float).tiny:
        return 0.0
    cutoff = int(np.ceil((2.0 / 3.0) * (values.shape[0] // 2)))
    return float(energy[cutoff:].sum() / total)


def check_resolution(values: np.ndarray, name: str, tol: Optional[float] = None,
                     strict: Optional[bool] = None) -> float:
    """谱尾检查, 超限时记录警告或抛出ResolutionError

    Returns:
        谱尾能量比
    """
    tol = config.diagnostics.spectral_tail_tol if tol is None else tol
    strict = config.diagnostics.strict_resolution if strict is None else strict
    ratio = spectral_tail_ratio(values)
    if ratio > tol:
        if strict:
            raise ResolutionError(f"场 {name} 分辨率不足", field=name, tail_ratio=ratio, tol=tol)
        logger.warning("场的谱尾过大, 结果可能不可靠", field=name, tail_ratio=ratio, tol=tol)
    return ratio


def sup_norm(values: np.ndarray) -> float:
    values = np.asarray(values)
    return float(np.max(np.abs(values))) if values.size else 0.0
