"""测试共用夹具"""
import numpy as np
import pytest

from src.core.collision import CollisionKernel
from src.core.velocity_grid import build_grid
from src.models.state import FluidState, SpatialGrid


@pytest.fixture(scope="session")
def gh_grid():
    """8³ Gauss–Hermite速度网格"""
    return build_grid(points_per_axis=8, rule="gauss_hermite", sphere_polar=2, sphere_azimuth=4)


@pytest.fixture(scope="session")
def fine_grid():
    """12³ Gauss–Hermite速度网格, 用于连续矩的比较"""
    return build_grid(points_per_axis=12, rule="gauss_hermite", sphere_polar=2, sphere_azimuth=4)


@pytest.fixture(scope="session")
def bgk_kernel(gh_grid):
    return CollisionKernel(gh_grid, mode="bgk", relaxation_rate=1.0)


@pytest.fixture(scope="session")
def full_grid():
    """6³ 网格 + 立方体对角线球面规则, 全碰撞核的最小配置"""
    return build_grid(points_per_axis=6, rule="gauss_hermite", sphere_polar=2, sphere_azimuth=4)


@pytest.fixture(scope="session")
def full_kernel(full_grid):
    return CollisionKernel(full_grid, mode="maxwell_molecules", b_const=1.0,
                           stencil_cache_limit=100_000_000)


@pytest.fixture
def spatial_grid():
    return SpatialGrid(cells=16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_fluid(spatial_grid: SpatialGrid, epsilon: float, amplitude: float = 0.1) -> FluidState:
    """满足 ∇·ũ = 0 与 ρ̃ + θ̃ = 0 的光滑流体场"""
    x = spatial_grid.x
    theta = amplitude * np.cos(x)
    u = np.zeros((spatial_grid.cells, 3))
    u[:, 1] = amplitude * np.sin(x)
    u[:, 2] = 0.5 * amplitude * np.cos(2 * x)
    return FluidState(rho_t=-theta, u_t=u, theta_t=theta, epsilon=epsilon, spatial_grid=spatial_grid)


def random_smooth_field(spatial_grid: SpatialGrid, rng: np.random.Generator, modes: int = 3,
                        amplitude: float = 0.1) -> np.ndarray:
    """少数低波数Fourier模态叠加的周期场"""
    x = spatial_grid.x
    values = np.zeros_like(x)
    for k in range(1, modes + 1):
        a, b = rng.normal(size=2)
        values += amplitude * (a * np.cos(k * x) + b * np.sin(k * x)) / k**2
    return values


@pytest.fixture
def fluid_factory():
    return smooth_fluid


@pytest.fixture
def field_factory():
    return random_smooth_field
