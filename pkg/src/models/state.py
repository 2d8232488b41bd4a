"""
状态数据模型定义
Maxwell参数、周期空间网格、动理学与流体状态快照
"""

import math
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from .error import DimensionError, PositivityError


def _frozen_array(value, ndim: Optional[int] = None, name: str = "array") -> np.ndarray:
    """复制为只读float数组"""
    arr = np.array(value, dtype=float, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name} 维数应为 {ndim}, 实际为 {arr.ndim}", shape=list(arr.shape))
    arr.setflags(write=False)
    return arr


class MaxwellianParams(BaseModel):
    """局部Maxwell分布的参数(ρ, u, θ)"""
    rho: float = Field(..., gt=0, description="数密度")
    u: tuple[float, float, float] = Field(default=(0.0, 0.0, 0.0), description="宏观速度")
    theta: float = Field(..., gt=0, description="温度")

    class Config:
        frozen = True

    @property
    def velocity(self) -> np.ndarray:
        return np.asarray(self.u, dtype=float)

    @classmethod
    def absolute(cls) -> "MaxwellianParams":
        """全局Maxwell分布 M = ℳ(1, 0, 1)"""
        return cls(rho=1.0, u=(0.0, 0.0, 0.0), theta=1.0)


class MaxwellianField(BaseModel):
    """逐空间单元的Maxwell参数场"""
    rho: np.ndarray = Field(..., description="密度场, 形状(C,)")
    u: np.ndarray = Field(..., description="速度场, 形状(C, 3)")
    theta: np.ndarray = Field(..., description="温度场, 形状(C,)")

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("rho", "theta", mode="before")
    @classmethod
    def _scalar_field(cls, value):
        return _frozen_array(value, ndim=1, name="scalar field")

    @field_validator("u", mode="before")
    @classmethod
    def _vector_field(cls, value):
        return _frozen_array(value, ndim=2, name="vector field")

    @model_validator(mode="after")
    def _check_positive(self) -> "MaxwellianField":
        if self.u.shape != (self.rho.shape[0], 3) or self.theta.shape != self.rho.shape:
            raise DimensionError("Maxwell参数场形状不一致",
                                 rho=list(self.rho.shape), u=list(self.u.shape),
                                 theta=list(self.theta.shape))
        if np.any(self.rho <= 0) or np.any(self.theta <= 0):
            raise PositivityError("Maxwell参数场中存在非正的密度或温度",
                                  rho_min=float(self.rho.min()), theta_min=float(self.theta.min()))
        return self

    @property
    def cells(self) -> int:
        return int(self.rho.shape[0])

    def cell(self, index: int) -> MaxwellianParams:
        """取出单个单元的参数"""
        return MaxwellianParams(rho=float(self.rho[index]), u=tuple(float(c) for c in self.u[index]),
                                theta=float(self.theta[index]))

    @classmethod
    def uniform(cls, params: MaxwellianParams, cells: int) -> "MaxwellianField":
        """常数参数场"""
        return cls(rho=np.full(cells, params.rho), u=np.tile(params.velocity, (cells, 1)),
                   theta=np.full(cells, params.theta))


class SpatialGrid(BaseModel):
    """x₁方向的周期一维网格, 默认长度2π"""
    cells: int = Field(..., ge=4, description="单元数")
    length: float = Field(default=2 * math.pi, gt=0, description="周期长度")

    class Config:
        frozen = True

    @property
    def dx(self) -> float:
        return self.length / self.cells

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.cells) * self.dx

    @property
    def wavenumbers(self) -> np.ndarray:
        """rfft波数"""
        return 2 * math.pi * np.fft.rfftfreq(self.cells, d=self.dx)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """沿第一个轴做周期梯形积分(谱精度)"""
        return np.sum(values, axis=0) * self.dx


class KineticState(BaseModel):
    """扰动g_ε(x, v)的快照, f = M(1 + εg)"""
    g: np.ndarray = Field(..., description="扰动场, 形状(C, N)")
    epsilon: float = Field(..., gt=0, lt=1, description="Knudsen数")
    time: float = Field(default=0.0, description="物理时间")
    spatial_grid: SpatialGrid = Field(..., description="周期空间网格")

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("g", mode="before")
    @classmethod
    def _freeze(cls, value):
        return _frozen_array(value, ndim=2, name="g")

    @model_validator(mode="after")
    def _check_cells(self) -> "KineticState":
        if self.g.shape[0] != self.spatial_grid.cells:
            raise DimensionError("g 的空间维与网格单元数不一致",
                                 g_cells=self.g.shape[0], cells=self.spatial_grid.cells)
        return self

    def evolve(self, g: np.ndarray, time: float) -> "KineticState":
        """返回推进后的新快照"""
        return KineticState(g=g, epsilon=self.epsilon, time=time, spatial_grid=self.spatial_grid)


class FluidState(BaseModel):
    """(CNS_ε)涨落(ρ̃, ũ, θ̃)的快照, (ρ, u, θ) = (1+ερ̃, εũ, 1+εθ̃)"""
    rho_t: np.ndarray = Field(..., description="密度涨落, 形状(C,)")
    u_t: np.ndarray = Field(..., description="速度涨落, 形状(C, 3)")
    theta_t: np.ndarray = Field(..., description="温度涨落, 形状(C,)")
    epsilon: float = Field(..., gt=0, lt=1, description="Mach数 = Knudsen数")
    time: float = Field(default=0.0, description="物理时间")
    spatial_grid: SpatialGrid = Field(..., description="周期空间网格")

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("rho_t", "theta_t", mode="before")
    @classmethod
    def _scalar(cls, value):
        return _frozen_array(value, ndim=1, name="scalar fluctuation")

    @field_validator("u_t", mode="before")
    @classmethod
    def _vector(cls, value):
        return _frozen_array(value, ndim=2, name="velocity fluctuation")

    @model_validator(mode="after")
    def _check_state(self) -> "FluidState":
        cells = self.spatial_grid.cells
        if self.rho_t.shape != (cells,) or self.theta_t.shape != (cells,) or self.u_t.shape != (cells, 3):
            raise DimensionError("流体涨落场与网格不匹配", cells=cells)
        if np.any(self.rho <= 0) or np.any(self.theta <= 0):
            raise PositivityError("流体密度或温度失去正性", time=self.time, epsilon=self.epsilon,
                                  rho_min=float(self.rho.min()), theta_min=float(self.theta.min()))
        return self

    @property
    def rho(self) -> np.ndarray:
        return 1.0 + self.epsilon * self.rho_t

    @property
    def u(self) -> np.ndarray:
        return self.epsilon * self.u_t

    @property
    def theta(self) -> np.ndarray:
        return 1.0 + self.epsilon * self.theta_t

    def maxwellian_field(self) -> MaxwellianField:
        """M_ε = ℳ(1+ερ̃, εũ, 1+εθ̃) 的参数场"""
        return MaxwellianField(rho=self.rho, u=self.u, theta=self.theta)

    def evolve(self, rho_t: np.ndarray, u_t: np.ndarray, theta_t: np.ndarray, time: float) -> "FluidState":
        """返回推进后的新快照"""
        return FluidState(rho_t=rho_t, u_t=u_t, theta_t=theta_t, epsilon=self.epsilon,
                          time=time, spatial_grid=self.spatial_grid)

    @classmethod
    def zeros(cls, spatial_grid: SpatialGrid, epsilon: float) -> "FluidState":
        cells = spatial_grid.cells
        return cls(rho_t=np.zeros(cells), u_t=np.zeros((cells, 3)), theta_t=np.zeros(cells),
                   epsilon=epsilon, spatial_grid=spatial_grid)


class Trajectory(BaseModel):
    """按观测时刻排列的状态快照序列"""
    kind: str = Field(..., description="kinetic 或 fluid")
    states: List[Union[KineticState, FluidState]] = Field(default_factory=list, description="快照")

    class Config:
        arbitrary_types_allowed = True

    @property
    def times(self) -> List[float]:
        return [state.time for state in self.states]

    @property
    def initial(self) -> Union[KineticState, FluidState]:
        return self.states[0]

    @property
    def final(self) -> Union[KineticState, FluidState]:
        return self.states[-1]

    def append(self, state: Union[KineticState, FluidState]) -> None:
        self.states.append(state)

    def __len__(self) -> int:
        return len(self.states)


def observation_times(t_end: float, cadence: float) -> List[float]:
    """从0到t_end(含)按固定间隔的观测时刻"""
    if t_end <= 0:
        return [0.0]
    count = int(math.ceil(t_end / cadence - 1e-9))
    return [min(i * cadence, t_end) for i in range(count)] + [t_end]
