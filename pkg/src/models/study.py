"""
ε扫描研究的运行配置
对应 studies/*.yml, 由pydantic校验, 校验失败统一转换为 ConfigurationError
"""

from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .error import ConfigurationError


class Scenario(str, Enum):
    """初值场景"""
    WELL_PREPARED = "well_prepared"
    ILL_PREPARED = "ill_prepared"
    HOMOGENEOUS_RELAXATION = "homogeneous_relaxation"
    ACOUSTIC_MODE = "acoustic_mode"


class GridSizes(BaseModel):
    """空间与速度网格尺寸"""
    cells: int = Field(32, ge=4, description="空间单元数")
    points_per_axis: int = Field(8, ge=4, description="每轴速度节点数")
    rule: Literal["gauss_hermite", "uniform_trapezoid"] = Field("gauss_hermite", description="速度求积规则")
    sphere_polar: int = Field(6, ge=2, description="单位球面极角节点数")
    sphere_azimuth: int = Field(12, ge=4, description="单位球面方位角节点数")


class KernelSettings(BaseModel):
    """碰撞核模式与参数"""
    mode: Literal["bgk", "maxwell_molecules"] = Field("bgk", description="碰撞核模式")
    relaxation_rate: float = Field(1.0, gt=0, description="BGK弛豫率")
    b_const: float = Field(1.0, gt=0, description="Maxwell分子截面常数")


class RunConfig(BaseModel):
    """一次ε扫描研究的配置"""
    name: str = Field("study", description="研究名称")
    scenario: Scenario = Field(..., description="初值场景")
    epsilon_list: List[float] = Field(..., description="ε序列, 严格递减, 每项在(0,1)内")
    grid: GridSizes = Field(default_factory=GridSizes, description="网格尺寸")
    kernel: KernelSettings = Field(default_factory=KernelSettings, description="碰撞核")

    t_end: float = Field(1.0, ge=0, description="终止时刻")
    observer_cadence: float = Field(0.1, gt=0, description="观测间隔")
    amplitude: float = Field(0.1, gt=0, description="初始扰动幅度")
    wavenumber: int = Field(1, ge=1, description="初始扰动波数")
    energy_form: Literal["cns_eps", "cns"] = Field("cns_eps", description="CNS能量方程形式")
    transport: Literal["spectral", "upwind"] = Field("spectral", description="动理学输运格式")

    output_dir: Optional[str] = Field(None, description="输出目录, 为空时取全局配置")
    seed: int = Field(0, description="随机种子")
    parallel: Optional[int] = Field(None, ge=1, description="并行ε任务数, 为空时取全局配置")
    slope_band: Optional[Tuple[float, float]] = Field(None, description="收敛斜率区间, 为空时取全局配置")
    compare_insf: bool = Field(True, description="是否与不可压NSF极限比较")

    class Config:
        use_enum_values = True

    @field_validator("epsilon_list")
    @classmethod
    def _check_epsilons(cls, values: List[float]) -> List[float]:
        if not values:
            raise ValueError("epsilon_list 不能为空")
        for eps in values:
            if not 0.0 < eps < 1.0:
                raise ValueError(f"ε={eps} 不在(0,1)内")
        for prev, nxt in zip(values[:-1], values[1:]):
            if nxt >= prev:
                raise ValueError("epsilon_list 必须严格递减")
        return values

    @model_validator(mode="after")
    def _check_cadence(self) -> "RunConfig":
        if self.t_end > 0 and self.observer_cadence > self.t_end:
            raise ValueError("观测间隔不能超过终止时刻")
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """从字典构建

        Raises:
            ConfigurationError: 字段缺失或取值非法
        """
        try:
            return cls(**data)
        except ValidationError as e:
            issues = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
            raise ConfigurationError("运行配置校验失败", issues=issues) from e

    @classmethod
    def load_from_file(cls, file_path: Union[str, Path]) -> "RunConfig":
        """读取YAML运行配置

        Raises:
            ConfigurationError: 文件不存在、不是映射或校验失败
        """
        file_path = Path(file_path)
        if not file_path.exists():
            raise ConfigurationError(f"配置文件不存在: {file_path}", path=str(file_path))
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"配置文件解析失败: {e}", path=str(file_path)) from e
        if not isinstance(data, dict):
            raise ConfigurationError("配置文件顶层必须是键值映射", path=str(file_path))
        return cls.from_dict(data)

    def with_overrides(self, output_dir: Optional[str] = None, seed: Optional[int] = None,
                       parallel: Optional[int] = None) -> "RunConfig":
        """命令行参数覆盖文件中的值"""
        data = self.model_dump()
        if output_dir is not None:
            data["output_dir"] = output_dir
        if seed is not None:
            data["seed"] = seed
        if parallel is not None:
            data["parallel"] = parallel
        return self.from_dict(data)
