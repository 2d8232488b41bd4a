"""配置管理模块"""
import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional

import yaml
from pydantic import BaseModel, Field

# 尝试加载python-dotenv
try:
    from dotenv import load_dotenv
    load_dotenv()  # 自动加载.env文件
except ImportError:
    pass  # 如果没有安装python-dotenv，继续使用环境变量


class AppConfig(BaseModel):
    """应用基础配置"""
    name: str = "kinetic-fluid-lab"
    version: str = "1.0.0"
    debug: bool = False
    output_dir: str = "./runs/"


class GridConfig(BaseModel):
    """速度网格配置"""
    rule: Literal["gauss_hermite", "uniform_trapezoid"] = "gauss_hermite"
    points_per_axis: int = Field(default=8, description="每个坐标轴上的速度节点数")
    truncation_radius: float = Field(default=6.0, description="均匀网格的速度截断半宽")
    sphere_polar: int = Field(default=6, description="单位球面极角节点数(偶数)")
    sphere_azimuth: int = Field(default=12, description="单位球面方位角节点数(偶数)")
    tol_norm: Optional[float] = Field(default=None, description="归一化容差, 为空时按规则取默认值")


class KernelConfig(BaseModel):
    """碰撞核配置"""
    mode: Literal["bgk", "maxwell_molecules"] = "bgk"
    b_const: float = Field(default=1.0, description="Maxwell分子截面常数")
    relaxation_rate: float = Field(default=1.0, description="BGK弛豫率")
    chunk_pairs: int = Field(default=4096, description="碰撞求积每块处理的速度对数")
    stencil_cache_limit: int = Field(default=20_000_000, description="插值模板缓存的非零元上限")
    cg_tol: float = Field(default=1e-12, description="Â/B̂迭代求解相对容差")
    cg_maxiter: int = Field(default=10_000, description="Â/B̂迭代求解最大迭代次数")
    residual_tol: float = Field(default=1e-8, description="Â/B̂求解残差上限")


class SolverConfig(BaseModel):
    """时间推进配置"""
    cfl: float = Field(default=0.5, description="输运CFL系数")
    transport: Literal["spectral", "upwind"] = "spectral"
    derivative: Literal["spectral", "central"] = "spectral"
    energy_form: Literal["cns_eps", "cns"] = "cns_eps"
    insf_divergence_tol: float = Field(default=1e-10, description="不可压条件容差")
    dealias: bool = Field(default=False, description="是否对流体场应用2/3去混叠")


class DiagnosticsConfig(BaseModel):
    """熵诊断配置"""
    spectral_tail_tol: float = Field(default=1e-6, description="谱尾能量比阈值")
    strict_resolution: bool = Field(default=False, description="谱尾超限时是否直接报错")
    slope_band: tuple[float, float] = Field(default=(0.7, 1.3), description="收敛斜率允许区间")
    asymptotic_ratio: float = Field(default=1.7, description="ε减半时残差下降比下限")
    budget_slack_tol: float = Field(default=1e-6, description="熵预算不等式松弛容差")
    identity_tol: float = Field(default=1e-8, description="精确恒等式闭合容差")
    initial_entropy_tol: float = Field(default=1e-10, description="良态初值的初始相对熵上限")


class StudyConfig(BaseModel):
    """ε扫描研究配置"""
    parallel: int = Field(default=2, description="并行ε任务数")
    history_dir: str = "./runs/"


class LoggingConfig(BaseModel):
    """日志配置"""
    level: str = "INFO"
    format: str = "structured"
    file: str = "./logs/kinetic-fluid-lab.log"
    rotation: str = "daily"


class Config(BaseModel):
    """主配置类"""
    app: AppConfig = Field(default_factory=AppConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    diagnostics: DiagnosticsConfig = Field(default_factory=DiagnosticsConfig)
    study: StudyConfig = Field(default_factory=StudyConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @classmethod
    def load_from_file(cls, config_path: str = "config.yml") -> "Config":
        """从文件加载配置"""
        config_file = Path(config_path)
        if not config_file.exists():
            # 如果配置文件不存在，返回默认配置
            return cls()

        with open(config_file, "r", encoding="utf-8") as f:
            config_data = yaml.safe_load(f) or {}

        return cls(**config_data)

    @classmethod
    def load_from_env(cls, config_path: Optional[str] = None) -> "Config":
        """从配置文件和环境变量加载配置

        环境变量优先于文件中的值, 变量名形如 KFL_LOG_LEVEL。
        """
        config = cls.load_from_file(config_path or os.getenv("KFL_CONFIG", "config.yml"))

        overrides: Dict[str, Any] = {
            "KFL_DEBUG": ("app", "debug", lambda v: v.lower() in ("1", "true", "yes")),
            "KFL_OUTPUT_DIR": ("app", "output_dir", str),
            "KFL_LOG_LEVEL": ("logging", "level", str),
            "KFL_LOG_FILE": ("logging", "file", str),
            "KFL_KERNEL_MODE": ("kernel", "mode", str),
            "KFL_PARALLEL": ("study", "parallel", int),
        }
        for env_name, (section, key, cast) in overrides.items():
            raw = os.getenv(env_name)
            if raw is None:
                continue
            setattr(getattr(config, section), key, cast(raw))

        return config


# 全局配置实例
config = Config.load_from_env()
