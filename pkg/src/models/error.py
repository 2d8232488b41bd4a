"""
错误数据模型定义
用于数值求解与诊断过程中的错误分类、上报和快照
"""

from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class ErrorType(str, Enum):
    """错误类型枚举"""
    CONFIGURATION = "configuration"
    DIMENSION = "dimension"
    POSITIVITY = "positivity"
    DEGENERATE_MOMENT = "degenerate_moment"
    CFL_VIOLATION = "cfl_violation"
    SOLVER_CONVERGENCE = "solver_convergence"
    ORTHOGONALITY = "orthogonality"
    INCOMPRESSIBILITY = "incompressibility"
    RESOLUTION = "resolution"
    TRAJECTORY_MISALIGNMENT = "trajectory_misalignment"
    SOLVER_ABORT = "solver_abort"
    RATE_FLOOR = "rate_floor"
    UNKNOWN = "unknown"


class ErrorSeverity(str, Enum):
    """错误严重程度"""
    LOW = "low"           # 仅记录
    MEDIUM = "medium"     # 当前ε运行失败
    HIGH = "high"         # 整个研究失败
    CRITICAL = "critical" # 配置错误, 不产生任何输出


class DiagnosticSnapshot(BaseModel):
    """求解中止时的诊断快照"""
    timestamp: datetime = Field(default_factory=datetime.now, description="快照生成时间")
    time: float = Field(..., description="物理时间")
    epsilon: float = Field(..., description="Knudsen数ε")
    min_density: float = Field(..., description="重构分布f的最小值")
    cell_index: int = Field(..., description="最小值所在空间单元")
    node_index: int = Field(..., description="最小值所在速度节点")
    velocity: List[float] = Field(default_factory=list, description="最小值所在速度")
    totals: Dict[str, float] = Field(default_factory=dict, description="全局守恒量")
    note: Optional[str] = Field(None, description="附加说明")

    class Config:
        use_enum_values = True


class LabError(Exception):
    """实验室所有错误的基类"""

    error_type: ErrorType = ErrorType.UNKNOWN
    severity: ErrorSeverity = ErrorSeverity.MEDIUM

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        """转换为可序列化的字典"""
        return {
            "error_type": self.error_type.value,
            "severity": self.severity.value,
            "message": self.message,
            "context": {k: v for k, v in self.context.items() if not isinstance(v, BaseModel)},
        }


class ConfigurationError(LabError):
    """配置错误"""
    error_type = ErrorType.CONFIGURATION
    severity = ErrorSeverity.CRITICAL


class DimensionError(LabError):
    """数组形状与网格不匹配"""
    error_type = ErrorType.DIMENSION


class PositivityError(LabError):
    """分布函数或物理量失去正性"""
    error_type = ErrorType.POSITIVITY

    def __init__(self, message: str, snapshot: Optional[DiagnosticSnapshot] = None, **context: Any):
        super().__init__(message, **context)
        self.snapshot = snapshot


class DegenerateMomentError(LabError):
    """矩反演得到非正温度"""
    error_type = ErrorType.DEGENERATE_MOMENT


class CFLViolationError(LabError):
    """时间步长违反输运CFL条件"""
    error_type = ErrorType.CFL_VIOLATION


class SolverConvergenceError(LabError):
    """迭代求解未收敛"""
    error_type = ErrorType.SOLVER_CONVERGENCE

    def __init__(self, message: str, residual: float, **context: Any):
        super().__init__(message, residual=residual, **context)
        self.residual = residual


class OrthogonalityError(LabError):
    """输入不在 𝒩⊥ 中"""
    error_type = ErrorType.ORTHOGONALITY


class IncompressibilityError(LabError):
    """速度场不满足 ∇·u = 0"""
    error_type = ErrorType.INCOMPRESSIBILITY


class ResolutionError(LabError):
    """场的谱尾过大, 分辨率不足"""
    error_type = ErrorType.RESOLUTION
    severity = ErrorSeverity.LOW


class TrajectoryMisalignmentError(LabError):
    """动理学与流体轨迹的观测时间不一致"""
    error_type = ErrorType.TRAJECTORY_MISALIGNMENT

    def __init__(self, message: str, timestamps: List[float], **context: Any):
        super().__init__(message, timestamps=timestamps, **context)
        self.timestamps = timestamps


class SolverAbort(LabError):
    """时间推进中止, 附带失败时刻"""
    error_type = ErrorType.SOLVER_ABORT

    def __init__(self, message: str, time: float, cause: Optional[LabError] = None, **context: Any):
        super().__init__(message, time=time, **context)
        self.time = time
        self.cause = cause

    @property
    def snapshot(self) -> Optional[DiagnosticSnapshot]:
        """底层正性错误携带的快照"""
        return getattr(self.cause, "snapshot", None)


class RateFloorError(LabError):
    """拟合数据含非正值, 该量已低于求积精度下限"""
    error_type = ErrorType.RATE_FLOOR
    severity = ErrorSeverity.LOW
