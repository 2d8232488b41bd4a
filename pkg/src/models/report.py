"""
诊断报告与研究结果数据模型
熵预算时间序列、单个ε运行结果、整体研究汇总及其持久化
"""
import csv
import json
import time
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from pydantic import BaseModel, Field

from .error import DiagnosticSnapshot

CSV_SCHEMA_VERSION = 1

RESIDUAL_NAMES: List[str] = (
    [f"R_{i}" for i in range(1, 14)] + ["R_A", "R_B"] + [f"r_{i}" for i in range(1, 5)]
)


class RunStatus(str, Enum):
    """运行状态枚举"""
    PENDING = "pending"          # 等待执行
    RUNNING = "running"          # 正在执行
    COMPLETED = "completed"      # 已完成
    FAILED = "failed"            # 断言未通过
    ABORTED = "aborted"          # 求解中止


class EntropyReport(BaseModel):
    """单个观测时刻的熵预算"""
    time: float = Field(..., description="观测时刻")
    h_over_eps2: float = Field(..., description="H(f_ε|M_ε)/ε²")
    h_kinetic: float = Field(..., description="H(f|M_f)/ε²")
    h_fluid: float = Field(..., description="H(M_f|M_ε)/ε²")
    split_defect: float = Field(0.0, description="可加性残差 H − H_kinetic − H_fluid (已除以ε²)")
    quad_approx: float = Field(..., description="二次近似主项 ½∫[(ρ^b−ρ̃)² + (3/2)(θ^b−θ̃)² + |u^b−ũ|²]")
    dissipation_budget: float = Field(..., description="∫₀ᵗ∫(D/ε⁴ − ½μσ(u^b):σ(u^b) − (5/2)κ|∇θ^b|²)")
    flux_budget: float = Field(..., description="∫₀ᵗ∫(½μ|σ(ũ−u^b)|² + (5/2)κ|∇θ̃−∇θ^b|²)")
    dissipation_surrogate: bool = Field(False, description="D 是否为bgk替代量")
    residuals: Dict[str, float] = Field(default_factory=dict, description="各余项的L¹范数")
    flux_closure_defect: float = Field(0.0, description="通量展开的闭合残差(当前时刻)")
    avbv_closure: float = Field(0.0, description="⟨A,g⟩/ε 与 ⟨B,g⟩/ε 分解的闭合残差")
    closure_integral: float = Field(0.0, description="闭合残差的累积时间积分, 不计入Grönwall上界")
    convection_constant: float = Field(0.0, description="实测对流常数C")
    gronwall_majorant: float = Field(0.0, description="(h(0) + ΣR)·exp(C∫‖∇(ũ,θ̃)‖∞)")
    budget_slack: float = Field(0.0, description="Grönwall上界减去左端")
    dissipation_slack: Optional[float] = Field(None, description="耗散预算 − (R₁₁ + R₁₂ + 2R₁₃), 仅全碰撞模式")
    bgl_slack_min: Optional[float] = Field(None, description="BGL不等式松弛的最小值, 仅全碰撞模式")

    def csv_row(self) -> Dict[str, Any]:
        """展开为CSV一行"""
        row: Dict[str, Any] = {
            "time": self.time,
            "H_over_eps2": self.h_over_eps2,
            "H_kinetic": self.h_kinetic,
            "H_fluid": self.h_fluid,
            "split_defect": self.split_defect,
            "quad_approx": self.quad_approx,
            "dissipation_budget": self.dissipation_budget,
            "flux_budget": self.flux_budget,
            "dissipation_surrogate": int(self.dissipation_surrogate),
            "flux_closure_defect": self.flux_closure_defect,
            "avbv_closure": self.avbv_closure,
            "closure_integral": self.closure_integral,
            "convection_constant": self.convection_constant,
            "gronwall_majorant": self.gronwall_majorant,
            "budget_slack": self.budget_slack,
            "dissipation_slack": "" if self.dissipation_slack is None else self.dissipation_slack,
            "bgl_slack_min": "" if self.bgl_slack_min is None else self.bgl_slack_min,
        }
        for name in RESIDUAL_NAMES:
            value = self.residuals.get(name)
            row[name] = "" if value is None else value
        return row


CSV_COLUMNS: List[str] = list(
    EntropyReport(time=0.0, h_over_eps2=0.0, h_kinetic=0.0, h_fluid=0.0, quad_approx=0.0,
                  dissipation_budget=0.0, flux_budget=0.0).csv_row().keys()
)


def write_report_csv(reports: Sequence[EntropyReport], file_path: Union[str, Path]) -> Path:
    """按固定列顺序写出时间序列, 首行为schema版本"""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# schema_version={CSV_SCHEMA_VERSION}\n")
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v)
                             for k, v in report.csv_row().items()})
    return file_path


def read_report_csv(file_path: Union[str, Path]) -> List[Dict[str, str]]:
    """读取时间序列, 跳过schema注释行"""
    with open(file_path, "r", encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


class AssertionOutcome(BaseModel):
    """单条数值断言的结果"""
    name: str = Field(..., description="断言名称")
    passed: bool = Field(..., description="是否通过")
    value: Optional[float] = Field(None, description="实测值")
    threshold: Optional[float] = Field(None, description="阈值")
    detail: Optional[str] = Field(None, description="说明")


class SlopeFit(BaseModel):
    """log–log最小二乘拟合"""
    quantity: str = Field(..., description="被拟合的量")
    slope: Optional[float] = Field(None, description="斜率")
    intercept: Optional[float] = Field(None, description="截距")
    r2: Optional[float] = Field(None, description="决定系数")
    floor: bool = Field(False, description="存在非正值, 低于求积精度下限而未拟合")


class EpsilonRunResult(BaseModel):
    """单个ε的运行结果"""
    epsilon: float = Field(..., description="Knudsen数")
    status: RunStatus = Field(RunStatus.PENDING, description="运行状态")
    start_time: datetime = Field(default_factory=datetime.now, description="开始时间")
    end_time: Optional[datetime] = Field(None, description="结束时间")
    duration: Optional[float] = Field(None, description="运行时长(秒)")

    reports: List[EntropyReport] = Field(default_factory=list, description="熵预算时间序列")
    assertions: List[AssertionOutcome] = Field(default_factory=list, description="断言结果")
    csv_path: Optional[str] = Field(None, description="时间序列CSV路径")

    error_message: Optional[str] = Field(None, description="错误消息")
    error_type: Optional[str] = Field(None, description="错误类型")
    abort_time: Optional[float] = Field(None, description="求解中止时刻")
    snapshot: Optional[DiagnosticSnapshot] = Field(None, description="中止时的诊断快照")
    metadata: Dict[str, Any] = Field(default_factory=dict, description="额外元数据")

    @property
    def sup_h_over_eps2(self) -> Optional[float]:
        if not self.reports:
            return None
        return max(report.h_over_eps2 for report in self.reports)

    @property
    def passed(self) -> bool:
        return self.status == RunStatus.COMPLETED and all(a.passed for a in self.assertions)

    def model_dump(self, **kwargs) -> Dict[str, Any]:
        """包含计算属性"""
        data = super().model_dump(**kwargs)
        data["sup_h_over_eps2"] = self.sup_h_over_eps2
        data["passed"] = self.passed
        return data

    def _finish(self, status: RunStatus) -> None:
        self.status = status
        self.end_time = datetime.now()
        self.duration = (self.end_time - self.start_time).total_seconds()

    def mark_completed(self) -> None:
        """根据断言结果确定状态"""
        self._finish(RunStatus.COMPLETED if all(a.passed for a in self.assertions) else RunStatus.FAILED)

    def mark_aborted(self, error_message: str, error_type: str, abort_time: Optional[float] = None,
                     snapshot: Optional[DiagnosticSnapshot] = None) -> None:
        self.error_message = error_message
        self.error_type = error_type
        self.abort_time = abort_time
        self.snapshot = snapshot
        self._finish(RunStatus.ABORTED)


class StudyResult(BaseModel):
    """一次ε扫描研究的汇总"""
    study_id: str = Field(..., description="研究ID")
    scenario: str = Field(..., description="场景名称")
    status: RunStatus = Field(RunStatus.PENDING, description="总体状态")
    start_time: datetime = Field(default_factory=datetime.now, description="开始时间")
    end_time: Optional[datetime] = Field(None, description="结束时间")
    duration: Optional[float] = Field(None, description="总时长(秒)")

    seed: int = Field(0, description="随机种子")
    epsilon_list: List[float] = Field(default_factory=list, description="ε序列")
    runs: List[EpsilonRunResult] = Field(default_factory=list, description="各ε运行结果")
    slopes: List[SlopeFit] = Field(default_factory=list, description="log–log斜率")
    assertions: List[AssertionOutcome] = Field(default_factory=list, description="研究级断言")
    config: Dict[str, Any] = Field(default_factory=dict, description="运行配置")

    @property
    def aborted(self) -> bool:
        return any(run.status == RunStatus.ABORTED for run in self.runs)

    @property
    def passed(self) -> bool:
        return (not self.aborted and all(run.passed for run in self.runs)
                and all(a.passed for a in self.assertions))

    @property
    def exit_code(self) -> int:
        """0 通过, 1 断言失败, 3 求解中止"""
        if self.aborted:
            return 3
        return 0 if self.passed else 1

    def model_dump(self, **kwargs) -> Dict[str, Any]:
        """包含计算属性, 时间序列只保留在CSV中"""
        data = super().model_dump(**kwargs)
        for run in data.get("runs", []):
            run.pop("reports", None)
        data["passed"] = self.passed
        data["exit_code"] = self.exit_code
        return data

    def slope_of(self, quantity: str) -> Optional[SlopeFit]:
        for fit in self.slopes:
            if fit.quantity == quantity:
                return fit
        return None

    def mark_completed(self) -> None:
        self.end_time = datetime.now()
        self.duration = (self.end_time - self.start_time).total_seconds()
        if self.aborted:
            self.status = RunStatus.ABORTED
        else:
            self.status = RunStatus.COMPLETED if self.passed else RunStatus.FAILED

    def save_to_file(self, file_path: Union[str, Path]) -> None:
        """保存研究汇总"""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        data = self.model_dump(mode="json")
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=2, default=str)

    @classmethod
    def load_from_file(cls, file_path: Union[str, Path]) -> Optional[Dict[str, Any]]:
        """读取研究汇总JSON, 文件缺失或损坏时返回None"""
        file_path = Path(file_path)
        if not file_path.exists():
            return None
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                return json.load(f)
        except Exception:
            return None


def save_run_result(result: EpsilonRunResult, file_path: Union[str, Path]) -> None:
    """单个ε的运行结果JSON, 不含时间序列"""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    data = result.model_dump(mode="json", exclude={"reports"})
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, ensure_ascii=False, indent=2, default=str)


class StudyHistory:
    """输出目录下的历史研究汇总"""

    SUMMARY_NAME = "study.json"

    def __init__(self, history_dir: Union[str, Path] = "./runs/"):
        self.history_dir = Path(history_dir)

    def study_dir(self, study: StudyResult) -> Path:
        timestamp = study.start_time.strftime("%Y%m%d_%H%M%S")
        return self.history_dir / f"{study.scenario}_{study.study_id}_{timestamp}"

    def save_study(self, study: StudyResult) -> Path:
        """写出研究汇总, 返回文件路径"""
        file_path = self.study_dir(study) / self.SUMMARY_NAME
        study.save_to_file(file_path)
        return file_path

    def get_study_history(self, scenario: Optional[str] = None, limit: int = 50) -> List[Dict[str, Any]]:
        """按开始时间倒序列出历史研究"""
        entries = []
        if not self.history_dir.exists():
            return entries

        for file_path in self.history_dir.glob(f"*/{self.SUMMARY_NAME}"):
            data = StudyResult.load_from_file(file_path)
            if data is None:
                continue
            if scenario and data.get("scenario") != scenario:
                continue
            entries.append({
                "file_path": str(file_path),
                "study_id": data.get("study_id"),
                "scenario": data.get("scenario"),
                "status": data.get("status"),
                "start_time": data.get("start_time"),
                "duration": data.get("duration"),
                "epsilon_list": data.get("epsilon_list", []),
                "exit_code": data.get("exit_code"),
            })

        entries.sort(key=lambda x: x["start_time"] or "", reverse=True)
        return entries[:limit]

    def get_study_detail(self, study_id: str) -> Optional[Dict[str, Any]]:
        for file_path in self.history_dir.glob(f"*_{study_id}_*/{self.SUMMARY_NAME}"):
            return StudyResult.load_from_file(file_path)
        return None

    def cleanup_old_records(self, days: int = 30) -> int:
        """删除超过期限的研究汇总, 返回删除数量"""
        cutoff_time = time.time() - days * 24 * 60 * 60
        removed = 0
        for file_path in self.history_dir.glob(f"*/{self.SUMMARY_NAME}"):
            if file_path.stat().st_mtime < cutoff_time:
                try:
                    file_path.unlink()
                    removed += 1
                except OSError:
                    pass
        return removed
