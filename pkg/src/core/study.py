"""
ε扫描研究
按场景构造初值, 对每个ε配对推进动理学与流体方程, 组装熵预算并写出CSV/JSON,
最后在log–log坐标下拟合收敛斜率并评估断言。
"""

import asyncio
import math
import uuid
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from ..models.error import DimensionError, LabError, RateFloorError, SolverAbort
from ..models.report import (AssertionOutcome, EntropyReport, EpsilonRunResult, RunStatus, SlopeFit,
                             StudyHistory, StudyResult, save_run_result, write_report_csv)
from ..models.state import FluidState, KineticState, SpatialGrid
from ..models.study import RunConfig, Scenario
from ..utils.logger import bind_run_context, clear_run_context, get_logger
from .boltzmann_solver import BoltzmannSolver, homogeneous_initial, well_prepared_initial
from .cns_solver import CNSSolver, acoustic_initial, insf_initial, insf_run
from .collision import CollisionKernel
from .config import config
from .entropy_diagnostics import theorem_budget
from .velocity_grid import VelocityGrid, build_grid

logger = get_logger(__name__)

REPORT_FILE = "entropy_report.csv"
RUN_FILE = "run.json"
SNAPSHOT_FILE = "snapshot.json"

# 随ε收敛的余项, R₁₁ 仅在全碰撞模式下出现
RATE_RESIDUALS = [f"R_{i}" for i in range(1, 14)]


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def fit_rate(pairs: Sequence[Tuple[float, float]]) -> RateFit:
    """log(value) 对 log(ε) 的最小二乘拟合

    Raises:
        DimensionError: 不同的ε少于两个
        RateFloorError: 存在非正值
    """
    if len(pairs) < 2:
        raise DimensionError("拟合至少需要两个点", count=len(pairs))
    eps = np.array([p[0] for p in pairs], dtype=float)
    values = np.array([p[1] for p in pairs], dtype=float)
    if np.unique(eps).size < 2:
        raise DimensionError("拟合需要至少两个不同的ε", epsilons=eps.tolist())
    if np.any(eps <= 0) or np.any(values <= 0):
        raise RateFloorError("拟合数据含非正值", values=values.tolist())

    fit = linregress(np.log(eps), np.log(values))
    return RateFit(slope=float(fit.slope), intercept=float(fit.intercept), r2=float(fit.rvalue**2))


def slope_fit(quantity: str, pairs: Sequence[Tuple[float, float]]) -> SlopeFit:
    """fit_rate 的可序列化版本, 非正数据标记为 floor"""
    try:
        rate = fit_rate(pairs)
    except RateFloorError:
        return SlopeFit(quantity=quantity, floor=True)
    return SlopeFit(quantity=quantity, slope=rate.slope, intercept=rate.intercept, r2=rate.r2)


# ----------------------------------------------------------------------
# 场景初值
# ----------------------------------------------------------------------

def scenario_fluid(run_config: RunConfig, spatial_grid: SpatialGrid, epsilon: float) -> FluidState:
    """流体初值 (ρ̃, ũ, θ̃)"""
    a = run_config.amplitude
    k = run_config.wavenumber
    x = spatial_grid.x
    cells = spatial_grid.cells
    scenario = Scenario(run_config.scenario)

    if scenario == Scenario.WELL_PREPARED:
        # 横向剪切 + 满足Boussinesq关系的温度扰动
        theta = a * np.cos(k * x)
        u = np.zeros((cells, 3))
        u[:, 1] = a * np.sin(k * x)
        u[:, 2] = 0.5 * a * np.cos(k * x)
        return FluidState(rho_t=-theta, u_t=u, theta_t=theta, epsilon=epsilon, spatial_grid=spatial_grid)

    if scenario == Scenario.ILL_PREPARED:
        # ∇·ũ ≠ 0 且 ρ̃ + θ̃ ≠ 0, 激发声波
        phase = np.random.default_rng(run_config.seed).uniform(0.0, 2 * math.pi)
        u = np.zeros((cells, 3))
        u[:, 0] = a * np.sin(k * x + phase)
        u[:, 1] = a * np.cos(k * x + phase)
        return FluidState(rho_t=a * np.cos(k * x + phase), u_t=u, theta_t=0.5 * a * np.sin(k * x + phase),
                          epsilon=epsilon, spatial_grid=spatial_grid)

    if scenario == Scenario.ACOUSTIC_MODE:
        return acoustic_initial(spatial_grid, epsilon, amplitude=a, wavenumber=k)

    return FluidState.zeros(spatial_grid, epsilon)


def homogeneous_profile(grid: VelocityGrid, amplitude: float, seed: int) -> np.ndarray:
    """𝒩⊥ 中的有界速度剖面, 系数由种子决定"""
    v = grid.nodes
    damping = 1.0 + grid.speed_squared
    shapes = np.vstack([
        (v[:, 0]**2 - v[:, 1]**2) / damping,
        v[:, 0] * v[:, 1] / damping,
        v[:, 0] * (grid.speed_squared - 5.0) / damping**2,
    ])
    coefficients = np.random.default_rng(seed).normal(size=shapes.shape[0])
    return amplitude * grid.project_ortho(coefficients @ shapes)


def scenario_initial(run_config: RunConfig, grid: VelocityGrid, spatial_grid: SpatialGrid,
                     epsilon: float) -> Tuple[KineticState, FluidState]:
    """配对的 (g^in, 流体初值)"""
    fluid = scenario_fluid(run_config, spatial_grid, epsilon)
    if Scenario(run_config.scenario) == Scenario.HOMOGENEOUS_RELAXATION:
        profile = homogeneous_profile(grid, run_config.amplitude, run_config.seed)
        return homogeneous_initial(profile, spatial_grid, epsilon), fluid
    return well_prepared_initial(fluid, grid), fluid


# ----------------------------------------------------------------------
# 断言
# ----------------------------------------------------------------------

def max_step_increase(values: Sequence[float]) -> float:
    """相邻两项的最大增量, 少于两项时为0"""
    values = np.asarray(values, dtype=float)
    return float(np.max(np.diff(values))) if values.size > 1 else 0.0


def run_assertions(run_config: RunConfig, epsilon: float, reports: List[EntropyReport],
                   drift: float, step_entropy: Optional[Sequence[float]] = None) -> List[AssertionOutcome]:
    """单个ε的数值断言

    Args:
        step_entropy: 每个时间步之后的 H(f|M), 为空时退回到观测快照
    """
    diagnostics = config.diagnostics
    outcomes: List[AssertionOutcome] = []

    h_min = min(r.h_over_eps2 for r in reports)
    outcomes.append(AssertionOutcome(name="h_nonnegative", passed=h_min >= -1e-12, value=h_min,
                                     threshold=-1e-12))

    split = max(abs(r.split_defect) * epsilon**2 for r in reports)
    outcomes.append(AssertionOutcome(name="split_additivity", passed=split <= diagnostics.identity_tol,
                                     value=split, threshold=diagnostics.identity_tol))

    drift_limit = 1e-8 * max(run_config.t_end, 1.0)
    outcomes.append(AssertionOutcome(name="conservation", passed=drift <= drift_limit, value=drift,
                                     threshold=drift_limit, detail="全局守恒量的最大漂移"))

    scenario = Scenario(run_config.scenario)
    if scenario == Scenario.WELL_PREPARED:
        h0 = reports[0].h_over_eps2
        outcomes.append(AssertionOutcome(name="initial_entropy", passed=h0 <= diagnostics.initial_entropy_tol,
                                         value=h0, threshold=diagnostics.initial_entropy_tol))
        slack = min(r.budget_slack for r in reports)
        outcomes.append(AssertionOutcome(name="budget_slack", passed=slack >= -diagnostics.budget_slack_tol,
                                         value=slack, threshold=-diagnostics.budget_slack_tol))
    elif scenario == Scenario.HOMOGENEOUS_RELAXATION:
        if step_entropy is None:
            increase = max_step_increase([r.h_over_eps2 * epsilon**2 for r in reports])
            detail = "相邻观测时刻H(f|M)的最大增量"
        else:
            increase = max_step_increase(step_entropy)
            detail = "单个时间步内H(f|M)的最大增量"
        outcomes.append(AssertionOutcome(name="h_monotone", passed=increase <= 1e-12, value=increase,
                                         threshold=1e-12, detail=detail))
    else:
        sup_h = max(r.h_over_eps2 for r in reports)
        outcomes.append(AssertionOutcome(name="h_bounded", passed=bool(np.isfinite(sup_h)), value=sup_h))

    return outcomes


def study_assertions(run_config: RunConfig, study: StudyResult) -> List[AssertionOutcome]:
    """研究级断言: 仅良态场景且至少两个ε完成时评估斜率"""
    completed = [run for run in study.runs if run.status != RunStatus.ABORTED]
    if Scenario(run_config.scenario) != Scenario.WELL_PREPARED or len(completed) < 2:
        return []

    low, high = run_config.slope_band or config.diagnostics.slope_band
    outcomes: List[AssertionOutcome] = []

    fit = study.slope_of("sup_h_over_eps2")
    if fit is not None:
        passed = not fit.floor and low <= fit.slope <= high
        outcomes.append(AssertionOutcome(name="slope:sup_h_over_eps2", passed=passed, value=fit.slope,
                                         detail=f"[{low}, {high}]"))

    fit = study.slope_of("quadratic_remainder")
    if fit is not None:
        outcomes.append(AssertionOutcome(name="slope:quadratic_remainder",
                                         passed=fit.floor or fit.slope >= 0.8,
                                         value=fit.slope, threshold=0.8))

    # ε减半时下降比 ≥ asymptotic_ratio 等价于斜率 ≥ log₂(asymptotic_ratio)
    minimum = math.log2(config.diagnostics.asymptotic_ratio)
    for name in RATE_RESIDUALS:
        fit = study.slope_of(name)
        if fit is None:
            continue
        outcomes.append(AssertionOutcome(name=f"slope:{name}", passed=fit.floor or fit.slope >= minimum,
                                         value=fit.slope, threshold=minimum,
                                         detail="低于求积下限" if fit.floor else None))
    return outcomes


def collect_slopes(runs: List[EpsilonRunResult]) -> List[SlopeFit]:
    """sup_t H/ε²、二次近似余项与各余项终值对ε的斜率"""
    completed = [run for run in runs if run.status != RunStatus.ABORTED and run.reports]
    if len(completed) < 2:
        return []

    slopes = [slope_fit("sup_h_over_eps2", [(run.epsilon, run.sup_h_over_eps2) for run in completed])]
    slopes.append(slope_fit("quadratic_remainder", [
        (run.epsilon, max(abs(r.h_fluid - r.quad_approx) for r in run.reports)) for run in completed
    ]))

    names = [name for name in completed[0].reports[-1].residuals
             if all(name in run.reports[-1].residuals for run in completed)]
    for name in names:
        slopes.append(slope_fit(name, [(run.epsilon, abs(run.reports[-1].residuals[name]))
                                       for run in completed]))
    return slopes


# ----------------------------------------------------------------------
# 研究执行
# ----------------------------------------------------------------------

class StudyRunner:
    """并行执行一组ε, 每个ε的输出相互独立, 汇总由协调者一次写出"""

    def __init__(self, run_config: RunConfig):
        self.run_config = run_config
        grid_sizes = run_config.grid
        self.grid = build_grid(points_per_axis=grid_sizes.points_per_axis, rule=grid_sizes.rule,
                               sphere_polar=grid_sizes.sphere_polar, sphere_azimuth=grid_sizes.sphere_azimuth)
        kernel_settings = run_config.kernel
        self.kernel = CollisionKernel(self.grid, mode=kernel_settings.mode, b_const=kernel_settings.b_const,
                                      relaxation_rate=kernel_settings.relaxation_rate)
        self.spatial_grid = SpatialGrid(cells=grid_sizes.cells)
        self.history = StudyHistory(run_config.output_dir or config.app.output_dir)
        self.parallel = run_config.parallel or config.study.parallel

    def run_epsilon(self, epsilon: float, output_dir: Path) -> EpsilonRunResult:
        """单个ε: 初值 → 两个求解器 → 熵预算 → 写出CSV与JSON"""
        run_config = self.run_config
        result = EpsilonRunResult(epsilon=epsilon, status=RunStatus.RUNNING)
        run_dir = output_dir / f"eps_{epsilon:g}"
        bind_run_context(epsilon=epsilon)

        try:
            kinetic_init, fluid_init = scenario_initial(run_config, self.grid, self.spatial_grid, epsilon)
            kinetic_solver = BoltzmannSolver(self.grid, self.kernel, self.spatial_grid,
                                             transport=run_config.transport)
            fluid_solver = CNSSolver(self.kernel, self.spatial_grid, energy_form=run_config.energy_form)

            step_entropy: Optional[List[float]] = None
            on_step = None
            if Scenario(run_config.scenario) == Scenario.HOMOGENEOUS_RELAXATION:
                # 均匀弛豫逐步记录 H(f|M), 单调性按时间步检查
                step_entropy = []

                def on_step(state: KineticState) -> None:
                    step_entropy.append(kinetic_solver.h_theorem_entropy(state))

            kinetic_traj = kinetic_solver.run(kinetic_init, run_config.t_end, run_config.observer_cadence,
                                              on_step=on_step)
            fluid_traj = fluid_solver.run(fluid_init, run_config.t_end, run_config.observer_cadence)
            reports = theorem_budget(kinetic_traj, fluid_traj, self.kernel, energy_form=run_config.energy_form)

            initial_totals = kinetic_solver.conserved_totals(kinetic_traj.initial)
            final_totals = kinetic_solver.conserved_totals(kinetic_traj.final)
            drift = max(abs(final_totals[key] - initial_totals[key]) for key in initial_totals)

            result.reports = reports
            result.metadata["conservation_drift"] = drift
            if step_entropy is not None:
                result.metadata["max_step_h_increase"] = max_step_increase(step_entropy)
            if run_config.compare_insf and Scenario(run_config.scenario) == Scenario.WELL_PREPARED:
                result.metadata.update(self._insf_gaps(fluid_solver, kinetic_traj.final, fluid_traj.final))

            result.csv_path = str(write_report_csv(reports, run_dir / REPORT_FILE))
            result.assertions = run_assertions(run_config, epsilon, reports, drift, step_entropy)
            result.mark_completed()

        except SolverAbort as e:
            logger.error("ε运行中止", epsilon=epsilon, time=e.time, error=e.message)
            result.mark_aborted(e.message, (e.cause or e).error_type.value, abort_time=e.time,
                                snapshot=e.snapshot)
        except LabError as e:
            logger.error("ε运行失败", epsilon=epsilon, error=e.message, error_type=e.error_type.value)
            result.mark_aborted(e.message, e.error_type.value)

        if result.snapshot is not None:
            run_dir.mkdir(parents=True, exist_ok=True)
            with open(run_dir / SNAPSHOT_FILE, "w", encoding="utf-8") as f:
                f.write(result.snapshot.model_dump_json(indent=2))
        save_run_result(result, run_dir / RUN_FILE)
        return result

    def _insf_gaps(self, fluid_solver: CNSSolver, kinetic_final: KineticState,
                   fluid_final: FluidState) -> Dict[str, float]:
        """终止时刻 ũ、u^b 与不可压NSF解的L²距离"""
        run_config = self.run_config
        fluid_init = scenario_fluid(run_config, self.spatial_grid, fluid_final.epsilon)
        u, vartheta = insf_initial(fluid_init)
        speed = max(float(np.max(np.abs(u))), 1.0)
        dt = fluid_solver.cfl * self.spatial_grid.dx / speed
        _, u_insf, vartheta_insf = insf_run(u, vartheta, run_config.t_end, run_config.observer_cadence,
                                            fluid_solver.mu0, fluid_solver.kappa0, self.spatial_grid, dt)[-1]

        _, u_b, _ = self.grid.fluctuation_moments(kinetic_final.g)
        vartheta_fluid = 0.6 * fluid_final.theta_t - 0.4 * fluid_final.rho_t

        def l2(values: np.ndarray) -> float:
            squared = values**2 if values.ndim == 1 else np.sum(values**2, axis=-1)
            return float(math.sqrt(self.spatial_grid.integrate(squared)))

        return {
            "insf_gap_fluid_u": l2(fluid_final.u_t - u_insf),
            "insf_gap_fluid_vartheta": l2(vartheta_fluid - vartheta_insf),
            "insf_gap_kinetic_u": l2(u_b - u_insf),
        }

    async def _run_single(self, epsilon: float, output_dir: Path, semaphore: asyncio.Semaphore) -> EpsilonRunResult:
        async with semaphore:
            logger.info("ε运行开始", epsilon=epsilon)
            result = await asyncio.to_thread(self.run_epsilon, epsilon, output_dir)
            logger.info("ε运行结束", epsilon=epsilon, status=result.status, duration=result.duration)
            return result

    async def run(self) -> StudyResult:
        """执行整个研究并写出汇总"""
        run_config = self.run_config
        study = StudyResult(
            study_id=f"study_{uuid.uuid4().hex[:8]}",
            scenario=run_config.scenario,
            status=RunStatus.RUNNING,
            seed=run_config.seed,
            epsilon_list=list(run_config.epsilon_list),
            config=run_config.model_dump(mode="json"),
        )
        output_dir = self.history.study_dir(study)
        bind_run_context(study_id=study.study_id)
        logger.info("开始ε扫描研究", study_id=study.study_id, scenario=study.scenario,
                    epsilon_list=study.epsilon_list, parallel=self.parallel, mode=self.kernel.mode)

        try:
            # Â/B̂ 与输运系数在进入工作线程前算好并缓存
            self.kernel.transport_coefficients()

            semaphore = asyncio.Semaphore(self.parallel)
            tasks = [self._run_single(eps, output_dir, semaphore) for eps in run_config.epsilon_list]
            results = await asyncio.gather(*tasks, return_exceptions=True)

            for epsilon, result in zip(run_config.epsilon_list, results):
                if isinstance(result, Exception):
                    logger.error("ε运行异常", epsilon=epsilon, error=str(result), exc_info=result)
                    failed = EpsilonRunResult(epsilon=epsilon)
                    failed.mark_aborted(str(result), type(result).__name__)
                    study.runs.append(failed)
                else:
                    study.runs.append(result)

            study.slopes = collect_slopes(study.runs)
            study.assertions = study_assertions(run_config, study)
            study.mark_completed()
            summary = self.history.save_study(study)

            logger.info("ε扫描研究完成", study_id=study.study_id, status=study.status,
                        exit_code=study.exit_code, summary=str(summary))
            return study
        finally:
            clear_run_context()


def run_study(run_config: RunConfig) -> StudyResult:
    """同步入口"""
    return asyncio.run(StudyRunner(run_config).run())
