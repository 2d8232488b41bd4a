"""kinetic-fluid-lab CLI主入口"""
import sys
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.table import Table

# 添加项目根目录到Python路径以支持绝对导入
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

from src.core.collision import CollisionKernel
from src.core.config import config
from src.core.study import run_study
from src.core.velocity_grid import build_grid
from src.models.error import ConfigurationError, LabError
from src.models.report import RunStatus, StudyHistory, StudyResult
from src.models.study import RunConfig

app = typer.Typer(name="kinetic-lab", help="Boltzmann方程到不可压NSF极限的相对熵实验室")
console = Console()

EXIT_CONFIG = 2
EXIT_ABORT = 3


@app.command()
def version():
    """显示版本信息"""
    console.print(f"[bold green]kinetic-fluid-lab[/bold green] v{config.app.version}")
    console.print("动理学–流体相对熵诊断: ε扫描、熵预算、收敛斜率")


@app.command()
def study(
    config_path: Path = typer.Option(..., "--config", "-c", help="运行配置YAML"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="输出目录, 覆盖配置文件"),
    seed: Optional[int] = typer.Option(None, "--seed", help="随机种子, 覆盖配置文件"),
    parallel: Optional[int] = typer.Option(None, "--parallel", "-p", min=1, help="并行ε任务数"),
):
    """执行一次ε扫描研究"""
    try:
        run_config = RunConfig.load_from_file(config_path).with_overrides(output_dir=out, seed=seed,
                                                                           parallel=parallel)
    except ConfigurationError as e:
        console.print(f"[red]配置错误: {e.message}[/red]")
        for issue in e.context.get("issues", []):
            console.print(f"  [red]- {issue}[/red]")
        sys.exit(EXIT_CONFIG)

    console.print(f"[bold]场景:[/bold] {run_config.scenario}  [bold]ε:[/bold] {run_config.epsilon_list}")
    try:
        result = run_study(run_config)
    except ConfigurationError as e:
        console.print(f"[red]配置错误: {e.message}[/red]")
        sys.exit(EXIT_CONFIG)
    except LabError as e:
        console.print(f"[red]研究失败: {e.message}[/red]")
        sys.exit(EXIT_ABORT)

    _print_study(result)
    sys.exit(result.exit_code)


def _print_study(result: StudyResult) -> None:
    table = Table(title=f"研究 {result.study_id} ({result.scenario})")
    table.add_column("ε", justify="right", style="cyan")
    table.add_column("状态", style="magenta")
    table.add_column("sup H/ε²", justify="right", style="green")
    table.add_column("未通过断言", style="yellow")

    status_style = {RunStatus.COMPLETED: "green", RunStatus.FAILED: "yellow", RunStatus.ABORTED: "red"}
    for run in result.runs:
        style = status_style.get(run.status, "white")
        sup_h = "-" if run.sup_h_over_eps2 is None else f"{run.sup_h_over_eps2:.4e}"
        failed = ", ".join(a.name for a in run.assertions if not a.passed) or "-"
        if run.status == RunStatus.ABORTED:
            failed = run.error_message or failed
        table.add_row(f"{run.epsilon:g}", f"[{style}]{RunStatus(run.status).value}[/{style}]", sup_h, failed)
    console.print(table)

    for fit in result.slopes:
        value = "floor" if fit.floor else f"{fit.slope:.3f} (r²={fit.r2:.3f})"
        console.print(f"  斜率 {fit.quantity}: {value}")
    for outcome in result.assertions:
        mark = "[green]✓[/green]" if outcome.passed else "[red]✗[/red]"
        console.print(f"  {mark} {outcome.name}: {outcome.value}")

    if result.passed:
        console.print("[green]所有断言通过[/green]")
    elif result.aborted:
        console.print("[red]存在中止的ε运行, 部分结果已保留[/red]")
    else:
        console.print("[yellow]存在未通过的断言[/yellow]")


@app.command()
def coefficients(
    points: int = typer.Option(8, "--points", help="每轴速度节点数"),
    mode: str = typer.Option("bgk", "--mode", help="bgk 或 maxwell_molecules"),
    relaxation_rate: float = typer.Option(1.0, "--rate", help="BGK弛豫率"),
    b_const: float = typer.Option(1.0, "--b", help="Maxwell分子截面常数"),
):
    """计算Chapman–Enskog输运系数与谱隙"""
    try:
        grid = build_grid(points_per_axis=points)
        kernel = CollisionKernel(grid, mode=mode, relaxation_rate=relaxation_rate, b_const=b_const)
        mu, kappa = kernel.transport_coefficients()
        _, _, residual = kernel.hat_tensors()
        gap = kernel.spectral_gap()
    except ConfigurationError as e:
        console.print(f"[red]配置错误: {e.message}[/red]")
        sys.exit(EXIT_CONFIG)
    except LabError as e:
        console.print(f"[red]计算失败: {e.message}[/red]")
        sys.exit(EXIT_ABORT)

    table = Table(title=f"输运系数 ({mode}, {points}³)")
    table.add_column("量", style="cyan")
    table.add_column("值", justify="right", style="green")
    table.add_row("μ", f"{mu:.10f}")
    table.add_row("κ", f"{kappa:.10f}")
    table.add_row("谱隙", f"{gap:.6f}")
    table.add_row("Â/B̂ 残差", f"{residual:.2e}")
    console.print(table)


@app.command()
def grid(
    points: int = typer.Option(8, "--points", help="每轴速度节点数"),
    rule: str = typer.Option("gauss_hermite", "--rule", help="gauss_hermite 或 uniform_trapezoid"),
):
    """显示速度网格的求积残差"""
    try:
        velocity_grid = build_grid(points_per_axis=points, rule=rule)
    except ConfigurationError as e:
        console.print(f"[red]配置错误: {e.message}[/red]")
        sys.exit(EXIT_CONFIG)

    table = Table(title=f"求积残差 ({rule}, {velocity_grid.size} 节点)")
    table.add_column("项", style="cyan")
    table.add_column("残差", justify="right", style="green")
    for name, value in velocity_grid.quadrature_report().items():
        table.add_row(name, f"{value:.3e}")
    console.print(table)


@app.command()
def history(
    scenario: Optional[str] = typer.Option(None, "--scenario", help="按场景过滤"),
    limit: int = typer.Option(20, "--limit", help="最多显示条数"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="输出目录"),
):
    """列出历史研究"""
    entries = StudyHistory(out or config.study.history_dir).get_study_history(scenario=scenario, limit=limit)
    if not entries:
        console.print("[yellow]没有找到历史研究[/yellow]")
        return

    table = Table(title="历史研究")
    table.add_column("ID", style="cyan", no_wrap=True)
    table.add_column("场景", style="magenta")
    table.add_column("状态", style="green")
    table.add_column("ε", style="blue")
    table.add_column("退出码", justify="right", style="yellow")
    for entry in entries:
        table.add_row(entry["study_id"] or "-", entry["scenario"] or "-", str(entry["status"]),
                      ", ".join(f"{eps:g}" for eps in entry["epsilon_list"]), str(entry["exit_code"]))
    console.print(table)


def main():
    """主函数"""
    app()


if __name__ == "__main__":
    main()
