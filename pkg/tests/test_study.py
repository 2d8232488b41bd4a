"""ε扫描研究: 斜率拟合、运行配置、端到端的小规模研究与命令行"""
import numpy as np
import pytest
import yaml
from typer.testing import CliRunner

from src.cli.main import app
from src.core.study import (REPORT_FILE, RUN_FILE, StudyRunner, collect_slopes, fit_rate, homogeneous_profile,
                            max_step_increase, run_study, scenario_fluid, slope_fit)
from src.models.error import ConfigurationError, DimensionError, RateFloorError
from src.models.report import RunStatus, StudyHistory, read_report_csv
from src.models.state import SpatialGrid
from src.models.study import RunConfig, Scenario


def homogeneous_config(output_dir, **overrides) -> RunConfig:
    data = {
        "name": "homogeneous-smoke",
        "scenario": "homogeneous_relaxation",
        "epsilon_list": [0.1, 0.05],
        "grid": {"cells": 4, "points_per_axis": 8, "sphere_polar": 2, "sphere_azimuth": 4},
        "t_end": 0.02,
        "observer_cadence": 0.01,
        "output_dir": str(output_dir),
        "parallel": 2,
    }
    data.update(overrides)
    return RunConfig.from_dict(data)


class TestRateFit:

    @pytest.mark.parametrize("power", [1.0, 2.0])
    def test_power_law(self, power):
        pairs = [(eps, 3.0 * eps**power) for eps in (0.1, 0.05, 0.025)]
        fit = fit_rate(pairs)
        assert fit.slope == pytest.approx(power, abs=1e-12)
        assert fit.r2 == pytest.approx(1.0)
        assert np.exp(fit.intercept) == pytest.approx(3.0)

    def test_floor(self):
        pairs = [(0.1, 1e-3), (0.05, 0.0)]
        with pytest.raises(RateFloorError):
            fit_rate(pairs)
        fit = slope_fit("R_1", pairs)
        assert fit.floor
        assert fit.slope is None

    @pytest.mark.parametrize("pairs", [[(0.1, 1.0)], [(0.1, 1.0), (0.1, 2.0)]])
    def test_needs_two_epsilons(self, pairs):
        with pytest.raises(DimensionError):
            fit_rate(pairs)

    def test_max_step_increase(self):
        assert max_step_increase([3.0, 2.0, 2.5, 1.0]) == pytest.approx(0.5)
        assert max_step_increase([1.0, 0.5]) == pytest.approx(-0.5)
        assert max_step_increase([1.0]) == 0.0

    def test_collect_slopes_needs_two_runs(self):
        assert collect_slopes([]) == []


class TestRunConfig:

    @pytest.mark.parametrize("epsilons", [[], [0.05, 0.1], [0.1, 0.1], [1.5, 0.5], [0.1, 0.0]])
    def test_rejects_bad_epsilon_list(self, tmp_path, epsilons):
        with pytest.raises(ConfigurationError) as excinfo:
            homogeneous_config(tmp_path, epsilon_list=epsilons)
        assert any("epsilon_list" in issue for issue in excinfo.value.context["issues"])

    def test_rejects_cadence_beyond_end(self, tmp_path):
        with pytest.raises(ConfigurationError):
            homogeneous_config(tmp_path, t_end=0.01, observer_cadence=0.1)

    def test_unknown_scenario(self, tmp_path):
        with pytest.raises(ConfigurationError):
            homogeneous_config(tmp_path, scenario="turbulent")

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "study.yml"
        path.write_text(yaml.safe_dump({"scenario": "acoustic_mode", "epsilon_list": [0.2, 0.1]}),
                        encoding="utf-8")
        run_config = RunConfig.load_from_file(path).with_overrides(seed=7, parallel=1)
        assert run_config.scenario == Scenario.ACOUSTIC_MODE.value
        assert run_config.seed == 7
        assert run_config.parallel == 1
        assert run_config.grid.cells == 32

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigurationError):
            RunConfig.load_from_file(tmp_path / "missing.yml")
        path = tmp_path / "list.yml"
        path.write_text("- 0.1\n- 0.05\n", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            RunConfig.load_from_file(path)


class TestScenarioData:

    def test_well_prepared_constraints(self, tmp_path):
        spatial_grid = SpatialGrid(cells=16)
        fluid = scenario_fluid(homogeneous_config(tmp_path, scenario="well_prepared"), spatial_grid, 0.1)
        np.testing.assert_allclose(fluid.rho_t + fluid.theta_t, 0.0, atol=1e-15)
        np.testing.assert_allclose(fluid.u_t[:, 0], 0.0)

    def test_ill_prepared_depends_on_seed(self, tmp_path):
        spatial_grid = SpatialGrid(cells=16)
        first = scenario_fluid(homogeneous_config(tmp_path, scenario="ill_prepared", seed=1), spatial_grid, 0.1)
        again = scenario_fluid(homogeneous_config(tmp_path, scenario="ill_prepared", seed=1), spatial_grid, 0.1)
        other = scenario_fluid(homogeneous_config(tmp_path, scenario="ill_prepared", seed=2), spatial_grid, 0.1)
        np.testing.assert_array_equal(first.u_t, again.u_t)
        assert not np.allclose(first.u_t, other.u_t)
        assert np.max(np.abs(first.u_t[:, 0])) > 0

    def test_homogeneous_profile_is_orthogonal(self, gh_grid):
        profile = homogeneous_profile(gh_grid, amplitude=0.1, seed=3)
        np.testing.assert_allclose(gh_grid.project_hydro(profile), 0.0, atol=1e-14)
        assert np.max(np.abs(profile)) > 0


class TestStudyRunner:

    async def test_homogeneous_study(self, tmp_path):
        study = await StudyRunner(homogeneous_config(tmp_path)).run()

        assert study.exit_code == 0
        assert [run.status for run in study.runs] == [RunStatus.COMPLETED, RunStatus.COMPLETED]
        assert study.assertions == []
        study_dirs = list(tmp_path.glob("homogeneous_relaxation_study_*"))
        assert len(study_dirs) == 1
        assert (study_dirs[0] / "study.json").exists()

        for run in study.runs:
            names = {a.name for a in run.assertions}
            assert {"h_nonnegative", "split_additivity", "conservation", "h_monotone"} <= names
            monotone = next(a for a in run.assertions if a.name == "h_monotone")
            assert monotone.passed
            assert "时间步" in monotone.detail
            assert run.metadata["max_step_h_increase"] == monotone.value
            run_dir = study_dirs[0] / f"eps_{run.epsilon:g}"
            assert (run_dir / RUN_FILE).exists()
            rows = read_report_csv(run_dir / REPORT_FILE)
            assert [float(row["time"]) for row in rows] == [0.0, 0.01, 0.02]
            h = [float(row["H_over_eps2"]) for row in rows]
            assert h[-1] < h[0]

    def test_run_study_is_reproducible(self, tmp_path):
        first = run_study(homogeneous_config(tmp_path / "a", epsilon_list=[0.1]))
        second = run_study(homogeneous_config(tmp_path / "b", epsilon_list=[0.1]))
        csv_a = next((tmp_path / "a").glob(f"*/eps_0.1/{REPORT_FILE}")).read_bytes()
        csv_b = next((tmp_path / "b").glob(f"*/eps_0.1/{REPORT_FILE}")).read_bytes()
        assert first.exit_code == second.exit_code == 0
        assert csv_a == csv_b


class TestCli:

    def test_missing_config_exits_with_2(self, tmp_path):
        result = CliRunner().invoke(app, ["study", "--config", str(tmp_path / "missing.yml")])
        assert result.exit_code == 2

    def test_invalid_config_exits_with_2(self, tmp_path):
        path = tmp_path / "bad.yml"
        path.write_text(yaml.safe_dump({"scenario": "well_prepared", "epsilon_list": [0.05, 0.1]}),
                        encoding="utf-8")
        result = CliRunner().invoke(app, ["study", "-c", str(path)])
        assert result.exit_code == 2

    def test_study_and_history(self, tmp_path):
        path = tmp_path / "homogeneous.yml"
        data = homogeneous_config(tmp_path).model_dump(mode="json")
        data["epsilon_list"] = [0.1]
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        out = tmp_path / "runs"

        result = CliRunner().invoke(app, ["study", "-c", str(path), "-o", str(out), "--seed", "5"])
        assert result.exit_code == 0, result.output

        listing = CliRunner().invoke(app, ["history", "-o", str(out)])
        assert listing.exit_code == 0
        study_id = StudyHistory(out).get_study_history()[0]["study_id"]
        assert study_id in listing.output

    def test_grid_report(self):
        result = CliRunner().invoke(app, ["grid", "--points", "6"])
        assert result.exit_code == 0
