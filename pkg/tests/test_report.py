"""熵预算CSV与研究结果持久化测试"""
import pytest

from src.models.report import (CSV_COLUMNS, AssertionOutcome, EntropyReport, EpsilonRunResult, RunStatus,
                               StudyHistory, StudyResult, read_report_csv, write_report_csv)


def make_report(time: float, h: float = 1e-3, **kwargs) -> EntropyReport:
    values = dict(time=time, h_over_eps2=h, h_kinetic=0.5 * h, h_fluid=0.5 * h, quad_approx=0.5 * h,
                  dissipation_budget=0.0, flux_budget=0.0)
    values.update(kwargs)
    return EntropyReport(**values)


def make_run(epsilon: float, status: RunStatus, passed: bool = True) -> EpsilonRunResult:
    run = EpsilonRunResult(epsilon=epsilon, reports=[make_report(0.0)],
                           assertions=[AssertionOutcome(name="h_nonnegative", passed=passed)])
    if status == RunStatus.ABORTED:
        run.mark_aborted("求解中止", "positivity", abort_time=0.1)
    else:
        run.mark_completed()
    return run


class TestReportCsv:

    def test_fixed_column_order(self):
        assert CSV_COLUMNS[:3] == ["time", "H_over_eps2", "H_kinetic"]
        assert CSV_COLUMNS[-4:] == ["r_1", "r_2", "r_3", "r_4"]
        assert "R_A" in CSV_COLUMNS and "bgl_slack_min" in CSV_COLUMNS

    def test_write_and_read(self, tmp_path):
        reports = [make_report(0.0, residuals={"R_1": 0.0}),
                   make_report(0.1, h=2e-3, residuals={"R_1": 1.5e-4}, bgl_slack_min=0.25)]
        path = write_report_csv(reports, tmp_path / "eps_0.1" / "entropy_report.csv")
        assert path.read_text(encoding="utf-8").startswith("# schema_version=1\n")

        rows = read_report_csv(path)
        assert len(rows) == 2
        assert list(rows[0].keys()) == CSV_COLUMNS
        assert float(rows[1]["H_over_eps2"]) == 2e-3
        assert float(rows[1]["R_1"]) == 1.5e-4
        assert rows[0]["R_11"] == ""
        assert rows[0]["bgl_slack_min"] == ""
        assert float(rows[1]["bgl_slack_min"]) == 0.25
        assert rows[0]["dissipation_surrogate"] == "0"

    def test_output_is_deterministic(self, tmp_path):
        reports = [make_report(0.0), make_report(0.05, h=1.0 / 3.0)]
        first = write_report_csv(reports, tmp_path / "a.csv").read_bytes()
        second = write_report_csv(reports, tmp_path / "b.csv").read_bytes()
        assert first == second


class TestExitCodes:

    def test_all_passed(self):
        study = StudyResult(study_id="s", scenario="well_prepared",
                            runs=[make_run(0.1, RunStatus.COMPLETED), make_run(0.05, RunStatus.COMPLETED)])
        study.mark_completed()
        assert study.exit_code == 0
        assert study.status == RunStatus.COMPLETED

    def test_failed_assertion(self):
        study = StudyResult(study_id="s", scenario="well_prepared",
                            runs=[make_run(0.1, RunStatus.COMPLETED, passed=False)])
        study.mark_completed()
        assert study.runs[0].status == RunStatus.FAILED
        assert study.exit_code == 1

    def test_study_assertion_failure(self):
        study = StudyResult(study_id="s", scenario="well_prepared", runs=[make_run(0.1, RunStatus.COMPLETED)],
                            assertions=[AssertionOutcome(name="slope:sup_h_over_eps2", passed=False, value=0.2)])
        assert study.exit_code == 1

    def test_abort_wins(self):
        study = StudyResult(study_id="s", scenario="well_prepared",
                            runs=[make_run(0.1, RunStatus.COMPLETED, passed=False),
                                  make_run(0.05, RunStatus.ABORTED)])
        study.mark_completed()
        assert study.status == RunStatus.ABORTED
        assert study.exit_code == 3


class TestStudyHistory:

    def test_save_and_list(self, tmp_path):
        history = StudyHistory(tmp_path)
        for study_id, scenario in [("study_a", "well_prepared"), ("study_b", "acoustic_mode")]:
            study = StudyResult(study_id=study_id, scenario=scenario, epsilon_list=[0.1],
                                runs=[make_run(0.1, RunStatus.COMPLETED)])
            study.mark_completed()
            history.save_study(study)

        entries = history.get_study_history()
        assert {entry["study_id"] for entry in entries} == {"study_a", "study_b"}

        filtered = history.get_study_history(scenario="acoustic_mode")
        assert len(filtered) == 1
        assert filtered[0]["exit_code"] == 0
        assert filtered[0]["epsilon_list"] == [0.1]

        detail = history.get_study_detail("study_a")
        assert detail["scenario"] == "well_prepared"
        assert "reports" not in detail["runs"][0]

    def test_missing_directory(self, tmp_path):
        assert StudyHistory(tmp_path / "missing").get_study_history() == []

    @pytest.mark.parametrize("content", ["", "{not json"])
    def test_corrupt_summary_is_skipped(self, tmp_path, content):
        broken = tmp_path / "well_prepared_study_x_20260101_000000"
        broken.mkdir()
        (broken / StudyHistory.SUMMARY_NAME).write_text(content, encoding="utf-8")
        assert StudyHistory(tmp_path).get_study_history() == []
