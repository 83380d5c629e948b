"""Suite loading and the command-line front end (exit codes, outputs)."""

import json
import shutil

import pytest

from kernelpilot.cli import main
from kernelpilot.core import DomainError
from kernelpilot.suites import SuiteError, load_suite, load_task_file

from conftest import FIXTURES, GOLDENS, SUITE_DIR, TRANSCRIPTS

MOCK_ROOT = TRANSCRIPTS.parent  # --mock expects <root>/<task_dir>/...


# --------------------------------------------------------------------------- #
# suite loading
# --------------------------------------------------------------------------- #


class TestLoadSuite:
    def test_fixture_suite(self):
        tasks = load_suite(SUITE_DIR)
        assert [t.id for t in tasks] == ["level1/95"]
        assert tasks[0].level == 1
        assert "cross_entropy" in tasks[0].reference_source

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(SuiteError, match="no manifest.json"):
            load_suite(tmp_path)

    def test_manifest_not_json(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{not json")
        with pytest.raises(SuiteError, match="not valid JSON"):
            load_suite(tmp_path)

    def test_manifest_without_tasks(self, tmp_path):
        (tmp_path / "manifest.json").write_text('{"tasks": []}')
        with pytest.raises(SuiteError, match="lists no tasks"):
            load_suite(tmp_path)

    def test_missing_task_file(self, tmp_path):
        (tmp_path / "manifest.json").write_text('{"tasks": ["tasks/gone.json"]}')
        with pytest.raises(SuiteError, match="cannot read task file"):
            load_suite(tmp_path)

    def test_duplicate_task_ids(self, tmp_path):
        (tmp_path / "tasks").mkdir()
        record = (SUITE_DIR / "tasks" / "level1_95.json").read_text()
        (tmp_path / "tasks" / "a.json").write_text(record)
        (tmp_path / "tasks" / "b.json").write_text(record)
        (tmp_path / "manifest.json").write_text('{"tasks": ["tasks/a.json", "tasks/b.json"]}')
        with pytest.raises(SuiteError, match="duplicate task ids"):
            load_suite(tmp_path)

    def test_invalid_task_record_is_a_domain_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"id": "x", "level": 0, "reference_source": "pass"}')
        with pytest.raises(DomainError):
            load_task_file(bad)


# --------------------------------------------------------------------------- #
# CLI: replayed runs
# --------------------------------------------------------------------------- #


def _run_args(out_dir, *extra):
    return [
        "run",
        "--suite", str(SUITE_DIR),
        "--mock", str(MOCK_ROOT),
        "--out", str(out_dir),
        *extra,
    ]


class TestRunCommand:
    def test_replay_suite_succeeds(self, tmp_path, capsys):
        assert main(_run_args(tmp_path / "out")) == 0
        out = capsys.readouterr().out
        assert "level1/95: best round 7, speedup 3.762x" in out
        record = json.loads((tmp_path / "out" / "level1_95.json").read_text())
        assert record["rounds_used"] == 10

    def test_event_log_written_next_to_results(self, tmp_path):
        main(_run_args(tmp_path / "out"))
        lines = (tmp_path / "out" / "events.log").read_text().splitlines()
        assert json.loads(lines[-1])["event"] == "workflow_done"

    def test_missing_suite_flag_is_config_error(self, tmp_path, capsys):
        assert main(["run", "--mock", str(MOCK_ROOT), "--out", str(tmp_path)]) == 2
        assert "suite directory is required" in capsys.readouterr().err

    def test_nonexistent_suite_is_config_error(self, tmp_path, capsys):
        assert main(_run_args(tmp_path)[:2] + [str(tmp_path / "nope")] + _run_args(tmp_path)[3:]) == 2
        assert "manifest.json" in capsys.readouterr().err

    def test_unknown_task_filter_is_config_error(self, tmp_path, capsys):
        assert main(_run_args(tmp_path, "--task", "level9/1")) == 2
        assert "not in the suite" in capsys.readouterr().err

    def test_unknown_gpu_is_config_error(self, tmp_path, capsys):
        assert main(_run_args(tmp_path, "--gpu", "quantum-tpu")) == 2
        assert "known devices" in capsys.readouterr().err

    def test_neither_mock_nor_backend_is_config_error(self, tmp_path, capsys):
        code = main(["run", "--suite", str(SUITE_DIR), "--out", str(tmp_path)])
        assert code == 2
        assert "--mock or --backend" in capsys.readouterr().err

    def test_truncated_budget_run_exits_4(self, tmp_path, capsys):
        config = tmp_path / "config.yaml"
        config.write_text(
            "pricing:\n  prompt_per_1k: 1.0\n  completion_per_1k: 2.0\nbudget: 5.0\n"
        )
        code = main(_run_args(tmp_path / "out", "--config", str(config)))
        assert code == 4
        record = json.loads((tmp_path / "out" / "level1_95.json").read_text())
        assert record["truncated"] is True
        assert record["rounds"]  # the paid rounds are kept

    def test_broken_executor_script_exits_3(self, tmp_path, capsys):
        mock_root = tmp_path / "mock"
        shutil.copytree(TRANSCRIPTS, mock_root / "level1_95")
        (mock_root / "level1_95" / "executor.json").write_text("{broken")
        code = main(
            ["run", "--suite", str(SUITE_DIR), "--mock", str(mock_root),
             "--out", str(tmp_path / "out")]
        )
        assert code == 3
        assert "executor error" in capsys.readouterr().err

    def test_script_missing_rounds_exits_3(self, tmp_path, capsys):
        mock_root = tmp_path / "mock"
        shutil.copytree(TRANSCRIPTS, mock_root / "level1_95")
        script_path = mock_root / "level1_95" / "executor.json"
        script = json.loads(script_path.read_text())
        script["rounds"] = {"1": script["rounds"]["1"]}
        script_path.write_text(json.dumps(script))
        code = main(
            ["run", "--suite", str(SUITE_DIR), "--mock", str(mock_root),
             "--out", str(tmp_path / "out")]
        )
        assert code == 3
        assert "no entry for round 2" in capsys.readouterr().err

    def test_resume_leaves_existing_results_alone(self, tmp_path, capsys):
        out = tmp_path / "out"
        main(_run_args(out))
        sentinel = '{"task_id": "level1/95", "note": "hand-edited"}'
        (out / "level1_95.json").write_text(sentinel)
        assert main(_run_args(out, "--resume")) == 0
        assert (out / "level1_95.json").read_text() == sentinel

    def test_flag_beats_config_file(self, tmp_path):
        config = tmp_path / "config.yaml"
        config.write_text("max_rounds: 3\n")
        main(_run_args(tmp_path / "a", "--config", str(config)))
        assert json.loads((tmp_path / "a" / "level1_95.json").read_text())["rounds_used"] == 3
        main(_run_args(tmp_path / "b", "--config", str(config), "--max-rounds", "2"))
        assert json.loads((tmp_path / "b" / "level1_95.json").read_text())["rounds_used"] == 2

    def test_config_file_must_hold_a_mapping(self, tmp_path, capsys):
        config = tmp_path / "config.yaml"
        config.write_text("- just\n- a\n- list\n")
        assert main(_run_args(tmp_path / "out", "--config", str(config))) == 2
        assert "must hold a mapping" in capsys.readouterr().err


class TestBenchAndReport:
    ROW = "suite | 100.0% | 3.762 | 3.762 | 3.762 | 100.0%"

    def test_bench_prints_summary_tables(self, tmp_path, capsys):
        args = _run_args(tmp_path / "out")
        args[0] = "bench"
        assert main(args) == 0
        out = capsys.readouterr().out
        assert "Method | Correct | Median | 75% | Perf | Fast1" in out
        assert self.ROW in out
        assert "API Cost $" in out

    def test_report_over_result_files(self, tmp_path, capsys):
        main(_run_args(tmp_path / "out"))
        capsys.readouterr()
        assert main(["report", "--results", str(tmp_path / "out")]) == 0
        out = capsys.readouterr().out
        assert self.ROW in out
        assert "phase      minutes" in out

    def test_report_fast1_denominator_choice(self, tmp_path, capsys):
        main(_run_args(tmp_path / "out"))
        capsys.readouterr()
        assert main(
            ["report", "--results", str(tmp_path / "out"), "--fast1-denominator", "correct",
             "--label", "replayed"]
        ) == 0
        assert "replayed | 100.0%" in capsys.readouterr().out

    def test_report_on_empty_directory_is_config_error(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        assert main(["report", "--results", str(tmp_path / "empty")]) == 2
        assert "no result files" in capsys.readouterr().err


class TestOfflineCommands:
    def test_select_metrics_writes_both_artifacts(self, tmp_path, capsys):
        code = main(
            ["select-metrics", "--samples", str(FIXTURES / "mini_samples"),
             "--out", str(tmp_path)]
        )
        assert code == 0
        assert (tmp_path / "metric_catalog.txt").read_text() == (
            GOLDENS / "mining" / "metric_catalog.txt"
        ).read_text()
        assert (tmp_path / "mining_report.txt").read_text() == (
            GOLDENS / "mining" / "mining_report.txt"
        ).read_text()

    def test_select_metrics_needs_enough_tasks(self, tmp_path, capsys):
        samples = tmp_path / "samples"
        shutil.copytree(FIXTURES / "mini_samples" / "softmax", samples / "softmax")
        assert main(["select-metrics", "--samples", str(samples), "--out", str(tmp_path / "o")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_sample_kernels_exports_correct_rounds(self, tmp_path, capsys):
        code = main(
            ["sample-kernels", "--suite", str(SUITE_DIR), "--mock", str(MOCK_ROOT),
             "--out", str(tmp_path / "samples")]
        )
        assert code == 0
        assert "exported 9 samples" in capsys.readouterr().out
        rounds = sorted(p.name for p in (tmp_path / "samples" / "level1_95").iterdir())
        assert rounds == [f"round{r:02d}" for r in (1, 2, 3, 5, 6, 7, 8, 9, 10)]
        meta = json.loads(
            (tmp_path / "samples" / "level1_95" / "round07" / "meta.json").read_text()
        )
        assert meta["speedup"] == pytest.approx(3.762)
        csv_text = (tmp_path / "samples" / "level1_95" / "round07" / "profile.csv").read_text()
        assert "sm__cycles_active.avg" in csv_text

    def test_lint_kernel_reports_per_file(self, capsys):
        lint_dir = FIXTURES / "lint"
        files = [
            str(lint_dir / "fallback_batched_matmul.py"),
            str(lint_dir / "no_kernel_conv3d_groupnorm.py"),
            str(lint_dir / "genuine_elementwise_add.py"),
        ]
        assert main(["lint-kernel", *files]) == 0
        out = capsys.readouterr().out
        assert "TRY_EXCEPT_FALLBACK" in out
        assert "NO_DEVICE_KERNEL" in out
        assert f"{files[2]}: clean" in out
        assert "4 finding(s) in 3 file(s)" in out


class TestParser:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "kernelpilot" in capsys.readouterr().out

    def test_unknown_command_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
