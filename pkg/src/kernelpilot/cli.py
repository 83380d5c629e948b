"""Command-line front end.

Subcommands: ``run`` (refine one task or a whole suite), ``bench`` (run +
summary), ``select-metrics`` (offline mining), ``sample-kernels`` (export
correct candidates as mining samples), ``report`` (summarize result files),
``lint-kernel`` (fake-kernel audit).

Exit codes: 0 success, 2 configuration problem, 3 executor missing/broken,
4 budget exhausted.  Settings come from flags, then the optional YAML config
file, then defaults; environment variables are used only for the API key.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import __version__
from .core import DEFAULT_MAX_ROUNDS, DEFAULT_TOLERANCE, CostLedger, DomainError, Task
from .evaluation import (
    lint_file,
    render_cost_row,
    render_suite_table,
    report_cost,
    scores_from_result_files,
    summarize,
    EmptySuite,
)
from .gateway import BackendPricing, HTTPBackend, MockBackend, TranscriptMiss
from .hardware import (
    BadCatalog,
    UnknownGPU,
    default_catalog,
    load_catalog,
    lookup_gpu,
    export_from_metrics,
    serialize_profiler_csv,
)
from .mining import MiningError, mine, render_catalog, render_mining_report
from .prompts import load_oneshot_pair
from .suites import SuiteError, load_suite
from .workflow import (
    EventLog,
    ExecutorUnavailable,
    ScriptedExecutor,
    SubprocessExecutor,
    WorkflowConfig,
    result_filename,
    run_suite,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXECUTOR = 3
EXIT_BUDGET = 4


class ConfigError(Exception):
    pass


def _load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return raw


def _setting(flag_value, config: dict, key: str, default):
    """Flags beat the config file; the config file beats defaults."""

    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _mock_dir_for(mock_root: Path, task: Task) -> Path:
    return mock_root / result_filename(task.id).removesuffix(".json")


def _build_runner(args, config: dict):
    """Shared setup for ``run``/``bench``: tasks, backends, executor, config."""

    suite_dir = _setting(args.suite, config, "suite", None)
    if not suite_dir:
        raise ConfigError("a suite directory is required (--suite)")
    tasks = load_suite(suite_dir)
    if args.task:
        wanted = [t for t in tasks if t.id == args.task]
        if not wanted:
            known = ", ".join(t.id for t in tasks)
            raise ConfigError(f"task {args.task!r} is not in the suite (tasks: {known})")
        tasks = wanted

    gpu_name = _setting(args.gpu, config, "gpu", "rtx6000")
    gpu = lookup_gpu(gpu_name)
    catalog_path = _setting(getattr(args, "catalog", None), config, "catalog", None)
    catalog = load_catalog(catalog_path) if catalog_path else default_catalog()
    few_base, few_new = load_oneshot_pair()

    prices = config.get("pricing", {})
    pricing = BackendPricing(
        prompt_per_1k=float(prices.get("prompt_per_1k", 0.0)),
        completion_per_1k=float(prices.get("completion_per_1k", 0.0)),
    )

    workflow_config = WorkflowConfig(
        gpu=gpu,
        catalog=catalog,
        max_rounds=int(_setting(args.max_rounds, config, "max_rounds", DEFAULT_MAX_ROUNDS)),
        tolerance=float(_setting(args.tolerance, config, "tolerance", DEFAULT_TOLERANCE)),
        budget_dollars=_none_or_float(_setting(args.budget, config, "budget", None)),
        pricing=pricing,
        few_base=few_base,
        few_new=few_new,
    )

    mock_root = _setting(args.mock, config, "mock", None)
    if mock_root:
        mock_root = Path(mock_root)

        def backend_factory(task: Task):
            backend = MockBackend(_mock_dir_for(mock_root, task))
            return backend, backend

        def executor_factory(task: Task) -> ScriptedExecutor:
            return ScriptedExecutor(_mock_dir_for(mock_root, task) / "executor.json")

        executor = _PerTaskExecutor(executor_factory)
    else:
        model = _setting(args.backend, config, "backend", None)
        if not model:
            raise ConfigError("either --mock or --backend is required")
        base_url = _setting(args.base_url, config, "base_url", None)
        if not base_url:
            raise ConfigError("--base-url is required with a live backend")
        http = HTTPBackend(
            base_url=base_url,
            model=model,
            api_key_env=_setting(args.api_key_env, config, "api_key_env", "LLM_API_KEY"),
            temperature=_none_or_float(config.get("temperature")),
        )

        def backend_factory(task: Task):
            return http, http

        executor_cfg = config.get("executor", {})
        executor = SubprocessExecutor(
            command=executor_cfg.get("command"),
            tolerance=workflow_config.tolerance,
            warmup=int(executor_cfg.get("warmup", 3)),
            reps=int(executor_cfg.get("reps", 20)),
            num_input_sets=int(executor_cfg.get("num_input_sets", 5)),
            seed=int(executor_cfg.get("seed", 1234)),
            build_timeout_s=float(executor_cfg.get("build_timeout_s", 120.0)),
            run_timeout_s=float(executor_cfg.get("run_timeout_s", 60.0)),
        )

    out_dir = Path(_setting(args.out, config, "out", "results"))
    jobs = int(_setting(args.jobs, config, "jobs", 1))
    return tasks, backend_factory, executor, workflow_config, out_dir, jobs


class _PerTaskExecutor:
    """Routes executor calls to a per-task scripted replay."""

    def __init__(self, factory):
        self._factory = factory
        self._cache: dict[str, ScriptedExecutor] = {}

    def _for(self, task: Task) -> ScriptedExecutor:
        if task.id not in self._cache:
            self._cache[task.id] = self._factory(task)
        return self._cache[task.id]

    def test(self, task, candidate_source, round):
        return self._for(task).test(task, candidate_source, round)

    def profile(self, task, candidate_source, round, metric_names):
        return self._for(task).profile(task, candidate_source, round, metric_names)


def _none_or_float(value) -> Optional[float]:
    return None if value is None else float(value)


def _cmd_run(args, print_summary: bool = False) -> int:
    config = _load_config_file(args.config)
    tasks, backend_factory, executor, workflow_config, out_dir, jobs = _build_runner(args, config)
    event_log = EventLog(out_dir / "events.log")
    paths = run_suite(
        tasks,
        backend_factory,
        executor,
        workflow_config,
        out_dir,
        jobs=jobs,
        resume=bool(args.resume),
        event_sink=event_log,
    )
    truncated = False
    for path in paths:
        record = json.loads(path.read_text())
        truncated = truncated or bool(record.get("truncated"))
        best = record.get("best_round")
        speed = record.get("speedup")
        status = f"best round {best}, speedup {speed:.3f}x" if best else "no correct kernel"
        print(f"{record['task_id']}: {status} -> {path}")
    if print_summary:
        _print_report(out_dir, fast1_denominator="all", label="suite")
    return EXIT_BUDGET if truncated else EXIT_OK


def _result_files(results_dir: Path) -> list[Path]:
    return sorted(p for p in results_dir.glob("*.json"))


def _print_report(results_dir: Path, fast1_denominator: str, label: str) -> None:
    paths = _result_files(results_dir)
    if not paths:
        raise EmptySuite(f"no result files in {results_dir}")
    scores = scores_from_result_files(paths)
    summary = summarize(scores, fast1_denominator=fast1_denominator)
    print(render_suite_table(summary, label=label), end="")
    ledger = CostLedger()
    for path in paths:
        ledger.merge(CostLedger.from_dict(json.loads(path.read_text()).get("cost", {})))
    print(report_cost(ledger), end="")
    print(render_cost_row(ledger))


def _cmd_report(args) -> int:
    _print_report(Path(args.results), args.fast1_denominator, args.label)
    return EXIT_OK


def _cmd_select_metrics(args) -> int:
    report = mine(
        args.samples,
        collinearity=args.collinearity,
        percentile=args.percentile,
        limit=args.top,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    catalog_path = out_dir / "metric_catalog.txt"
    report_path = out_dir / "mining_report.txt"
    catalog_path.write_text(render_catalog(report.selection))
    report_path.write_text(render_mining_report(report))
    print(f"selected {len(report.selection.selected)} metrics -> {catalog_path}")
    print(f"per-task tables -> {report_path}")
    return EXIT_OK


def _cmd_sample_kernels(args) -> int:
    """Run replayable workflows and archive every correct round as a sample."""

    config = _load_config_file(args.config)
    tasks, backend_factory, executor, workflow_config, out_dir, _ = _build_runner(args, config)
    from .workflow import run_workflow

    samples_root = Path(args.out)
    exported = 0
    for task in tasks:
        coder, judge = backend_factory(task)
        result = run_workflow(task, coder, judge, executor, workflow_config)
        for record in result.rounds:
            if not record.report.correct or record.profile is None:
                continue
            sample_dir = (
                samples_root
                / result_filename(task.id).removesuffix(".json")
                / f"round{record.round:02d}"
            )
            sample_dir.mkdir(parents=True, exist_ok=True)
            (sample_dir / "meta.json").write_text(
                json.dumps(
                    {
                        "runtime_ms": record.report.kernel_latency_ms,
                        "speedup": record.report.speedup,
                        "round": record.round,
                    },
                    indent=2,
                    sort_keys=True,
                )
                + "\n"
            )
            export = export_from_metrics(
                record.profile.kernel_id, dict(record.profile.metrics), dict(record.profile.units)
            )
            (sample_dir / "profile.csv").write_text(serialize_profiler_csv(export))
            exported += 1
    print(f"exported {exported} samples -> {samples_root}")
    return EXIT_OK


def _cmd_lint_kernel(args) -> int:
    total = 0
    for path in args.files:
        findings = lint_file(path)
        total += len(findings)
        if not findings:
            print(f"{path}: clean")
            continue
        for finding in findings:
            print(f"{path}:{finding.line_start}-{finding.line_end}: {finding.rule.value}")
            if finding.excerpt:
                for line in finding.excerpt.splitlines():
                    print(f"    {line}")
    print(f"{total} finding(s) in {len(args.files)} file(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelpilot",
        description="Profiler-guided two-agent kernel generation and optimization.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--suite", help="suite directory (manifest.json + task files)")
        p.add_argument("--task", help="run only this task id")
        p.add_argument("--mock", help="transcript root for replayed runs (no network, no GPU)")
        p.add_argument("--backend", help="model id for the HTTP chat backend")
        p.add_argument("--base-url", dest="base_url", help="HTTP backend base URL")
        p.add_argument("--api-key-env", dest="api_key_env", help="env var holding the API key")
        p.add_argument("--gpu", help="target device name or alias (registry lookup)")
        p.add_argument("--catalog", help="metric catalog file (default: shipped 24-metric subset)")
        p.add_argument("--max-rounds", dest="max_rounds", type=int, help="refinement rounds")
        p.add_argument("--tolerance", type=float, help="max abs diff accepted as correct")
        p.add_argument("--jobs", type=int, help="parallel tasks (executor access is serialized)")
        p.add_argument("--budget", type=float, help="dollar cap; runs truncate when passed")
        p.add_argument("--out", help="result directory")
        p.add_argument("--resume", action="store_true", help="skip tasks with existing result files")
        p.add_argument("--config", help="YAML config file")

    run_p = sub.add_parser("run", help="refine kernels for a task or suite")
    add_run_flags(run_p)

    bench_p = sub.add_parser("bench", help="run a suite, then print the summary tables")
    add_run_flags(bench_p)

    sel_p = sub.add_parser("select-metrics", help="mine archived samples for the metric subset")
    sel_p.add_argument("--samples", required=True, help="sample archive root")
    sel_p.add_argument("--out", required=True, help="output directory")
    sel_p.add_argument("--collinearity", type=float, default=0.999, help="alias |r| threshold")
    sel_p.add_argument("--percentile", type=float, default=75.0, help="global score percentile cut")
    sel_p.add_argument("--top", type=int, default=20, help="per-task list length")

    samp_p = sub.add_parser("sample-kernels", help="archive correct rounds as mining samples")
    add_run_flags(samp_p)

    rep_p = sub.add_parser("report", help="summarize a directory of result files")
    rep_p.add_argument("--results", required=True, help="result directory")
    rep_p.add_argument(
        "--fast1-denominator",
        dest="fast1_denominator",
        choices=("all", "correct"),
        default="all",
        help="count Fast1 over all tasks (default) or only correct ones",
    )
    rep_p.add_argument("--label", default="suite", help="row label for the table")

    lint_p = sub.add_parser("lint-kernel", help="audit kernels for fake-kernel patterns")
    lint_p.add_argument("files", nargs="+", help="kernel source files")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "bench":
            return _cmd_run(args, print_summary=True)
        if args.command == "select-metrics":
            return _cmd_select_metrics(args)
        if args.command == "sample-kernels":
            return _cmd_sample_kernels(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "lint-kernel":
            return _cmd_lint_kernel(args)
        parser.error(f"unknown command {args.command!r}")
    except (
        ConfigError,
        SuiteError,
        UnknownGPU,
        BadCatalog,
        TranscriptMiss,
        MiningError,
        EmptySuite,
        DomainError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExecutorUnavailable as exc:
        print(f"executor error: {exc}", file=sys.stderr)
        return EXIT_EXECUTOR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
