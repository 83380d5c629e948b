"""The refinement loop: Coder proposes, the gate tests, the Judge steers.

Round ``r`` of a run sees only the task, candidate ``r-1``, and feedback
``r-1`` — no accumulated history — so context stays flat no matter how many
rounds run.  Every candidate passes through the two-stage correctness gate;
correct candidates are profiled and judged for optimization, broken ones are
judged for correction, and the final round is tested but never judged.  The
best kernel is the fastest correct one, earliest round winning ties.
"""

from __future__ import annotations

import json
import subprocess
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Protocol, Sequence

from .core import (
    CostEvent,
    CostLedger,
    DEFAULT_MAX_ROUNDS,
    DEFAULT_TOLERANCE,
    FeedbackMode,
    GPUSpec,
    JudgeFeedback,
    KernelCandidate,
    NCUProfile,
    RoundRecord,
    RunReport,
    Task,
    WorkflowResult,
    pick_best,
)
from .gateway import (
    BackendPricing,
    BudgetExceeded,
    LLMBackend,
    call_agent,
    extract_kernel_code,
    ask_judge,
)
from .hardware import (
    MetricCatalog,
    ProfilerUnavailable,
    default_catalog,
    export_from_metrics,
    filter_to_subset,
    format_hardware_feedback,
    parse_profiler_csv,
    serialize_profiler_csv,
)
from .prompts import PromptKind


class ExecutorUnavailable(Exception):
    """The execution harness is missing or broken (distinct from a candidate
    that merely fails to build — that is an ordinary failed report)."""


#: Fixed instruction used when a round has no structured Judge feedback
#: (parse degradation or missing profiler): the Coder refines on its own.
SELF_REFINE_NOTE = (
    "No structured feedback is available for the previous round. Re-examine the "
    "kernel yourself: fix any correctness risk first, then pursue the single most "
    "promising optimization."
)


# --------------------------------------------------------------------------- #
# executors
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ExecOutcome:
    report: RunReport
    compile_s: float = 0.0
    execute_s: float = 0.0


@dataclass(frozen=True)
class ProfileOutcome:
    csv_text: str
    seconds: float = 0.0


class Executor(Protocol):
    """The GPU-side contract the engine depends on."""

    def test(self, task: Task, candidate_source: str, round: int) -> ExecOutcome: ...

    def profile(
        self, task: Task, candidate_source: str, round: int, metric_names: Sequence[str]
    ) -> ProfileOutcome: ...


class ScriptedExecutor:
    """Replays recorded per-round outcomes (no GPU, no network).

    The script is a JSON file: a task-level ``ref_latency_ms`` plus a
    ``rounds`` table keyed by round index with compile/correct flags, either
    a ``speedup`` or an explicit ``kernel_latency_ms``, optional error log,
    profiler metric values, and fixed phase durations.  All timing in replay
    comes from the script, so replayed runs serialize byte-identically.
    """

    def __init__(self, script_path: str | Path) -> None:
        try:
            raw = json.loads(Path(script_path).read_text())
        except (OSError, ValueError) as exc:
            raise ExecutorUnavailable(f"cannot read executor script {script_path}: {exc}") from exc
        self._ref_latency_ms = float(raw["ref_latency_ms"])
        self._rounds: dict[int, dict] = {int(k): v for k, v in raw["rounds"].items()}

    def _entry(self, round: int) -> dict:
        try:
            return self._rounds[round]
        except KeyError:
            raise ExecutorUnavailable(f"script has no entry for round {round}")

    def test(self, task: Task, candidate_source: str, round: int) -> ExecOutcome:
        entry = self._entry(round)
        compiled = bool(entry.get("compiled", False))
        correct = bool(entry.get("correct", False))
        if correct:
            if "kernel_latency_ms" in entry:
                kernel_ms = float(entry["kernel_latency_ms"])
            else:
                kernel_ms = self._ref_latency_ms / float(entry["speedup"])
            report = RunReport(
                compiled=True,
                correct=True,
                error_log="",
                ref_latency_ms=self._ref_latency_ms,
                kernel_latency_ms=kernel_ms,
                max_abs_diff=float(entry.get("max_abs_diff", 0.0)),
            )
        else:
            report = RunReport(
                compiled=compiled,
                correct=False,
                error_log=str(entry.get("error_log", "")),
                max_abs_diff=entry.get("max_abs_diff"),
            )
        return ExecOutcome(
            report=report,
            compile_s=float(entry.get("compile_s", 0.0)),
            execute_s=float(entry.get("execute_s", 0.0)),
        )

    def profile(
        self, task: Task, candidate_source: str, round: int, metric_names: Sequence[str]
    ) -> ProfileOutcome:
        entry = self._entry(round)
        metrics = entry.get("profile")
        if metrics is None:
            raise ProfilerUnavailable(f"script has no profile for round {round}")
        export = export_from_metrics(
            kernel_id=str(entry.get("kernel_name", f"round{round}")),
            metrics={k: float(v) for k, v in metrics.items()},
            units=entry.get("profile_units", {}),
        )
        return ProfileOutcome(
            csv_text=serialize_profiler_csv(export),
            seconds=float(entry.get("profile_s", 0.0)),
        )


PROTOCOL_SCHEMA = "kernel-exec/v1"


class SubprocessExecutor:
    """Speaks the JSON-over-stdio protocol to the execution harness.

    One subprocess per request: the request document goes to stdin, the
    response document comes back on stdout.  Harness-internal failures
    (candidate does not build, outputs mismatch) arrive as ordinary
    responses; a broken or missing harness raises
    :class:`ExecutorUnavailable`.
    """

    def __init__(
        self,
        command: Optional[Sequence[str]] = None,
        tolerance: float = DEFAULT_TOLERANCE,
        warmup: int = 3,
        reps: int = 20,
        num_input_sets: int = 5,
        seed: int = 1234,
        build_timeout_s: float = 120.0,
        run_timeout_s: float = 60.0,
    ) -> None:
        self.command = list(command) if command else [sys.executable, "-m", "kernelharness"]
        self.tolerance = tolerance
        self.warmup = warmup
        self.reps = reps
        self.num_input_sets = num_input_sets
        self.seed = seed
        self.build_timeout_s = build_timeout_s
        self.run_timeout_s = run_timeout_s

    def _request(self, task: Task, candidate_source: str, mode: str) -> dict:
        return {
            "schema": PROTOCOL_SCHEMA,
            "mode": mode,
            "reference_source": task.reference_source,
            "candidate_source": candidate_source,
            "input_spec": list(task.input_spec),
            "init_spec": list(task.init_spec),
            "tolerance": self.tolerance,
            "warmup": self.warmup,
            "reps": self.reps,
            "num_input_sets": self.num_input_sets,
            "seed": self.seed,
            "build_timeout_s": self.build_timeout_s,
            "run_timeout_s": self.run_timeout_s,
        }

    def _roundtrip(self, request: dict) -> dict:
        deadline = self.build_timeout_s + self.run_timeout_s + 30.0
        try:
            proc = subprocess.run(
                self.command,
                input=json.dumps(request),
                capture_output=True,
                text=True,
                timeout=deadline,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ExecutorUnavailable(f"harness did not answer: {exc}") from exc
        try:
            response = json.loads(proc.stdout)
        except ValueError:
            tail = (proc.stderr or proc.stdout or "")[-2000:]
            raise ExecutorUnavailable(
                f"harness exited {proc.returncode} without a JSON response: {tail}"
            )
        if not response.get("ok", False):
            kind = response.get("kind", "")
            message = response.get("error", "harness reported an error")
            if kind == "ProfilerUnavailable":
                raise ProfilerUnavailable(message)
            raise ExecutorUnavailable(message)
        return response

    def test(self, task: Task, candidate_source: str, round: int) -> ExecOutcome:
        response = self._roundtrip(self._request(task, candidate_source, "test"))
        report = RunReport(
            compiled=bool(response["compiled"]),
            correct=bool(response["correct"]),
            error_log=str(response.get("error_log", "")),
            ref_latency_ms=response.get("ref_latency_ms"),
            kernel_latency_ms=response.get("kernel_latency_ms"),
            max_abs_diff=response.get("max_abs_diff"),
        )
        return ExecOutcome(
            report=report,
            compile_s=float(response.get("build_s", 0.0)),
            execute_s=float(response.get("run_s", 0.0)),
        )

    def profile(
        self, task: Task, candidate_source: str, round: int, metric_names: Sequence[str]
    ) -> ProfileOutcome:
        request = self._request(task, candidate_source, "profile")
        request["metric_names"] = list(metric_names)
        response = self._roundtrip(request)
        return ProfileOutcome(
            csv_text=str(response.get("profile_csv", "")),
            seconds=float(response.get("profile_s", 0.0)),
        )


class LeasedExecutor:
    """Serializes executor access when several workflows share one device."""

    def __init__(self, inner: Executor, lock: Optional[threading.Lock] = None) -> None:
        self._inner = inner
        self._lock = lock or threading.Lock()

    def test(self, task: Task, candidate_source: str, round: int) -> ExecOutcome:
        with self._lock:
            return self._inner.test(task, candidate_source, round)

    def profile(
        self, task: Task, candidate_source: str, round: int, metric_names: Sequence[str]
    ) -> ProfileOutcome:
        with self._lock:
            return self._inner.profile(task, candidate_source, round, metric_names)


# --------------------------------------------------------------------------- #
# configuration
# --------------------------------------------------------------------------- #


@dataclass
class WorkflowConfig:
    gpu: GPUSpec
    catalog: MetricCatalog = field(default_factory=default_catalog)
    max_rounds: int = DEFAULT_MAX_ROUNDS
    tolerance: float = DEFAULT_TOLERANCE
    budget_dollars: Optional[float] = None
    pricing: BackendPricing = field(default_factory=BackendPricing)
    few_base: str = ""
    few_new: str = ""

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


EventSink = Callable[[dict], None]


# --------------------------------------------------------------------------- #
# per-round context construction
# --------------------------------------------------------------------------- #


def decide_mode(report: RunReport) -> FeedbackMode:
    """CORRECTION for any failed gate, OPTIMIZATION for a correct kernel."""

    return FeedbackMode.OPTIMIZATION if report.correct else FeedbackMode.CORRECTION


def correction_problem_text(feedback: JudgeFeedback) -> str:
    assert feedback.correction is not None
    c = feedback.correction
    return (
        f"Critical issue: {c.critical_issue}\n"
        f"Why it matters: {c.why_it_matters}\n"
        f"Minimal fix hint: {c.minimal_fix_hint}"
    )


def optimization_suggestion_text(feedback: JudgeFeedback) -> str:
    assert feedback.optimization is not None
    o = feedback.optimization
    return (
        f"Bottleneck: {o.bottleneck}\n"
        f"Optimisation method: {o.optimisation_method}\n"
        f"Modification plan: {o.modification_plan}"
    )


def build_coder_context(
    round: int,
    task: Task,
    previous: Optional[RoundRecord],
    gpu: GPUSpec,
    few_base: str = "",
    few_new: str = "",
) -> tuple[PromptKind, dict[str, str]]:
    """Prompt kind plus placeholder map for the Coder at ``round``.

    Lightweight memory by construction: only the immediately preceding round
    is consulted, so the serialized context does not grow with the round
    index.  Round 1 gets the one-shot scaffold; later rounds get either the
    correction or the optimization template depending on the previous
    feedback (or a fixed self-refine note when feedback degraded).
    """

    if round == 1 or previous is None:
        return PromptKind.CODER_INITIAL, {
            "few_base": few_base,
            "few_new": few_new,
            "arch_src": task.reference_source,
        }

    feedback = previous.feedback
    if feedback is not None and feedback.mode is FeedbackMode.CORRECTION:
        return PromptKind.CODER_CORRECT, {
            "ERROR_LOG": previous.report.error_log,
            "CUDA_CODE": previous.candidate.source,
            "Problem": correction_problem_text(feedback),
        }
    if feedback is not None:
        from .hardware import format_gpu_items

        return PromptKind.CODER_OPTIMIZE, {
            "gpu_name": gpu.name,
            "gpu_arch": gpu.architecture,
            "gpu_items": format_gpu_items(gpu),
            "CUDA_CODE": previous.candidate.source,
            "optimization_suggestion": optimization_suggestion_text(feedback),
        }

    # Degraded round: no structured feedback to relay.
    if previous.report.correct:
        from .hardware import format_gpu_items

        return PromptKind.CODER_OPTIMIZE, {
            "gpu_name": gpu.name,
            "gpu_arch": gpu.architecture,
            "gpu_items": format_gpu_items(gpu),
            "CUDA_CODE": previous.candidate.source,
            "optimization_suggestion": SELF_REFINE_NOTE,
        }
    return PromptKind.CODER_CORRECT, {
        "ERROR_LOG": previous.report.error_log,
        "CUDA_CODE": previous.candidate.source,
        "Problem": SELF_REFINE_NOTE,
    }


def build_judge_context(
    mode: FeedbackMode,
    task: Task,
    candidate_source: str,
    report: RunReport,
    gpu: GPUSpec,
    profile: Optional[NCUProfile],
    catalog: MetricCatalog,
) -> tuple[PromptKind, dict[str, str]]:
    if mode is FeedbackMode.CORRECTION:
        return PromptKind.JUDGE_CORRECT, {
            "ERROR_LOG": report.error_log,
            "PYTORCH_CODE": task.reference_source,
            "CUDA_CODE": candidate_source,
        }
    assert profile is not None
    slots = format_hardware_feedback(gpu, profile, catalog)
    slots["python_code"] = task.reference_source
    slots["CUDA_CODE"] = candidate_source
    return PromptKind.JUDGE_OPTIMIZE, slots


# --------------------------------------------------------------------------- #
# the engine
# --------------------------------------------------------------------------- #


def run_workflow(
    task: Task,
    coder: LLMBackend,
    judge: LLMBackend,
    executor: Executor,
    config: WorkflowConfig,
    event_sink: Optional[EventSink] = None,
) -> WorkflowResult:
    """Run up to ``config.max_rounds`` refinement rounds for one task.

    A budget-cap breach stops the loop and returns the partial result with
    ``truncated=True``; a missing executor raises
    :class:`ExecutorUnavailable` — there is nothing meaningful to salvage.
    """

    emit = event_sink or (lambda event: None)
    ledger = CostLedger()
    records: list[RoundRecord] = []
    truncated = False

    for round_index in range(1, config.max_rounds + 1):
        previous = records[-1] if records else None
        kind, context = build_coder_context(
            round_index, task, previous, config.gpu, config.few_base, config.few_new
        )
        emit({"event": "coder_prompted", "task": task.id, "round": round_index, "kind": kind.value})
        try:
            reply = call_agent(
                coder,
                kind,
                context,
                round=round_index,
                ledger=ledger,
                pricing=config.pricing,
                budget_dollars=config.budget_dollars,
            )
        except BudgetExceeded as exc:
            emit({"event": "budget_stop", "task": task.id, "round": round_index, "detail": str(exc)})
            truncated = True
            break

        source = extract_kernel_code(reply.text)
        outcome = executor.test(task, source, round_index)
        report = outcome.report
        ledger.record(CostEvent(phase="compile", seconds=outcome.compile_s))
        ledger.record(CostEvent(phase="execute", seconds=outcome.execute_s))
        if report.correct and report.max_abs_diff is not None and report.max_abs_diff > config.tolerance:
            raise ExecutorUnavailable(
                f"executor reported correct=True but max_abs_diff {report.max_abs_diff} "
                f"exceeds tolerance {config.tolerance}"
            )
        candidate = KernelCandidate(
            task_id=task.id,
            round=round_index,
            source=source,
            status=report.status(),
            latency_ms=report.kernel_latency_ms if report.correct else None,
        )
        emit(
            {
                "event": "candidate_tested",
                "task": task.id,
                "round": round_index,
                "status": candidate.status.value,
            }
        )

        profile: Optional[NCUProfile] = None
        if report.correct:
            try:
                profiled = executor.profile(task, source, round_index, list(config.catalog))
                ledger.record(CostEvent(phase="profile", seconds=profiled.seconds))
                export = parse_profiler_csv(profiled.csv_text)
                profile, missing = filter_to_subset(export, config.catalog)
                if missing:
                    emit(
                        {
                            "event": "metrics_missing",
                            "task": task.id,
                            "round": round_index,
                            "names": list(missing),
                        }
                    )
            except ProfilerUnavailable as exc:
                emit({"event": "profiler_unavailable", "task": task.id, "round": round_index, "detail": str(exc)})
                profile = None

        feedback: Optional[JudgeFeedback] = None
        if round_index < config.max_rounds:
            mode = decide_mode(report)
            if mode is FeedbackMode.OPTIMIZATION and profile is None:
                # Profiler gone: no grounded optimization feedback possible.
                emit({"event": "judge_skipped", "task": task.id, "round": round_index})
            else:
                judge_kind, judge_context = build_judge_context(
                    mode, task, source, report, config.gpu, profile, config.catalog
                )
                try:
                    feedback = ask_judge(
                        judge,
                        judge_kind,
                        judge_context,
                        mode,
                        round=round_index,
                        ledger=ledger,
                        pricing=config.pricing,
                        budget_dollars=config.budget_dollars,
                    )
                except BudgetExceeded as exc:
                    emit({"event": "budget_stop", "task": task.id, "round": round_index, "detail": str(exc)})
                    records.append(
                        RoundRecord(
                            round=round_index,
                            candidate=candidate,
                            report=report,
                            feedback=None,
                            profile=profile,
                        )
                    )
                    truncated = True
                    break
                if feedback is None:
                    emit({"event": "judge_degraded", "task": task.id, "round": round_index})

        records.append(
            RoundRecord(
                round=round_index,
                candidate=candidate,
                report=report,
                feedback=feedback,
                profile=profile,
            )
        )
        emit(
            {
                "event": "round_done",
                "task": task.id,
                "round": round_index,
                "feedback": feedback.mode.value if feedback else None,
            }
        )

    best_record = pick_best(records)
    result = WorkflowResult(
        task_id=task.id,
        rounds=tuple(records),
        best=best_record.candidate if best_record else None,
        speedup=best_record.report.speedup if best_record else None,
        cost=ledger,
        truncated=truncated,
    )
    emit(
        {
            "event": "workflow_done",
            "task": task.id,
            "rounds_used": result.rounds_used,
            "best_round": best_record.round if best_record else None,
            "truncated": truncated,
        }
    )
    return result


# --------------------------------------------------------------------------- #
# serialization and suite running
# --------------------------------------------------------------------------- #


def _feedback_to_dict(feedback: Optional[JudgeFeedback]) -> Optional[dict]:
    if feedback is None:
        return None
    if feedback.mode is FeedbackMode.CORRECTION:
        assert feedback.correction is not None
        return {
            "mode": feedback.mode.value,
            "critical_issue": feedback.correction.critical_issue,
            "why_it_matters": feedback.correction.why_it_matters,
            "minimal_fix_hint": feedback.correction.minimal_fix_hint,
        }
    assert feedback.optimization is not None
    return {
        "mode": feedback.mode.value,
        "bottleneck": feedback.optimization.bottleneck,
        "optimisation method": feedback.optimization.optimisation_method,
        "modification plan": feedback.optimization.modification_plan,
    }


def result_to_dict(result: WorkflowResult) -> dict:
    return {
        "task_id": result.task_id,
        "rounds_used": result.rounds_used,
        "truncated": result.truncated,
        "best_round": result.best.round if result.best else None,
        "speedup": result.speedup,
        "rounds": [
            {
                "round": r.round,
                "status": r.candidate.status.value,
                "source": r.candidate.source,
                "latency_ms": r.candidate.latency_ms,
                "report": {
                    "compiled": r.report.compiled,
                    "correct": r.report.correct,
                    "error_log": r.report.error_log,
                    "ref_latency_ms": r.report.ref_latency_ms,
                    "kernel_latency_ms": r.report.kernel_latency_ms,
                    "max_abs_diff": r.report.max_abs_diff,
                },
                "feedback": _feedback_to_dict(r.feedback),
                "profile": (
                    {
                        "kernel_id": r.profile.kernel_id,
                        "metrics": dict(r.profile.metrics),
                        "units": dict(r.profile.units),
                    }
                    if r.profile
                    else None
                ),
            }
            for r in result.rounds
        ],
        "cost": result.cost.to_dict(),
    }


def serialize_result(result: WorkflowResult) -> str:
    """Canonical result-file text: sorted keys, stable indentation."""

    return json.dumps(result_to_dict(result), indent=2, sort_keys=True) + "\n"


def result_filename(task_id: str) -> str:
    return task_id.replace("/", "_").replace("\\", "_") + ".json"


def write_result_file(result: WorkflowResult, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / result_filename(result.task_id)
    path.write_text(serialize_result(result))
    return path


class EventLog:
    """Append-only JSONL event stream; one line per state transition."""

    def __init__(self, path: str | Path) -> None:
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def __call__(self, event: dict) -> None:
        line = json.dumps(event, sort_keys=True)
        with self._lock:
            with self._path.open("a") as handle:
                handle.write(line + "\n")


BackendFactory = Callable[[Task], tuple[LLMBackend, LLMBackend]]


def run_suite(
    tasks: Sequence[Task],
    backend_factory: BackendFactory,
    executor: Executor,
    config: WorkflowConfig,
    out_dir: str | Path,
    jobs: int = 1,
    resume: bool = False,
    event_sink: Optional[EventSink] = None,
) -> list[Path]:
    """Run every task, writing one result file each; returns the file paths.

    With ``jobs > 1`` tasks run on worker threads while executor access is
    serialized through a lease (one device, one kernel at a time).  With
    ``resume=True`` tasks whose result file already exists are skipped, so an
    interrupted campaign continues where it stopped.
    """

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit = event_sink or (lambda event: None)
    leased = LeasedExecutor(executor) if jobs > 1 else executor

    todo: list[Task] = []
    paths: list[Path] = []
    for task in tasks:
        target = out_dir / result_filename(task.id)
        if resume and target.exists():
            emit({"event": "task_skipped", "task": task.id, "reason": "resume"})
            paths.append(target)
        else:
            todo.append(task)

    def _one(task: Task) -> Path:
        coder, judge = backend_factory(task)
        result = run_workflow(task, coder, judge, leased, config, event_sink=event_sink)
        return write_result_file(result, out_dir)

    if jobs <= 1:
        for task in todo:
            paths.append(_one(task))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            paths.extend(pool.map(_one, todo))

    return sorted(paths)
