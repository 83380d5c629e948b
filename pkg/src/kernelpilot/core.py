"""Shared domain types for the kernel-optimization workflow.

Everything in this module is a plain value object: validation happens at
construction time and nothing here performs I/O, talks to a model, or touches
a GPU.  The orchestration modules (workflow, gateway, mining, evaluation)
build on these types and never redefine them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Sequence


# --------------------------------------------------------------------------- #
# errors
# --------------------------------------------------------------------------- #


class DomainError(Exception):
    """Base class for domain-level validation failures."""


class MissingField(DomainError):
    """A required field is absent from a raw task record."""


class BadLevel(DomainError):
    """Task level is outside the supported benchmark levels {1, 2, 3}."""


class EmptySource(DomainError):
    """A source-code payload (reference or kernel) is absent or blank."""


VALID_LEVELS = (1, 2, 3)

#: Default numerical tolerance for the output-match test (max abs diff).
DEFAULT_TOLERANCE = 1e-4

#: Default number of refinement rounds.
DEFAULT_MAX_ROUNDS = 10


# --------------------------------------------------------------------------- #
# tasks
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Task:
    """One benchmark problem: a reference model plus how to build its inputs.

    ``reference_source`` is the ground-truth host-framework module text
    (defines ``Model``, ``get_inputs`` and, when needed, ``get_init_inputs``).
    ``input_spec`` / ``init_spec`` describe the randomized input sets and the
    constructor arguments; they are carried opaquely and interpreted by the
    execution harness.
    """

    id: str
    level: int
    description: str
    reference_source: str
    input_spec: tuple[Mapping[str, Any], ...] = ()
    init_spec: tuple[Any, ...] = ()

    def __post_init__(self) -> None:
        if not self.id:
            raise MissingField("task id must be non-empty")
        if self.level not in VALID_LEVELS:
            raise BadLevel(f"level must be one of {VALID_LEVELS}, got {self.level!r}")
        if not self.reference_source.strip():
            raise EmptySource(f"task {self.id}: reference_source is empty")


def validate_task(raw: Mapping[str, Any]) -> Task:
    """Check a raw parsed task record and return a :class:`Task`.

    Raises :class:`MissingField` for an absent id/level, :class:`BadLevel`
    for an unsupported level, and :class:`EmptySource` when the reference
    source is missing or blank.
    """

    if "id" not in raw or not raw["id"]:
        raise MissingField("task record has no id")
    if "level" not in raw:
        raise MissingField(f"task {raw['id']}: no level")
    level = raw["level"]
    if not isinstance(level, int) or isinstance(level, bool) or level not in VALID_LEVELS:
        raise BadLevel(f"task {raw['id']}: level must be one of {VALID_LEVELS}, got {level!r}")
    source = raw.get("reference_source", "")
    if not isinstance(source, str) or not source.strip():
        raise EmptySource(f"task {raw['id']}: reference_source is missing or empty")
    return Task(
        id=str(raw["id"]),
        level=level,
        description=str(raw.get("description", "")),
        reference_source=source,
        input_spec=tuple(raw.get("input_spec", ()) or ()),
        init_spec=tuple(raw.get("init_spec", ()) or ()),
    )


# --------------------------------------------------------------------------- #
# candidates and run reports
# --------------------------------------------------------------------------- #


class CandidateStatus(Enum):
    GENERATED = "GENERATED"
    COMPILE_FAIL = "COMPILE_FAIL"
    EXEC_FAIL = "EXEC_FAIL"
    CORRECT = "CORRECT"


@dataclass(frozen=True)
class KernelCandidate:
    """One generated kernel attempt.  ``latency_ms`` exists iff CORRECT."""

    task_id: str
    round: int
    source: str
    status: CandidateStatus
    latency_ms: Optional[float] = None

    def __post_init__(self) -> None:
        if self.round < 1:
            raise DomainError(f"round index starts at 1, got {self.round}")
        if not self.source.strip():
            raise EmptySource(f"candidate {self.task_id} round {self.round}: empty source")
        if self.status is CandidateStatus.CORRECT:
            if self.latency_ms is None:
                raise DomainError("CORRECT candidate must carry a latency")
            if not (self.latency_ms > 0 and math.isfinite(self.latency_ms)):
                raise DomainError(f"latency must be finite and positive, got {self.latency_ms}")
        elif self.latency_ms is not None:
            raise DomainError(f"{self.status.value} candidate must not carry a latency")


@dataclass(frozen=True)
class RunReport:
    """Outcome of the two-stage correctness test for one candidate.

    Stage one is compilation, stage two runs the candidate against the
    reference on seeded inputs.  Latencies are measured only for candidates
    that pass both stages.
    """

    compiled: bool
    correct: bool
    error_log: str = ""
    ref_latency_ms: Optional[float] = None
    kernel_latency_ms: Optional[float] = None
    max_abs_diff: Optional[float] = None

    def __post_init__(self) -> None:
        if self.correct and not self.compiled:
            raise DomainError("a correct candidate is necessarily compiled")
        has_lat = self.ref_latency_ms is not None and self.kernel_latency_ms is not None
        if self.correct != has_lat:
            raise DomainError("latencies are present iff the run is correct")
        for name in ("ref_latency_ms", "kernel_latency_ms"):
            value = getattr(self, name)
            if value is not None and not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be finite and positive, got {value}")
        if self.max_abs_diff is not None:
            if not (self.max_abs_diff >= 0 and math.isfinite(self.max_abs_diff)):
                raise DomainError(f"max_abs_diff must be finite and >= 0, got {self.max_abs_diff}")

    @property
    def speedup(self) -> Optional[float]:
        if self.ref_latency_ms is None or self.kernel_latency_ms is None:
            return None
        return self.ref_latency_ms / self.kernel_latency_ms

    def status(self) -> CandidateStatus:
        if not self.compiled:
            return CandidateStatus.COMPILE_FAIL
        if not self.correct:
            return CandidateStatus.EXEC_FAIL
        return CandidateStatus.CORRECT


# --------------------------------------------------------------------------- #
# GPU specs and profiler snapshots
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class GPUDetail:
    """One line of a device datasheet: label, numeric value, display unit."""

    label: str
    value: float
    unit: str = ""

    def __post_init__(self) -> None:
        if not self.label:
            raise DomainError("detail label must be non-empty")
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise DomainError(f"detail {self.label}: value must be finite and >= 0")


@dataclass(frozen=True)
class GPUSpec:
    """Static datasheet for a target device, used to ground Judge prompts."""

    name: str
    architecture: str
    details: tuple[GPUDetail, ...] = ()

    def __post_init__(self) -> None:
        if not self.name:
            raise DomainError("GPU name must be non-empty")
        if not self.architecture:
            raise DomainError(f"GPU {self.name}: architecture must be non-empty")
        labels = [d.label for d in self.details]
        if len(labels) != len(set(labels)):
            raise DomainError(f"GPU {self.name}: duplicate detail labels")


@dataclass(frozen=True)
class NCUProfile:
    """A curated slice of profiler counters for one kernel launch.

    ``metrics`` maps metric name to its (finite) value in the unit the
    profiler reported; ``units`` carries those unit strings where present.
    """

    kernel_id: str
    metrics: Mapping[str, float]
    units: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, value in self.metrics.items():
            if not math.isfinite(value):
                raise DomainError(f"metric {name}: value must be finite, got {value!r}")


# --------------------------------------------------------------------------- #
# judge feedback
# --------------------------------------------------------------------------- #


class FeedbackMode(Enum):
    CORRECTION = "CORRECTION"
    OPTIMIZATION = "OPTIMIZATION"


@dataclass(frozen=True)
class CorrectionFeedback:
    critical_issue: str
    why_it_matters: str
    minimal_fix_hint: str

    def __post_init__(self) -> None:
        for name in ("critical_issue", "why_it_matters", "minimal_fix_hint"):
            if not getattr(self, name).strip():
                raise DomainError(f"correction feedback: {name} is empty")


@dataclass(frozen=True)
class OptimizationFeedback:
    bottleneck: str
    optimisation_method: str
    modification_plan: str

    def __post_init__(self) -> None:
        for name in ("bottleneck", "optimisation_method", "modification_plan"):
            if not getattr(self, name).strip():
                raise DomainError(f"optimization feedback: {name} is empty")


@dataclass(frozen=True)
class JudgeFeedback:
    """Structured Judge output; exactly one payload, matching ``mode``."""

    mode: FeedbackMode
    correction: Optional[CorrectionFeedback] = None
    optimization: Optional[OptimizationFeedback] = None

    def __post_init__(self) -> None:
        if self.mode is FeedbackMode.CORRECTION:
            if self.correction is None or self.optimization is not None:
                raise DomainError("CORRECTION feedback must carry exactly a correction payload")
        else:
            if self.optimization is None or self.correction is not None:
                raise DomainError("OPTIMIZATION feedback must carry exactly an optimization payload")


# --------------------------------------------------------------------------- #
# cost accounting
# --------------------------------------------------------------------------- #

COST_PHASES = ("generate", "judge", "compile", "execute", "profile")


@dataclass(frozen=True)
class CostEvent:
    """One billable or timed step, attributed to a workflow phase."""

    phase: str
    seconds: float = 0.0
    dollars: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self) -> None:
        if self.phase not in COST_PHASES:
            raise DomainError(f"unknown cost phase {self.phase!r}, expected one of {COST_PHASES}")
        if self.seconds < 0 or self.dollars < 0:
            raise DomainError("cost event amounts must be non-negative")
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise DomainError("token counts must be non-negative")


class CostLedger:
    """Append-only account of spend: dollars, tokens, and wall-clock seconds.

    Totals are always recomputed from the entry list, so the invariant
    "totals equal the sum of per-call entries" holds by construction; tests
    still verify it against independent summation to 1e-9 relative error.
    """

    def __init__(self, entries: Sequence[CostEvent] = ()) -> None:
        self._entries: list[CostEvent] = list(entries)

    def record(self, event: CostEvent) -> None:
        self._entries.append(event)

    @property
    def entries(self) -> tuple[CostEvent, ...]:
        return tuple(self._entries)

    @property
    def api_dollars(self) -> float:
        return math.fsum(e.dollars for e in self._entries)

    @property
    def prompt_tokens(self) -> int:
        return sum(e.prompt_tokens for e in self._entries)

    @property
    def completion_tokens(self) -> int:
        return sum(e.completion_tokens for e in self._entries)

    @property
    def wall_clock_s(self) -> dict[str, float]:
        by_phase = {phase: 0.0 for phase in COST_PHASES}
        for phase in COST_PHASES:
            by_phase[phase] = math.fsum(e.seconds for e in self._entries if e.phase == phase)
        return by_phase

    @property
    def total_seconds(self) -> float:
        return math.fsum(e.seconds for e in self._entries)

    def merge(self, other: "CostLedger") -> None:
        self._entries.extend(other.entries)

    def to_dict(self) -> dict[str, Any]:
        return {
            "api_dollars": self.api_dollars,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "wall_clock_s": self.wall_clock_s,
            "entries": [
                {
                    "phase": e.phase,
                    "seconds": e.seconds,
                    "dollars": e.dollars,
                    "prompt_tokens": e.prompt_tokens,
                    "completion_tokens": e.completion_tokens,
                }
                for e in self._entries
            ],
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "CostLedger":
        entries = [CostEvent(**entry) for entry in raw.get("entries", [])]
        return cls(entries)


# --------------------------------------------------------------------------- #
# round records and workflow results
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class RoundRecord:
    """Everything produced in one refinement round.

    ``profile`` exists only for correct candidates (and for every correct
    candidate when the profiler is healthy); ``feedback`` is absent only on
    the final round (the last candidate is tested but gets no Judge pass) or
    when judging degraded.
    """

    round: int
    candidate: KernelCandidate
    report: RunReport
    feedback: Optional[JudgeFeedback] = None
    profile: Optional[NCUProfile] = None

    def __post_init__(self) -> None:
        if self.round != self.candidate.round:
            raise DomainError(f"record round {self.round} != candidate round {self.candidate.round}")
        # Only correct kernels are ever profiled; a correct round may still
        # lack a profile when the profiler itself is unavailable (degraded).
        if self.profile is not None and not self.report.correct:
            raise DomainError("only a correct round may carry a profile")
        if self.feedback is not None:
            expected = FeedbackMode.OPTIMIZATION if self.report.correct else FeedbackMode.CORRECTION
            if self.feedback.mode is not expected:
                raise DomainError(
                    f"round {self.round}: feedback mode {self.feedback.mode.value} does not "
                    f"match report correctness"
                )


@dataclass(frozen=True)
class WorkflowResult:
    """Final outcome of one task's refinement run.

    ``best`` is the fastest correct candidate (earliest round on ties) and is
    absent iff no round produced a correct kernel; ``speedup`` mirrors that.
    ``truncated`` marks runs cut short by a budget cap.
    """

    task_id: str
    rounds: tuple[RoundRecord, ...]
    best: Optional[KernelCandidate]
    speedup: Optional[float]
    cost: CostLedger
    truncated: bool = False

    def __post_init__(self) -> None:
        correct = [r for r in self.rounds if r.report.correct]
        if not correct:
            if self.best is not None or self.speedup is not None:
                raise DomainError("no correct rounds: best/speedup must be absent")
            return
        if self.best is None or self.speedup is None:
            raise DomainError("correct rounds exist: best/speedup must be present")
        expected = min(correct, key=lambda r: (r.candidate.latency_ms, r.round))
        if self.best.round != expected.round:
            raise DomainError(
                f"best must be the fastest correct candidate (round {expected.round}), "
                f"got round {self.best.round}"
            )

    @property
    def rounds_used(self) -> int:
        return len(self.rounds)


def pick_best(rounds: Sequence[RoundRecord]) -> Optional[RoundRecord]:
    """Fastest correct round; ties broken toward the earliest round."""

    correct = [r for r in rounds if r.report.correct]
    if not correct:
        return None
    return min(correct, key=lambda r: (r.candidate.latency_ms, r.round))
