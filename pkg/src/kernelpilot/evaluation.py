"""Suite scoring, fake-kernel linting, and cost reporting.

Scores are per-task speedups with failed tasks zero-filled, so every summary
statistic is computed over the same full-length vector and a task can never
help its suite by failing.  The linter is a token/AST audit aid that flags
submissions which dodge writing a device kernel; it is deliberately
syntactic — false negatives are acceptable, silent fake kernels are not.
"""

from __future__ import annotations

import ast
import json
import textwrap
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import CostEvent, CostLedger, COST_PHASES


class EvaluationError(Exception):
    pass


class EmptySuite(EvaluationError):
    """A summary over zero tasks has no defined statistics."""


# --------------------------------------------------------------------------- #
# suite summary
# --------------------------------------------------------------------------- #

#: A task counts toward Fast1 when its speedup strictly exceeds this.
FAST1_THRESHOLD = 1.0


@dataclass(frozen=True)
class SuiteSummary:
    n_tasks: int
    correctness_pct: float
    mean_speedup: float
    median_speedup: float
    p75_speedup: float
    fast1_pct: float
    fast1_denominator: str  # "all" | "correct"


def summarize(scores: Sequence[float], fast1_denominator: str = "all") -> SuiteSummary:
    """Suite statistics over per-task scores (speedup, 0.0 for failed).

    Mean/median/75th-percentile are taken over the zero-filled vector;
    Fast1 counts tasks with speedup > 1.  Its denominator defaults to *all*
    tasks (so Fast1 can never exceed correctness); ``"correct"`` exposes the
    other reading, restricted to tasks that produced a correct kernel.
    """

    if not scores:
        raise EmptySuite("no task scores to summarize")
    if fast1_denominator not in ("all", "correct"):
        raise EvaluationError(f"fast1_denominator must be 'all' or 'correct', got {fast1_denominator!r}")
    values = np.asarray(scores, dtype=float)
    if (values < 0).any():
        raise EvaluationError("scores must be non-negative")
    n = len(values)
    n_correct = int((values > 0).sum())
    n_fast = int((values > FAST1_THRESHOLD).sum())
    denom = n if fast1_denominator == "all" else n_correct
    fast1 = 100.0 * n_fast / denom if denom else 0.0
    return SuiteSummary(
        n_tasks=n,
        correctness_pct=100.0 * n_correct / n,
        mean_speedup=float(values.mean()),
        median_speedup=float(np.median(values)),
        p75_speedup=float(np.percentile(values, 75)),
        fast1_pct=fast1,
        fast1_denominator=fast1_denominator,
    )


def render_suite_row(summary: SuiteSummary) -> str:
    """One benchmark-table row: Correct | Median | 75% | Perf | Fast1."""

    return (
        f"{summary.correctness_pct:.1f}% | {summary.median_speedup:.3f} | "
        f"{summary.p75_speedup:.3f} | {summary.mean_speedup:.3f} | "
        f"{summary.fast1_pct:.1f}%"
    )


def render_suite_table(summary: SuiteSummary, label: str = "suite") -> str:
    header = "Method | Correct | Median | 75% | Perf | Fast1"
    return "\n".join([header, f"{label} | {render_suite_row(summary)}"]) + "\n"


def score_from_result(raw: dict) -> float:
    """Per-task score from a result-file record: best speedup, else 0."""

    speedup = raw.get("speedup")
    return float(speedup) if speedup else 0.0


def scores_from_result_files(paths: Iterable[str | Path]) -> list[float]:
    return [score_from_result(json.loads(Path(p).read_text())) for p in sorted(Path(p) for p in paths)]


# --------------------------------------------------------------------------- #
# fake-kernel linter
# --------------------------------------------------------------------------- #


class LintRule(Enum):
    NO_DEVICE_KERNEL = "NO_DEVICE_KERNEL"
    TRY_EXCEPT_FALLBACK = "TRY_EXCEPT_FALLBACK"
    LOAD_FAIL_FALLBACK = "LOAD_FAIL_FALLBACK"


@dataclass(frozen=True)
class LintFinding:
    rule: LintRule
    line_start: int
    line_end: int
    excerpt: str


_DEVICE_KERNEL_TOKEN = "__global__"
_MODULE_HANDLE_HINTS = ("module", "cuda", "ext", "lib")


def _is_torch_call(node: ast.AST) -> bool:
    """True for calls whose attribute chain is rooted at the host framework
    (``torch.bmm(...)``, ``torch.nn.functional.relu(...)``)."""

    if not isinstance(node, ast.Call):
        return False
    func = node.func
    while isinstance(func, ast.Attribute):
        func = func.value
    return isinstance(func, ast.Name) and func.id == "torch"


def _contains_torch_call(nodes: Iterable[ast.AST]) -> Optional[ast.AST]:
    for node in nodes:
        for child in ast.walk(node):
            if _is_torch_call(child):
                return child
    return None


def _handle_name(node: ast.AST) -> str:
    if isinstance(node, ast.Attribute):
        return node.attr
    if isinstance(node, ast.Name):
        return node.id
    return ""


def _looks_like_module_handle(name: str) -> bool:
    lowered = name.lower()
    return any(hint in lowered for hint in _MODULE_HANDLE_HINTS)


def _guard_target(test: ast.AST) -> str:
    """Name guarded by a load-failure check (``x is None`` / ``not x``)."""

    if isinstance(test, ast.Compare) and len(test.ops) == 1 and isinstance(test.ops[0], ast.Is):
        comparator = test.comparators[0]
        if isinstance(comparator, ast.Constant) and comparator.value is None:
            return _handle_name(test.left)
    if isinstance(test, ast.UnaryOp) and isinstance(test.op, ast.Not):
        return _handle_name(test.operand)
    return ""


def _excerpt(source_lines: Sequence[str], start: int, end: int, limit: int = 4) -> str:
    chunk = source_lines[start - 1 : min(end, start - 1 + limit)]
    return "\n".join(line.rstrip() for line in chunk)


def _parse_lenient(source: str) -> Optional[ast.Module]:
    for text in (source, textwrap.dedent(source)):
        try:
            return ast.parse(text)
        except SyntaxError:
            continue
    return None


def lint_kernel(source: str) -> tuple[LintFinding, ...]:
    """Audit a submission for fake-kernel patterns.

    Token pass: a submission with no ``__global__`` device-kernel definition
    anywhere (including inside CUDA source strings) is NO_DEVICE_KERNEL.
    AST pass: an exception handler that answers with a host-framework
    operator is TRY_EXCEPT_FALLBACK; a load-failure guard
    (``if <module-ish> is None: return torch...``) is LOAD_FAIL_FALLBACK.
    Sources that do not parse still get the token pass.
    """

    findings: list[LintFinding] = []
    lines = source.splitlines() or [""]

    if _DEVICE_KERNEL_TOKEN not in source:
        findings.append(
            LintFinding(
                rule=LintRule.NO_DEVICE_KERNEL,
                line_start=1,
                line_end=len(lines),
                excerpt="",
            )
        )

    tree = _parse_lenient(source)
    if tree is not None:
        for node in ast.walk(tree):
            if isinstance(node, ast.Try):
                for handler in node.handlers:
                    hit = _contains_torch_call(handler.body)
                    if hit is not None:
                        findings.append(
                            LintFinding(
                                rule=LintRule.TRY_EXCEPT_FALLBACK,
                                line_start=handler.lineno,
                                line_end=getattr(handler, "end_lineno", handler.lineno),
                                excerpt=_excerpt(lines, handler.lineno, getattr(handler, "end_lineno", handler.lineno)),
                            )
                        )
                        break
            elif isinstance(node, ast.If):
                target = _guard_target(node.test)
                if target and _looks_like_module_handle(target):
                    returns = [n for n in node.body if isinstance(n, ast.Return) and n.value is not None]
                    if _contains_torch_call(returns):
                        findings.append(
                            LintFinding(
                                rule=LintRule.LOAD_FAIL_FALLBACK,
                                line_start=node.lineno,
                                line_end=getattr(node, "end_lineno", node.lineno),
                                excerpt=_excerpt(lines, node.lineno, getattr(node, "end_lineno", node.lineno)),
                            )
                        )

    findings.sort(key=lambda f: (f.line_start, f.rule.value))
    return tuple(findings)


def lint_file(path: str | Path) -> tuple[LintFinding, ...]:
    return lint_kernel(Path(path).read_text())


# --------------------------------------------------------------------------- #
# cost reporting
# --------------------------------------------------------------------------- #


def record_cost(ledger: CostLedger, event: CostEvent) -> None:
    """Append one cost event (thin alias kept for API symmetry)."""

    ledger.record(event)


def render_cost_row(ledger: CostLedger) -> str:
    """Compact cost line: total dollars (2 dp) and total minutes (1 dp)."""

    minutes = ledger.total_seconds / 60.0
    return f"API Cost ${ledger.api_dollars:.2f}, Time {minutes:.1f} min"


def report_cost(ledger: CostLedger) -> str:
    """Per-phase wall-clock breakdown plus dollar and token totals."""

    by_phase = ledger.wall_clock_s
    lines = ["phase      minutes"]
    for phase in COST_PHASES:
        lines.append(f"{phase:<10} {by_phase[phase] / 60.0:.1f}")
    lines.append(f"{'total':<10} {ledger.total_seconds / 60.0:.1f}")
    lines.append(f"API cost   ${ledger.api_dollars:.2f}")
    lines.append(f"tokens     {ledger.prompt_tokens} prompt, {ledger.completion_tokens} completion")
    return "\n".join(lines) + "\n"
