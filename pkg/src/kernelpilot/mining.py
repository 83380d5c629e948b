"""Offline mining of profiler metrics that track kernel runtime.

The pipeline distills a task-agnostic metric subset out of archived kernel
samples in three stages:

1. per task, keep the 5 fastest and 5 slowest correct kernels (the extremes
   carry the most contrast);
2. per task, drop aliases/collinear counters and rank the rest by absolute
   Pearson correlation between metric value and runtime, keeping the Top-20;
3. across tasks, keep metrics that recur in Top-20 lists (>= 2 tasks), are
   sign-consistent, and whose global score — the mean of |r| over every task
   where the metric was profiled — strictly exceeds the 75th percentile of
   all candidate scores.

Everything is deterministic: ties break toward the lexicographically-first
metric name, and percentile uses inclusive linear interpolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .hardware import parse_profiler_csv

TOP_K = 20
EXTREMES_PER_SIDE = 5
DEFAULT_COLLINEARITY = 0.999
DEFAULT_PERCENTILE = 75.0
MIN_TASKS_APPEARED = 2


class MiningError(Exception):
    """Base class for metric-mining failures."""


class ZeroVariance(MiningError):
    """Pearson correlation is undefined for a constant vector."""


class TooFewSamples(MiningError):
    """A task offers fewer samples than the extremes step needs."""


class NoTasks(MiningError):
    """The sample archive holds too few tasks to consolidate."""


# --------------------------------------------------------------------------- #
# primitives
# --------------------------------------------------------------------------- #


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient of two equal-length vectors.

    r = sum((x-mx)(y-my)) / sqrt(sum((x-mx)^2) * sum((y-my)^2))

    Raises :class:`ZeroVariance` when either vector is constant and
    :class:`TooFewSamples` for fewer than two points.  The result is clamped
    to [-1, 1] to absorb last-ulp floating drift.
    """

    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape != ys.shape:
        raise MiningError(f"length mismatch: {xs.shape} vs {ys.shape}")
    if xs.size < 2:
        raise TooFewSamples(f"need at least 2 points, got {xs.size}")
    xc = xs - xs.mean()
    yc = ys - ys.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("constant vector has no defined correlation")
    r = float(np.dot(xc, yc)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class KernelSample:
    """One archived correct kernel: its runtime and profiled counters."""

    kernel_id: str
    runtime_ms: float
    metrics: Mapping[str, float]

    def __post_init__(self) -> None:
        if not (self.runtime_ms > 0 and math.isfinite(self.runtime_ms)):
            raise MiningError(f"sample {self.kernel_id}: runtime must be finite and positive")


def select_extremes(
    samples: Sequence[KernelSample], per_side: int = EXTREMES_PER_SIDE
) -> tuple[KernelSample, ...]:
    """The ``per_side`` fastest plus ``per_side`` slowest samples by runtime.

    Input order does not matter; output is sorted by (runtime, kernel_id).
    Exactly ``2 * per_side`` samples is the identity (everything returned).
    """

    needed = 2 * per_side
    if len(samples) < needed:
        raise TooFewSamples(f"need at least {needed} samples, got {len(samples)}")
    ordered = sorted(samples, key=lambda s: (s.runtime_ms, s.kernel_id))
    return tuple(ordered[:per_side] + ordered[-per_side:])


# --------------------------------------------------------------------------- #
# per-task ranking
# --------------------------------------------------------------------------- #


def metric_vectors(samples: Sequence[KernelSample]) -> dict[str, tuple[float, ...]]:
    """Per-metric value vectors over samples, restricted to names present in
    every sample (the profiler reports a consistent set, but be safe)."""

    if not samples:
        return {}
    common = set(samples[0].metrics)
    for sample in samples[1:]:
        common &= set(sample.metrics)
    first = samples[0].metrics
    return {
        name: tuple(float(sample.metrics[name]) for sample in samples)
        for name in first
        if name in common
    }


def dedupe_aliases(
    vectors: Mapping[str, Sequence[float]], threshold: float = DEFAULT_COLLINEARITY
) -> dict[str, tuple[float, ...]]:
    """Prune aliases and near-duplicate counters.

    Zero-variance vectors are dropped outright.  Among pairs whose value
    vectors correlate with |r| > ``threshold``, only the lexicographically
    first name survives.  Names are examined in sorted order so the outcome
    does not depend on input order; the returned mapping preserves the input
    iteration order of the survivors.
    """

    alive: list[str] = []
    for name in sorted(vectors):
        vec = vectors[name]
        if len(set(vec)) <= 1:
            continue
        duplicate = False
        for kept in alive:
            try:
                r = pearson(vectors[kept], vec)
            except ZeroVariance:  # pragma: no cover - constants filtered above
                continue
            if abs(r) > threshold:
                duplicate = True
                break
        if not duplicate:
            alive.append(name)
    survivors = set(alive)
    return {name: tuple(float(v) for v in vec) for name, vec in vectors.items() if name in survivors}


def correlations_to_runtime(samples: Sequence[KernelSample]) -> dict[str, float]:
    """Pearson r of every profiled metric against runtime.

    Zero-variance metrics are excluded from the result (their correlation is
    undefined, so they cannot be ranked).
    """

    runtimes = [s.runtime_ms for s in samples]
    out: dict[str, float] = {}
    for name, vec in metric_vectors(samples).items():
        try:
            out[name] = pearson(vec, runtimes)
        except ZeroVariance:
            continue
    return out


def rank_by_correlation(correlations: Mapping[str, float]) -> list[tuple[str, float]]:
    """Sort metrics by |r| descending; equal |r| breaks by name ascending."""

    return sorted(correlations.items(), key=lambda item: (-abs(item[1]), item[0]))


def top20_for_task(
    samples: Sequence[KernelSample],
    limit: int = TOP_K,
    restrict_to: Optional[Iterable[str]] = None,
) -> tuple[tuple[str, float], ...]:
    """The task's Top-``limit`` metrics by absolute runtime correlation.

    ``restrict_to`` names the metrics eligible for ranking (normally the
    survivors of :func:`dedupe_aliases`; passing None ranks everything, which
    callers use when the sample set is already alias-free).
    """

    correlations = correlations_to_runtime(samples)
    if restrict_to is not None:
        allowed = set(restrict_to)
        correlations = {m: r for m, r in correlations.items() if m in allowed}
    return tuple(rank_by_correlation(correlations)[:limit])


@dataclass(frozen=True)
class TaskTable:
    """Per-task mining output: all defined correlations plus the Top-20."""

    task_id: str
    correlations: Mapping[str, float]
    top20: tuple[tuple[str, float], ...]


def build_task_table(
    task_id: str,
    samples: Sequence[KernelSample],
    collinearity: float = DEFAULT_COLLINEARITY,
    limit: int = TOP_K,
) -> TaskTable:
    """Run the per-task stages: extremes -> correlations -> dedupe -> Top-20."""

    chosen = select_extremes(samples)
    correlations = correlations_to_runtime(chosen)
    survivors = dedupe_aliases(metric_vectors(chosen), threshold=collinearity)
    top = top20_for_task(chosen, limit=limit, restrict_to=survivors)
    return TaskTable(task_id=task_id, correlations=correlations, top20=top)


# --------------------------------------------------------------------------- #
# cross-task selection
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class MetricScore:
    """Cross-task scorecard for one candidate metric."""

    name: str
    score: float
    tasks_appeared: int
    sign_consistent: bool
    per_task_r: Mapping[str, float]


@dataclass(frozen=True)
class GlobalSelection:
    selected: tuple[str, ...]
    scores: tuple[MetricScore, ...]
    threshold: float


def _sign_consistent(values: Iterable[float]) -> bool:
    signs = {v > 0 for v in values if v != 0.0}
    return len(signs) <= 1


def select_global(
    tables: Sequence[TaskTable],
    min_tasks: int = MIN_TASKS_APPEARED,
    percentile: float = DEFAULT_PERCENTILE,
) -> GlobalSelection:
    """Consolidate per-task Top-20 lists into the final metric set.

    A candidate (any metric appearing in at least one Top-20 list) survives
    iff it appeared in >= ``min_tasks`` Top-20 lists, its non-zero
    correlations agree in sign across every task where it was profiled, and
    its global score strictly exceeds the ``percentile``-th percentile
    (inclusive linear interpolation) of all candidate scores.  The score is
    the mean of |r| over the tasks where the metric was profiled.
    """

    if len(tables) < 2:
        raise NoTasks(f"need at least 2 tasks to consolidate, got {len(tables)}")

    candidates = sorted({name for table in tables for name, _ in table.top20})
    if not candidates:
        raise NoTasks("no metrics reached any Top-20 list")

    scores: list[MetricScore] = []
    for name in candidates:
        per_task = {
            table.task_id: table.correlations[name]
            for table in tables
            if name in table.correlations
        }
        appeared = sum(1 for table in tables if any(m == name for m, _ in table.top20))
        mean_abs = float(np.mean([abs(r) for r in per_task.values()]))
        scores.append(
            MetricScore(
                name=name,
                score=mean_abs,
                tasks_appeared=appeared,
                sign_consistent=_sign_consistent(per_task.values()),
                per_task_r=per_task,
            )
        )

    threshold = float(np.percentile([s.score for s in scores], percentile))
    chosen = [
        s for s in scores if s.tasks_appeared >= min_tasks and s.sign_consistent and s.score > threshold
    ]
    chosen.sort(key=lambda s: (-s.score, s.name))
    return GlobalSelection(
        selected=tuple(s.name for s in chosen),
        scores=tuple(scores),
        threshold=threshold,
    )


# --------------------------------------------------------------------------- #
# archive I/O and the end-to-end pipeline
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class MiningReport:
    tables: tuple[TaskTable, ...]
    selection: GlobalSelection


def load_task_samples(task_dir: Path) -> tuple[KernelSample, ...]:
    """Read one task's archive: ``<kernel_id>/meta.json`` + ``profile.csv``."""

    samples = []
    for sample_dir in sorted(p for p in task_dir.iterdir() if p.is_dir()):
        meta = json.loads((sample_dir / "meta.json").read_text())
        export = parse_profiler_csv((sample_dir / "profile.csv").read_text())
        samples.append(
            KernelSample(
                kernel_id=sample_dir.name,
                runtime_ms=float(meta["runtime_ms"]),
                metrics=export.value_map(),
            )
        )
    return tuple(samples)


def load_samples_root(root: str | Path) -> dict[str, tuple[KernelSample, ...]]:
    root = Path(root)
    if not root.is_dir():
        raise NoTasks(f"sample root {root} is not a directory")
    tasks = {}
    for task_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        tasks[task_dir.name] = load_task_samples(task_dir)
    return tasks


def mine(
    root: str | Path,
    collinearity: float = DEFAULT_COLLINEARITY,
    percentile: float = DEFAULT_PERCENTILE,
    min_tasks: int = MIN_TASKS_APPEARED,
    limit: int = TOP_K,
) -> MiningReport:
    """Replay an archived sample tree through the whole mining pipeline."""

    by_task = load_samples_root(root)
    if len(by_task) < 2:
        raise NoTasks(f"need at least 2 tasks, got {len(by_task)}")
    tables = tuple(
        build_task_table(task_id, samples, collinearity=collinearity, limit=limit)
        for task_id, samples in by_task.items()
    )
    selection = select_global(tables, min_tasks=min_tasks, percentile=percentile)
    return MiningReport(tables=tables, selection=selection)


def render_catalog(selection: GlobalSelection) -> str:
    """Catalog asset text: one selected metric name per line."""

    return "\n".join(selection.selected) + "\n"


def render_mining_report(report: MiningReport) -> str:
    """Human-readable summary: per-task Top-20 tables plus the global cut."""

    lines: list[str] = []
    for table in report.tables:
        lines.append(f"task {table.task_id}: top {len(table.top20)} metrics by |r|")
        for rank, (name, r) in enumerate(table.top20, start=1):
            lines.append(f"  {rank:2d}. {name}  r={r:+.6f}")
        lines.append("")
    sel = report.selection
    lines.append(f"global score threshold: {sel.threshold:.6f}")
    lines.append(f"selected {len(sel.selected)} metrics:")
    for name in sel.selected:
        score = next(s.score for s in sel.scores if s.name == name)
        lines.append(f"  {name}  score={score:.6f}")
    lines.append("")
    return "\n".join(lines)
