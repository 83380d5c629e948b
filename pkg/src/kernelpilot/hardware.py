"""Profiler-export parsing, metric-subset filtering, and prompt-ready formatting.

This module turns raw Nsight Compute CSV exports plus a static GPU datasheet
into the deterministic text blocks the Judge prompt consumes, and owns the
curated metric catalog asset (the task-agnostic subset the profiler is asked
to collect).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .core import DomainError, GPUDetail, GPUSpec, NCUProfile


class HardwareError(Exception):
    """Base class for profiler/GPU-registry failures."""


class HeaderMismatch(HardwareError):
    """The CSV header does not expose metric name/unit/value columns."""


class UnparsableValue(HardwareError):
    """A metric value is not a finite number."""


class BadCatalog(HardwareError):
    """Catalog file is empty or contains duplicate names."""


class UnknownGPU(HardwareError):
    """Requested device is not in the registry."""


# Column names Nsight Compute uses in its CSV pages.
_NAME_COL = "Metric Name"
_UNIT_COL = "Metric Unit"
_VALUE_COL = "Metric Value"
_ID_COL = "ID"
_KERNEL_COL = "Kernel Name"

# Counters used to decide which launch "wins" when an export contains several
# launches: the longest-running one is the kernel worth talking about.
_DURATION_METRICS = ("gpu__time_duration.sum", "sm__cycles_elapsed.sum", "sm__cycles_active.avg")


# --------------------------------------------------------------------------- #
# metric catalog
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class MetricCatalog:
    """Ordered list of profiler metric names; order is significant."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.names:
            raise BadCatalog("catalog has no metric names")
        if len(set(self.names)) != len(self.names):
            raise BadCatalog("catalog contains duplicate metric names")

    def __iter__(self):
        return iter(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self.names


def load_catalog(path: str | Path) -> MetricCatalog:
    """Read a catalog file: plain text, one metric name per line."""

    lines = Path(path).read_text().splitlines()
    names = tuple(line.strip() for line in lines if line.strip())
    return MetricCatalog(names)


def default_catalog() -> MetricCatalog:
    """The curated 24-metric subset shipped with the package."""

    text = resources.files("kernelpilot").joinpath("data/metric_catalog.txt").read_text()
    names = tuple(line.strip() for line in text.splitlines() if line.strip())
    return MetricCatalog(names)


def default_catalog_text() -> str:
    """Raw bytes of the shipped catalog asset, for byte-level checks."""

    return resources.files("kernelpilot").joinpath("data/metric_catalog.txt").read_text()


# --------------------------------------------------------------------------- #
# profiler CSV export
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class MetricRow:
    name: str
    unit: str
    value: float


@dataclass(frozen=True)
class ProfilerExport:
    """One launch worth of profiler rows, in file order."""

    kernel_id: str
    rows: tuple[MetricRow, ...]

    def value_map(self) -> dict[str, float]:
        return {row.name: row.value for row in self.rows}

    def unit_map(self) -> dict[str, str]:
        return {row.name: row.unit for row in self.rows if row.unit}


def _parse_number(text: str, metric: str) -> float:
    # Nsight writes human-readable numbers: thousands separators and all.
    cleaned = text.strip().replace(",", "")
    if not cleaned:
        raise UnparsableValue(f"{metric}: empty value")
    try:
        value = float(cleaned)
    except ValueError as exc:
        raise UnparsableValue(f"{metric}: cannot parse {text!r}") from exc
    if not math.isfinite(value):
        raise UnparsableValue(f"{metric}: non-finite value {text!r}")
    return value


def parse_profiler_csv(text: str) -> ProfilerExport:
    """Parse an Nsight Compute CSV export into a :class:`ProfilerExport`.

    Handles quoted fields and thousands separators.  When the export holds
    several launches (distinguished by the ``ID`` column), the rows of the
    longest-duration launch are kept; without launch ids, the last occurrence
    of a duplicated metric wins.
    """

    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    for required in (_NAME_COL, _UNIT_COL, _VALUE_COL):
        if required not in header:
            raise HeaderMismatch(f"CSV header {header!r} lacks column {required!r}")

    has_id = _ID_COL in header
    by_launch: dict[str, list[MetricRow]] = {}
    kernel_by_launch: dict[str, str] = {}
    order: list[str] = []
    for record in reader:
        name = (record.get(_NAME_COL) or "").strip()
        if not name:
            continue
        value = _parse_number(record.get(_VALUE_COL) or "", name)
        unit = (record.get(_UNIT_COL) or "").strip()
        launch = (record.get(_ID_COL) or "").strip() if has_id else ""
        if launch not in by_launch:
            by_launch[launch] = []
            order.append(launch)
            kernel_by_launch[launch] = (record.get(_KERNEL_COL) or "").strip()
        by_launch[launch].append(MetricRow(name, unit, value))

    if not by_launch:
        return ProfilerExport(kernel_id="", rows=())

    chosen = _pick_longest_launch(by_launch, order)
    rows = _dedupe_last_wins(by_launch[chosen])
    return ProfilerExport(kernel_id=kernel_by_launch[chosen], rows=tuple(rows))


def _pick_longest_launch(by_launch: Mapping[str, list[MetricRow]], order: Sequence[str]) -> str:
    if len(by_launch) == 1:
        return order[0]
    for duration_metric in _DURATION_METRICS:
        durations = {}
        for launch in order:
            for row in by_launch[launch]:
                if row.name == duration_metric:
                    durations[launch] = row.value
                    break
        if len(durations) == len(by_launch):
            return max(order, key=lambda launch: durations[launch])
    return order[0]


def _dedupe_last_wins(rows: Iterable[MetricRow]) -> list[MetricRow]:
    seen: dict[str, MetricRow] = {}
    for row in rows:
        seen[row.name] = row
    return list(seen.values())


def serialize_profiler_csv(export: ProfilerExport) -> str:
    """Inverse of :func:`parse_profiler_csv` for single-launch exports."""

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([_KERNEL_COL, _NAME_COL, _UNIT_COL, _VALUE_COL])
    for row in export.rows:
        writer.writerow([export.kernel_id, row.name, row.unit, repr(row.value)])
    return out.getvalue()


def export_from_metrics(
    kernel_id: str,
    metrics: Mapping[str, float],
    units: Optional[Mapping[str, str]] = None,
) -> ProfilerExport:
    """Build an export directly from a name→value map (test/replay aid)."""

    units = units or {}
    rows = tuple(MetricRow(name, units.get(name, ""), float(value)) for name, value in metrics.items())
    return ProfilerExport(kernel_id=kernel_id, rows=rows)


# --------------------------------------------------------------------------- #
# subset filtering and prompt formatting
# --------------------------------------------------------------------------- #


def filter_to_subset(
    export: ProfilerExport, catalog: MetricCatalog
) -> tuple[NCUProfile, tuple[str, ...]]:
    """Keep exactly the catalog's metrics, in catalog order.

    Returns the profile plus the names the export did not contain; missing
    metrics never fail the run, they are surfaced for logging.
    """

    values = export.value_map()
    units = export.unit_map()
    kept: dict[str, float] = {}
    kept_units: dict[str, str] = {}
    missing: list[str] = []
    for name in catalog:
        if name in values:
            kept[name] = values[name]
            if name in units:
                kept_units[name] = units[name]
        else:
            missing.append(name)
    profile = NCUProfile(kernel_id=export.kernel_id, metrics=kept, units=kept_units)
    return profile, tuple(missing)


def _format_quantity(value: float) -> str:
    # Full precision, but integral values print without a trailing ".0".
    if float(value).is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


def format_gpu_items(gpu: GPUSpec) -> str:
    """One ``label: value unit`` line per datasheet entry, registry order."""

    lines = []
    for detail in gpu.details:
        quantity = _format_quantity(detail.value)
        if detail.unit:
            lines.append(f"{detail.label}: {quantity} {detail.unit}")
        else:
            lines.append(f"{detail.label}: {quantity}")
    return "\n".join(lines)


def format_metric_lines(profile: NCUProfile, catalog: MetricCatalog) -> str:
    """One ``name = value`` line per profiled metric, catalog order.

    Units are appended when the profiler reported one.  Metrics absent from
    the profile are skipped (they were already surfaced by the filter step).
    """

    lines = []
    for name in catalog:
        if name not in profile.metrics:
            continue
        quantity = _format_quantity(profile.metrics[name])
        unit = profile.units.get(name, "")
        if unit:
            lines.append(f"{name} = {quantity} {unit}")
        else:
            lines.append(f"{name} = {quantity}")
    return "\n".join(lines)


def format_hardware_feedback(
    gpu: GPUSpec, profile: NCUProfile, catalog: Optional[MetricCatalog] = None
) -> dict[str, str]:
    """Deterministic prompt slots grounding the Judge in hardware reality."""

    catalog = catalog or MetricCatalog(tuple(profile.metrics))
    return {
        "gpu_name": gpu.name,
        "gpu_arch": gpu.architecture,
        "gpu_items": format_gpu_items(gpu),
        "NCU_METRICS": format_metric_lines(profile, catalog),
    }


# --------------------------------------------------------------------------- #
# GPU registry
# --------------------------------------------------------------------------- #


def _spec_from_record(raw: Mapping) -> GPUSpec:
    details = tuple(
        GPUDetail(label=d["label"], value=float(d["value"]), unit=d.get("unit", ""))
        for d in raw.get("details", [])
    )
    return GPUSpec(name=raw["name"], architecture=raw["architecture"], details=details)


def load_gpu_file(path: str | Path) -> GPUSpec:
    raw = json.loads(Path(path).read_text())
    return _spec_from_record(raw)


def _registry_records() -> list[Mapping]:
    records = []
    root = resources.files("kernelpilot").joinpath("data/gpus")
    for entry in sorted(root.iterdir(), key=lambda item: item.name):
        if entry.name.endswith(".json"):
            records.append(json.loads(entry.read_text()))
    return records


def load_gpu_registry() -> dict[str, GPUSpec]:
    """All shipped device datasheets, keyed by canonical name."""

    return {raw["name"]: _spec_from_record(raw) for raw in _registry_records()}


def _normalize(name: str) -> str:
    return "".join(ch for ch in name.lower() if ch.isalnum())


def lookup_gpu(name: str) -> GPUSpec:
    """Find a registry device by name or alias, case/punctuation-insensitive."""

    wanted = _normalize(name)
    for raw in _registry_records():
        keys = {_normalize(raw["name"])} | {_normalize(alias) for alias in raw.get("aliases", [])}
        if wanted in keys:
            return _spec_from_record(raw)
    known = ", ".join(sorted(raw["name"] for raw in _registry_records()))
    raise UnknownGPU(f"no registry entry for {name!r}; known devices: {known}")


class ProfilerUnavailable(HardwareError):
    """The profiler binary is absent or refused to run; callers degrade."""
