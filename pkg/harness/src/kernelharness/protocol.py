"""Request/response documents for the ``kernel-exec/v1`` wire protocol.

The request carries everything a run needs — both module sources, the input
recipe, tolerance, timing plan — so the harness holds no per-task state and
a request is reproducible on its own.  Responses are flat JSON objects; an
``ok: false`` envelope names an error ``kind`` so the client can tell "the
profiler is missing" (degrade gracefully) from "the harness is broken"
(stop the run).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

SCHEMA = "kernel-exec/v1"

MODES = ("test", "profile")

#: Defaults mirror the client side of the protocol; a hand-written request
#: may omit any of the optional fields.
DEFAULT_TOLERANCE = 1e-4
DEFAULT_WARMUP = 3
DEFAULT_REPS = 20
DEFAULT_NUM_INPUT_SETS = 5
DEFAULT_SEED = 1234
DEFAULT_BUILD_TIMEOUT_S = 120.0
DEFAULT_RUN_TIMEOUT_S = 60.0


class ProtocolError(Exception):
    """The request document is malformed; answered with a BadRequest envelope."""


@dataclass(frozen=True)
class ExecRequest:
    mode: str
    reference_source: str
    candidate_source: str
    input_spec: tuple[Mapping[str, Any], ...] = ()
    init_spec: tuple[Any, ...] = ()
    tolerance: float = DEFAULT_TOLERANCE
    warmup: int = DEFAULT_WARMUP
    reps: int = DEFAULT_REPS
    num_input_sets: int = DEFAULT_NUM_INPUT_SETS
    seed: int = DEFAULT_SEED
    build_timeout_s: float = DEFAULT_BUILD_TIMEOUT_S
    run_timeout_s: float = DEFAULT_RUN_TIMEOUT_S
    metric_names: tuple[str, ...] = field(default_factory=tuple)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ProtocolError(message)


def parse_request(raw: Mapping[str, Any]) -> ExecRequest:
    """Validate a parsed request document.

    Checks are structural (schema tag, mode, non-empty sources, positive
    numeric fields); whether the sources actually run is the job of the run
    itself, which reports failures inside an ``ok: true`` test response.
    """

    _require(isinstance(raw, Mapping), "request must be a JSON object")
    schema = raw.get("schema")
    _require(schema == SCHEMA, f"unsupported schema {schema!r} (expected {SCHEMA!r})")
    mode = raw.get("mode")
    _require(mode in MODES, f"mode must be one of {MODES}, got {mode!r}")

    reference = raw.get("reference_source", "")
    candidate = raw.get("candidate_source", "")
    _require(isinstance(reference, str) and reference.strip() != "", "reference_source is empty")
    _require(isinstance(candidate, str) and candidate.strip() != "", "candidate_source is empty")

    input_spec = raw.get("input_spec", ())
    _require(
        isinstance(input_spec, (list, tuple))
        and all(isinstance(entry, Mapping) for entry in input_spec),
        "input_spec must be a list of objects",
    )
    init_spec = raw.get("init_spec", ())
    _require(isinstance(init_spec, (list, tuple)), "init_spec must be a list")

    tolerance = float(raw.get("tolerance", DEFAULT_TOLERANCE))
    _require(tolerance > 0, f"tolerance must be positive, got {tolerance}")

    def positive_int(key: str, default: int) -> int:
        value = raw.get(key, default)
        _require(isinstance(value, int) and not isinstance(value, bool) and value > 0,
                 f"{key} must be a positive integer, got {value!r}")
        return value

    warmup = raw.get("warmup", DEFAULT_WARMUP)
    _require(isinstance(warmup, int) and not isinstance(warmup, bool) and warmup >= 0,
             f"warmup must be a non-negative integer, got {warmup!r}")
    reps = positive_int("reps", DEFAULT_REPS)
    num_input_sets = positive_int("num_input_sets", DEFAULT_NUM_INPUT_SETS)
    seed = raw.get("seed", DEFAULT_SEED)
    _require(isinstance(seed, int) and not isinstance(seed, bool),
             f"seed must be an integer, got {seed!r}")

    build_timeout_s = float(raw.get("build_timeout_s", DEFAULT_BUILD_TIMEOUT_S))
    run_timeout_s = float(raw.get("run_timeout_s", DEFAULT_RUN_TIMEOUT_S))
    _require(build_timeout_s > 0 and run_timeout_s > 0, "timeouts must be positive")

    metric_names = raw.get("metric_names", ())
    _require(
        isinstance(metric_names, (list, tuple))
        and all(isinstance(name, str) and name for name in metric_names),
        "metric_names must be a list of non-empty strings",
    )
    if mode == "profile":
        _require(len(metric_names) > 0, "profile mode needs a non-empty metric_names list")

    return ExecRequest(
        mode=mode,
        reference_source=reference,
        candidate_source=candidate,
        input_spec=tuple(input_spec),
        init_spec=tuple(init_spec),
        tolerance=tolerance,
        warmup=warmup,
        reps=reps,
        num_input_sets=num_input_sets,
        seed=seed,
        build_timeout_s=build_timeout_s,
        run_timeout_s=run_timeout_s,
        metric_names=tuple(metric_names),
    )


def test_response(
    *,
    compiled: bool,
    correct: bool,
    error_log: str = "",
    ref_latency_ms: Optional[float] = None,
    kernel_latency_ms: Optional[float] = None,
    max_abs_diff: Optional[float] = None,
    build_s: float = 0.0,
    run_s: float = 0.0,
) -> dict:
    return {
        "ok": True,
        "compiled": bool(compiled),
        "correct": bool(correct),
        "error_log": error_log,
        "ref_latency_ms": ref_latency_ms,
        "kernel_latency_ms": kernel_latency_ms,
        "max_abs_diff": max_abs_diff,
        "build_s": float(build_s),
        "run_s": float(run_s),
    }


def profile_response(csv_text: str, seconds: float) -> dict:
    return {"ok": True, "profile_csv": csv_text, "profile_s": float(seconds)}


def error_response(kind: str, message: str) -> dict:
    """An ``ok: false`` envelope; ``kind`` is machine-readable, ``error`` prose."""

    return {"ok": False, "kind": kind, "error": message}
