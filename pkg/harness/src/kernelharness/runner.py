"""Candidate execution: build, check against the reference, time.

A ``test`` run has three verdict-bearing stages.  Building the candidate
module (executing its source, which triggers any inline-extension compile)
can fail — that is ``compiled: false``.  A built candidate then answers
every input set next to the reference model; any crash, structural
mismatch, or worst-case absolute difference beyond the tolerance is
``correct: false``.  Only a correct candidate is timed, so reported
latencies always describe a kernel worth comparing.

Failures of the *reference* model are deliberately not a candidate verdict:
they raise :class:`ReferenceBroken`, which the entry point answers with an
``ok: false`` envelope, because a broken task must stop the run rather than
score candidates against garbage.
"""

from __future__ import annotations

import math
import time
import traceback
import types
from typing import Any

import torch

from .inputs import InputSpecError, build_input_sets, to_device
from .protocol import ExecRequest, test_response
from .timing import median_latency_ms

#: Characters of traceback kept in an error log (the tail names the cause).
ERROR_LOG_LIMIT = 4000


class ReferenceBroken(Exception):
    """The reference model itself fails; infrastructure, not the candidate."""


def pick_device() -> torch.device:
    return torch.device("cuda") if torch.cuda.is_available() else torch.device("cpu")


def load_module(source: str, label: str) -> types.ModuleType:
    """Execute module source in a fresh namespace (no sys.modules entry)."""

    module = types.ModuleType(label)
    code = compile(source, f"<{label}>", "exec")
    exec(code, module.__dict__)
    return module


def instantiate(module: types.ModuleType, class_name: str, init_spec, device: torch.device):
    """Build the model: explicit init args win, then ``get_init_inputs()``."""

    cls = getattr(module, class_name, None)
    if cls is None:
        raise AttributeError(f"module defines no class {class_name!r}")
    if init_spec:
        args = list(init_spec)
    elif hasattr(module, "get_init_inputs"):
        args = module.get_init_inputs() or []
        if not isinstance(args, (list, tuple)):
            args = [args]
    else:
        args = []
    model = cls(*args)
    if isinstance(model, torch.nn.Module):
        model = model.to(device)
        model.eval()
    return model


def _tail(text: str, limit: int = ERROR_LOG_LIMIT) -> str:
    return text[-limit:]


def _finite_or_none(value: float):
    return value if math.isfinite(value) else None


def compare_outputs(ref: Any, new: Any) -> tuple[float, str]:
    """(worst absolute difference, mismatch message).

    An empty message means the outputs were comparable; the caller then
    judges the difference against the tolerance.  Tensors must match in
    shape exactly (broadcasting could hide a wrong result); values are
    compared in float64 so a low-precision candidate is measured, not
    rounded.  NaN anywhere is a mismatch — NaN compares unequal to
    everything, including a "correct" NaN.
    """

    if isinstance(ref, torch.Tensor):
        if not isinstance(new, torch.Tensor):
            return math.inf, f"expected a tensor, got {type(new).__name__}"
        if tuple(ref.shape) != tuple(new.shape):
            return math.inf, f"shape mismatch: {tuple(ref.shape)} vs {tuple(new.shape)}"
        if ref.numel() == 0:
            return 0.0, ""
        diff = (ref.detach().double() - new.detach().to(ref.device).double()).abs()
        worst = float(diff.max().item())
        if math.isnan(worst):
            return math.inf, "outputs differ by NaN"
        return worst, ""
    if isinstance(ref, (list, tuple)):
        if not isinstance(new, (list, tuple)) or len(new) != len(ref):
            return math.inf, f"output arity mismatch: {len(ref)} reference outputs"
        worst = 0.0
        for r, n in zip(ref, new):
            diff, message = compare_outputs(r, n)
            if message:
                return math.inf, message
            worst = max(worst, diff)
        return worst, ""
    if isinstance(ref, (int, float)):
        if not isinstance(new, (int, float)):
            return math.inf, f"expected a number, got {type(new).__name__}"
        diff = abs(float(ref) - float(new))
        if math.isnan(diff):
            return math.inf, "outputs differ by NaN"
        return diff, ""
    return (0.0, "") if ref == new else (math.inf, f"non-tensor outputs differ: {type(ref).__name__}")


def run_test(request: ExecRequest) -> dict:
    device = pick_device()

    try:
        ref_module = load_module(request.reference_source, "reference_model")
        reference = instantiate(ref_module, "Model", request.init_spec, device)
        input_sets = [
            to_device(input_set, device)
            for input_set in build_input_sets(
                request.input_spec,
                request.num_input_sets,
                request.seed,
                reference_module=ref_module,
            )
        ]
        with torch.no_grad():
            expected_outputs = [reference(*inputs) for inputs in input_sets]
    except InputSpecError:
        raise  # a request problem, not a broken reference
    except Exception as exc:
        raise ReferenceBroken(_tail(traceback.format_exc())) from exc

    build_begin = time.perf_counter()
    try:
        candidate_module = load_module(request.candidate_source, "candidate_model")
        candidate = instantiate(candidate_module, "ModelNew", request.init_spec, device)
    except Exception:
        return test_response(
            compiled=False,
            correct=False,
            error_log=_tail(traceback.format_exc()),
            build_s=time.perf_counter() - build_begin,
        )
    build_s = time.perf_counter() - build_begin

    run_begin = time.perf_counter()
    worst = 0.0
    try:
        with torch.no_grad():
            for inputs, expected in zip(input_sets, expected_outputs):
                got = candidate(*inputs)
                diff, message = compare_outputs(expected, got)
                worst = max(worst, diff)
                if message:
                    return test_response(
                        compiled=True,
                        correct=False,
                        error_log=f"output mismatch: {message}",
                        max_abs_diff=_finite_or_none(worst),
                        build_s=build_s,
                        run_s=time.perf_counter() - run_begin,
                    )
    except Exception:
        return test_response(
            compiled=True,
            correct=False,
            error_log=_tail(traceback.format_exc()),
            build_s=build_s,
            run_s=time.perf_counter() - run_begin,
        )

    if worst > request.tolerance:
        return test_response(
            compiled=True,
            correct=False,
            error_log=(
                f"max absolute difference {worst:.3e} exceeds tolerance "
                f"{request.tolerance:.1e} over {len(input_sets)} input sets"
            ),
            max_abs_diff=worst,
            build_s=build_s,
            run_s=time.perf_counter() - run_begin,
        )

    first = input_sets[0]
    with torch.no_grad():
        ref_latency_ms = median_latency_ms(
            lambda: reference(*first), warmup=request.warmup, reps=request.reps, device=device
        )
        kernel_latency_ms = median_latency_ms(
            lambda: candidate(*first), warmup=request.warmup, reps=request.reps, device=device
        )
    return test_response(
        compiled=True,
        correct=True,
        ref_latency_ms=ref_latency_ms,
        kernel_latency_ms=kernel_latency_ms,
        max_abs_diff=worst,
        build_s=build_s,
        run_s=time.perf_counter() - run_begin,
    )
