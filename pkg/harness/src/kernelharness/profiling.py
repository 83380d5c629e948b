"""Nsight Compute wrapper: profile one forward pass, pass the CSV through.

The candidate runs in a fresh interpreter under ``ncu`` so the profiler
captures exactly one model invocation and nothing of the harness itself.
The profiler's log preamble is stripped down to the CSV table (the client
parses the table's columns, not the log).  Every way the profiler can be
missing or unusable raises :class:`ProfilerUnavailable` — the client treats
that as "no counter evidence this round", never as a run failure.
"""

from __future__ import annotations

import csv
import io
import json
import shutil
import subprocess
import sys
import tempfile
import time
from pathlib import Path

from .protocol import ExecRequest

#: Column that marks the CSV header row in ncu output.
_HEADER_MARKER = "Metric Name"

_DRIVER = '''\
"""One profiled forward pass; paths and the input recipe come from argv[1]."""

import json
import sys

import torch

from kernelharness.inputs import build_input_set, to_device
from kernelharness.runner import instantiate, load_module, pick_device

payload = json.loads(open(sys.argv[1]).read())
reference_module = load_module(open(payload["reference_path"]).read(), "reference_model")
candidate_module = load_module(open(payload["candidate_path"]).read(), "candidate_model")
device = pick_device()
model = instantiate(candidate_module, "ModelNew", tuple(payload["init_spec"]), device)
inputs = to_device(
    build_input_set(payload["input_spec"], 0, payload["seed"], reference_module=reference_module),
    device,
)
with torch.no_grad():
    model(*inputs)
if device.type == "cuda":
    torch.cuda.synchronize(device)
'''


class ProfilerUnavailable(Exception):
    """No usable profiler output; the caller degrades instead of failing."""


def extract_csv(profiler_stdout: str) -> str:
    """Drop the ncu log preamble; keep the CSV table from its header on."""

    lines = profiler_stdout.splitlines()
    for index, line in enumerate(lines):
        try:
            cells = next(csv.reader(io.StringIO(line)))
        except (csv.Error, StopIteration):
            continue
        if _HEADER_MARKER in [cell.strip() for cell in cells]:
            return "\n".join(lines[index:]) + "\n"
    raise ProfilerUnavailable("profiler output holds no CSV metric table")


def run_profile(request: ExecRequest) -> tuple[str, float]:
    """Profile the candidate once; returns (csv_text, wall_seconds)."""

    ncu = shutil.which("ncu")
    if ncu is None:
        raise ProfilerUnavailable("ncu is not on PATH")

    begin = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="kernelharness-profile-") as workdir:
        work = Path(workdir)
        (work / "reference.py").write_text(request.reference_source)
        (work / "candidate.py").write_text(request.candidate_source)
        (work / "driver.py").write_text(_DRIVER)
        (work / "request.json").write_text(
            json.dumps(
                {
                    "reference_path": str(work / "reference.py"),
                    "candidate_path": str(work / "candidate.py"),
                    "input_spec": list(request.input_spec),
                    "init_spec": list(request.init_spec),
                    "seed": request.seed,
                }
            )
        )
        command = [
            ncu,
            "--csv",
            "--metrics",
            ",".join(request.metric_names),
            "--target-processes",
            "all",
            sys.executable,
            str(work / "driver.py"),
            str(work / "request.json"),
        ]
        try:
            proc = subprocess.run(
                command,
                capture_output=True,
                text=True,
                timeout=request.build_timeout_s + request.run_timeout_s,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ProfilerUnavailable(f"profiler run failed: {exc}") from exc
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout or "")[-2000:]
        raise ProfilerUnavailable(f"ncu exited {proc.returncode}: {tail}")
    return extract_csv(proc.stdout), time.perf_counter() - begin
