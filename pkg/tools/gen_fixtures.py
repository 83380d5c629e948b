#!/usr/bin/env python3
"""Regenerate the deterministic test fixtures.

Everything written here is frozen into the repo; rerunning the script must be
a no-op diff.  Three fixture families:

* a 10-sample profiler archive whose per-metric Pearson correlations against
  runtime equal a frozen target table (vectors are constructed analytically:
  x = r * t_hat + sqrt(1 - r^2) * w_hat with w_hat orthogonal to both the
  runtime direction and the all-ones vector, so corr(x, t) == r exactly, and
  scale/offset never changes a correlation);
* a 10-round replay transcript (coder replies, judge replies, executor
  script) exercising one compile-fail round inside an optimization run;
* a small two-task archive for the end-to-end mining golden, including an
  exact alias pair and a constant counter.

Run from the repo root:  python3 tools/gen_fixtures.py
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"
GOLDENS = ROOT / "tests" / "goldens"

sys.path.insert(0, str(ROOT / "src"))

from kernelpilot.hardware import export_from_metrics, serialize_profiler_csv  # noqa: E402
from kernelpilot.prompts import PromptKind, render_prompt  # noqa: E402


# --------------------------------------------------------------------------- #
# correlation-archive construction
# --------------------------------------------------------------------------- #

# Runtimes for the 10 archived kernels (5 fast, 5 slow), milliseconds.
RUNTIMES_MS = [0.8234, 0.9117, 1.0458, 1.2231, 1.4512, 4.1120, 5.2448, 6.8321, 8.9144, 12.4031]

# Target correlation, mean level, spread, and unit for every archived metric.
# Printed 6-dp ties are realized as values 2e-7 apart so that |r| ordering is
# strict while each value still rounds to the printed figure.
CONV2D_TARGETS: list[tuple[str, float, float, float, str]] = [
    ("sm__cycles_active.avg", 1.0, 0.0, 0.0, "cycle"),  # exact proportionality
    ("gpc__cycles_elapsed.max", 0.9999996, 9.5e6, 5.5e6, "cycle"),
    ("launch__occupancy_limit_shared_mem", 0.945507, 8.0, 5.0, "block"),
    ("dram__bytes.sum.per_second", -0.924251, 3.2e11, 1.4e11, "byte/s"),
    ("gpu__dram_throughput.avg.pct_of_peak_sustained_elapsed", -0.924155, 52.0, 28.0, "%"),
    ("smsp__inst_executed.avg", 0.9162870, 2.1e6, 1.3e6, "inst"),
    ("smsp__inst_executed.sum", 0.9162868, 1.19e9, 7.4e8, "inst"),
    ("smsp__inst_issued.avg", 0.9162620, 2.2e6, 1.35e6, "inst"),
    ("smsp__inst_issued.sum", 0.9162618, 1.25e9, 7.7e8, "inst"),
    ("lts__t_sector_hit_rate.pct", 0.839237, 61.0, 17.0, "%"),
    ("smsp__sass_average_branch_targets_threads_uniform.pct", 0.810334, 88.0, 9.0, "%"),
    ("lts__throughput.avg.pct_of_peak_sustained_elapsed", -0.787261, 38.0, 16.0, "%"),
    ("smsp__inst_executed_op_branch.sum", 0.746483, 3.4e7, 2.1e7, "inst"),
    ("launch__grid_size", 0.745917, 23000.0, 14000.0, ""),
    ("l1tex__t_sector_hit_rate.pct", 0.728356, 48.0, 15.0, "%"),
    ("gpc__cycles_elapsed.avg.per_second", 0.728053, 1.46e9, 4.2e6, "cycle/s"),
    ("dram__cycles_elapsed.avg.per_second", 0.665784, 6.4e9, 2.8e7, "cycle/s"),
    ("launch__waves_per_multiprocessor", 0.6274780, 11.0, 6.0, ""),
    ("launch__thread_count", 0.6274778, 2.9e6, 1.7e6, "thread"),
    ("launch__shared_mem_per_block_static", -0.610501, 7200.0, 4000.0, "byte"),
    # below-Top-20 extras
    ("smsp__warps_eligible.avg.per_cycle_active", -0.312450, 3.1, 1.5, "warp"),
    ("sm__throughput.avg.pct_of_peak_sustained_elapsed", 0.224318, 41.0, 12.0, "%"),
]

CLOCK_HZ = 1.41e9  # fictitious SM clock for the cycles<->runtime identity


def orthonormal_complement(t: np.ndarray, count: int, seed: int) -> np.ndarray:
    """``count`` orthonormal vectors orthogonal to both ``t-mean`` and ones."""

    n = len(t)
    u = t - t.mean()
    u_hat = u / np.linalg.norm(u)
    ones_hat = np.ones(n) / math.sqrt(n)
    rng = np.random.default_rng(seed)
    basis: list[np.ndarray] = []
    while len(basis) < count:
        v = rng.standard_normal(n)
        v -= v @ u_hat * u_hat
        v -= v @ ones_hat * ones_hat
        for b in basis:
            v -= v @ b * b
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            basis.append(v / norm)
    return np.stack(basis)


def build_conv2d_samples() -> dict[str, dict[str, float]]:
    """Per-sample metric maps whose correlations hit CONV2D_TARGETS exactly."""

    t = np.asarray(RUNTIMES_MS)
    u = t - t.mean()
    u_hat = u / np.linalg.norm(u)
    directions = orthonormal_complement(t, 8, seed=20240917)

    per_metric: dict[str, np.ndarray] = {}
    direction_index = 0
    for name, r, mean, spread, _unit in CONV2D_TARGETS:
        if name == "sm__cycles_active.avg":
            values = t * 1e-3 * CLOCK_HZ  # cycles = seconds * clock, r == 1 exactly
        else:
            w_hat = directions[direction_index % len(directions)]
            direction_index += 1
            x_unit = r * u_hat + math.sqrt(1.0 - r * r) * w_hat
            values = mean + spread * x_unit
        per_metric[name] = values
        got = float(np.corrcoef(values, t)[0, 1])
        target = 1.0 if name == "sm__cycles_active.avg" else r
        assert abs(got - target) < 1e-9, f"{name}: built r={got!r}, wanted {target!r}"

    # A constant counter: zero variance, must fall out of every ranking.
    per_metric["launch__block_size"] = np.full(len(t), 256.0)

    samples: dict[str, dict[str, float]] = {}
    for i in range(len(t)):
        samples[f"k{i + 1:02d}"] = {name: float(vec[i]) for name, vec in per_metric.items()}
    return samples


def write_conv2d_fixture() -> None:
    units = {name: unit for name, _, _, _, unit in CONV2D_TARGETS if unit}
    units["launch__block_size"] = "thread"
    task_dir = FIXTURES / "conv2d_samples" / "conv2d"
    samples = build_conv2d_samples()
    for i, (kernel_id, metrics) in enumerate(samples.items()):
        sample_dir = task_dir / kernel_id
        sample_dir.mkdir(parents=True, exist_ok=True)
        (sample_dir / "meta.json").write_text(
            json.dumps({"runtime_ms": RUNTIMES_MS[i]}, indent=2) + "\n"
        )
        export = export_from_metrics(f"conv2d_{kernel_id}", metrics, units)
        (sample_dir / "profile.csv").write_text(serialize_profiler_csv(export))
    # The frozen expectation table the acceptance test checks against.
    expected = [
        {"name": name, "r": r if name != "sm__cycles_active.avg" else 1.0}
        for name, r, _, _, _ in CONV2D_TARGETS[:20]
    ]
    (FIXTURES / "conv2d_samples" / "expected_top20.json").write_text(
        json.dumps(expected, indent=2) + "\n"
    )


# --------------------------------------------------------------------------- #
# replay transcript (10 rounds, one compile failure)
# --------------------------------------------------------------------------- #

REF_LATENCY_MS = 10.0

# (speedup or None for the compile-fail round), per round 1..10
ROUND_SPEEDUPS = [1.66, 2.42, 3.10, None, 3.436, 3.60, 3.762, 3.50, 3.70, 3.60]

COMPILE_ERROR_LOG = """\
/tmp/build/cross_entropy_ext/main.cu(31): error: identifier "picked" is undefined
          float target_logit = __shfl_sync(0xffffffffu, picked, src_lane);
                                                        ^
1 error detected in the compilation of "/tmp/build/cross_entropy_ext/main.cu".
ninja: build stopped: subcommand failed.
RuntimeError: Error building extension 'cross_entropy_ext'"""

_REDUCE_SHARED_MAX = """\
    __shared__ float smax[256];
    smax[tid] = local_max;
    __syncthreads();
    for (int s = blockDim.x / 2; s > 0; s >>= 1) {
        if (tid < s) smax[tid] = fmaxf(smax[tid], smax[tid + s]);
        __syncthreads();
    }
    float row_max = smax[0];"""

_REDUCE_SHARED_SUM = """\
    __shared__ float ssum[256];
    ssum[tid] = local_sum;
    __syncthreads();
    for (int s = blockDim.x / 2; s > 0; s >>= 1) {
        if (tid < s) ssum[tid] += ssum[tid + s];
        __syncthreads();
    }
    float sum_exp = ssum[0];"""

_REDUCE_WARP_MAX = """\
    for (int offset = 16; offset > 0; offset >>= 1)
        local_max = fmaxf(local_max, __shfl_down_sync(0xffffffffu, local_max, offset));
    __shared__ float warp_max[8];
    if ((tid & 31) == 0) warp_max[tid >> 5] = local_max;
    __syncthreads();
    float row_max = warp_max[0];
    for (int w = 1; w < (blockDim.x >> 5); ++w) row_max = fmaxf(row_max, warp_max[w]);"""

_REDUCE_WARP_SUM = """\
    for (int offset = 16; offset > 0; offset >>= 1)
        local_sum += __shfl_down_sync(0xffffffffu, local_sum, offset);
    __shared__ float warp_sum[8];
    if ((tid & 31) == 0) warp_sum[tid >> 5] = local_sum;
    __syncthreads();
    float sum_exp = warp_sum[0];
    for (int w = 1; w < (blockDim.x >> 5); ++w) sum_exp += warp_sum[w];"""

_TARGET_OK = """\
    int target = (int)targets[row];
    float picked = (target >= tid * stride && target < (tid + 1) * stride)
                       ? row_logits[target] : 0.0f;
    float target_logit = row_logits[target];"""

_TARGET_BROKEN = """\
    int target = (int)targets[row];
    int src_lane = target & 31;
    float target_logit = __shfl_sync(0xffffffffu, picked, src_lane);"""

_TARGET_BROADCAST = """\
    int target = (int)targets[row];
    float picked = (tid == (target & (blockDim.x - 1))) ? row_logits[target] : 0.0f;
    int src_lane = target & (blockDim.x - 1);
    float target_logit = __shfl_sync(0xffffffffu, picked, src_lane & 31);
    if (blockDim.x > 32) target_logit = row_logits[target];"""


def kernel_source(variant: int, note: str, reduce_max: str, reduce_sum: str, target: str) -> str:
    return f'''import torch
import torch.nn as nn
from torch.utils.cpp_extension import load_inline

# variant {variant}: {note}
source = """
#include <torch/extension.h>
#include <cuda_runtime.h>
#include <float.h>

__global__ void cross_entropy_kernel(const float* __restrict__ logits,
                                     const long* __restrict__ targets,
                                     float* __restrict__ losses,
                                     int batch, int classes) {{
    int row = blockIdx.x;
    int tid = threadIdx.x;
    int stride = (classes + blockDim.x - 1) / blockDim.x;
    if (row >= batch) return;
    const float* row_logits = logits + (long)row * classes;
    float local_max = -FLT_MAX;
    for (int c = tid; c < classes; c += blockDim.x)
        local_max = fmaxf(local_max, row_logits[c]);
{reduce_max}
    float local_sum = 0.0f;
    for (int c = tid; c < classes; c += blockDim.x)
        local_sum += __expf(row_logits[c] - row_max);
{reduce_sum}
{target}
    if (tid == 0)
        losses[row] = logf(sum_exp) - (target_logit - row_max);
}}

torch::Tensor cross_entropy_cuda(torch::Tensor logits, torch::Tensor targets) {{
    auto batch = logits.size(0);
    auto classes = logits.size(1);
    auto losses = torch::empty({{batch}}, logits.options());
    cross_entropy_kernel<<<batch, 256>>>(
        logits.data_ptr<float>(), targets.data_ptr<long>(),
        losses.data_ptr<float>(), batch, classes);
    return losses.mean();
}}
"""

cpp_src = "torch::Tensor cross_entropy_cuda(torch::Tensor logits, torch::Tensor targets);"

cross_entropy = load_inline(
    name="cross_entropy_ext",
    cpp_sources=cpp_src,
    cuda_sources=source,
    functions=["cross_entropy_cuda"],
    verbose=False,
)


class ModelNew(nn.Module):
    def __init__(self):
        super().__init__()
        self.op = cross_entropy

    def forward(self, predictions, targets):
        return self.op.cross_entropy_cuda(predictions.cuda(), targets.cuda())
'''


VARIANT_NOTES = [
    "shared-memory tree reductions for max and sum",
    "warp-shuffle reductions replace the shared-memory trees",
    "single fused pass with register accumulators",
    "broadcast target logit through __shfl_sync",
    "fix the broadcast: declare the picked lane value",
    "reduce register pressure in the reduction loops",
    "stage row logits through shared memory once",
    "two rows per block to raise occupancy",
    "vectorized float2 loads for the logit scan",
    "revert to one row per block, keep vector loads",
]


def round_kernel(round_index: int) -> str:
    note = VARIANT_NOTES[round_index - 1]
    if round_index == 1:
        return kernel_source(1, note, _REDUCE_SHARED_MAX, _REDUCE_SHARED_SUM, _TARGET_OK)
    if round_index == 4:
        return kernel_source(4, note, _REDUCE_WARP_MAX, _REDUCE_WARP_SUM, _TARGET_BROKEN)
    return kernel_source(round_index, note, _REDUCE_WARP_MAX, _REDUCE_WARP_SUM, _TARGET_BROADCAST)


JUDGE_OPTIMIZE_REPLIES = {
    1: {
        "bottleneck": "smsp__warp_issue_stalled_barrier_per_warp_active.pct at 23.7 shows the "
        "shared-memory tree reductions serialize every warp at __syncthreads.",
        "optimisation method": "Replace both shared-memory tree reductions with warp-level "
        "__shfl_down_sync reductions so most steps need no block barrier.",
        "modification plan": "Reduce max and sum within each warp via shuffle, write one value "
        "per warp to shared memory, then combine the per-warp values once.",
    },
    2: {
        "bottleneck": "dram__bytes_read.sum is twice the tensor footprint: the logits are "
        "re-read for the exp pass after the max pass.",
        "optimisation method": "Fuse the two scans: keep each thread's logits slice in "
        "registers across the max and sum phases.",
        "modification plan": "Load the slice once into a register array, compute the running "
        "max, then reuse the same registers for the exp accumulation.",
    },
    3: {
        "bottleneck": "smsp__warp_issue_stalled_memory_dependency_per_warp_active.pct rises on "
        "the scattered target-logit gather performed by every thread.",
        "optimisation method": "Have only the owner lane read the target logit and broadcast "
        "it with __shfl_sync instead of a redundant global load per thread.",
        "modification plan": "Compute the owner lane from the target index, read once, "
        "broadcast through __shfl_sync, drop the per-thread gather.",
    },
    5: {
        "bottleneck": "smsp__warp_issue_stalled_long_scoreboard_per_warp_active.pct at 65.1 "
        "says global loads dominate; register pressure limits latency hiding.",
        "optimisation method": "Trim the reduction working set to lower "
        "launch__registers_per_thread and let more warps cover the load latency.",
        "modification plan": "Reuse the max-reduction registers for the sum phase and drop "
        "the per-warp staging array to one float per warp.",
    },
    6: {
        "bottleneck": "smsp__warp_issue_stalled_long_scoreboard_per_warp_active.pct still 65.0 "
        "with l1tex__t_sector_hit_rate.pct low: every pass misses to DRAM.",
        "optimisation method": "Stage the row's logits through shared memory once and serve "
        "both reduction passes from on-chip storage.",
        "modification plan": "Copy the row slice to shared memory with coalesced loads, "
        "then run max and sum passes against shared memory only.",
    },
    7: {
        "bottleneck": "launch__waves_per_multiprocessor below 1 leaves SMs idle between "
        "blocks; occupancy is limited by one-row blocks.",
        "optimisation method": "Process two rows per block so each wave covers twice the "
        "batch and tail waves shrink.",
        "modification plan": "Map blockIdx to a row pair, split the 256 threads into two "
        "row groups of 128, and keep the shuffle reductions per group.",
    },
    8: {
        "bottleneck": "l1tex__throughput.avg.pct_of_peak_sustained_active dropped after the "
        "two-row split; the 128-thread groups underfill load bursts.",
        "optimisation method": "Vectorize the logit scan with float2 loads so each group "
        "issues full-width transactions again.",
        "modification plan": "Cast the row pointer to float2, scan pairs in the max and sum "
        "loops, and handle an odd final element separately.",
    },
    9: {
        "bottleneck": "sm__warps_active.avg.pct_of_peak_sustained_active fell: the row-pair "
        "blocks raise shared-memory use past the occupancy limit.",
        "optimisation method": "Return to one row per block while keeping the float2 "
        "vectorized scan, restoring the occupancy headroom.",
        "modification plan": "Drop the row-pair indexing, keep vector loads and shuffle "
        "reductions, and leave shared memory at one float per warp.",
    },
}

JUDGE_CORRECT_REPLY = {
    "critical_issue": "picked is undeclared, so the target-logit broadcast cannot compile.",
    "why_it_matters": "No thread defines picked before __shfl_sync, so the extension fails to "
    "build and thread 0 would read an uninitialized target logit.",
    "minimal_fix_hint": "Declare picked on the owner lane, then broadcast it with __shfl_sync.",
}

PROFILE_BASE = {
    "sm__cycles_active.avg": 8.1e6,
    "sm__warps_active.avg.pct_of_peak_sustained_active": 38.2,
    "launch__occupancy_limit_blocks": 16.0,
    "launch__occupancy_limit_registers": 6.0,
    "launch__occupancy_limit_shared_mem": 10.0,
    "launch__registers_per_thread": 40.0,
    "sm__inst_executed.sum": 9.2e8,
    "sm__inst_executed_pipe_fp32.avg.pct_of_peak_sustained_active": 22.4,
    "sm__inst_executed_pipe_tensor.avg.pct_of_peak_sustained_active": 0.0,
    "dram__bytes_read.sum": 3.4e8,
    "dram__bytes_write.sum": 1.7e4,
    "dram__throughput.avg.pct_of_peak_sustained_elapsed": 61.0,
    "dram__bytes.sum.per_second": 5.5e11,
    "gpu__dram_throughput.avg.pct_of_peak_sustained_elapsed": 61.2,
    "l1tex__t_sector_hit_rate.pct": 31.5,
    "l1tex__throughput.avg.pct_of_peak_sustained_active": 44.8,
    "lts__t_sector_hit_rate.pct": 55.1,
    "lts__throughput.avg.pct_of_peak_sustained_active": 47.3,
    "smsp__warp_issue_stalled_memory_dependency_per_warp_active.pct": 18.9,
    "smsp__warp_issue_stalled_short_scoreboard_per_warp_active.pct": 7.4,
    "smsp__warp_issue_stalled_long_scoreboard_per_warp_active.pct": 44.0,
    "smsp__warp_issue_stalled_barrier_per_warp_active.pct": 23.7,
    "smsp__warp_issue_stalled_branch_resolving_per_warp_active.pct": 1.9,
    "smsp__sass_average_branch_targets_threads_uniform.pct": 97.2,
}

# Story beats: barrier stalls collapse after round 1, long-scoreboard climbs,
# then the rounds 5-7 improvements play out.
PROFILE_OVERRIDES: dict[int, dict[str, float]] = {
    1: {"smsp__warp_issue_stalled_barrier_per_warp_active.pct": 23.7},
    2: {
        "smsp__warp_issue_stalled_barrier_per_warp_active.pct": 6.1,
        "smsp__warp_issue_stalled_long_scoreboard_per_warp_active.pct": 52.6,
    },
    3: {
        "smsp__warp_issue_stalled_barrier_per_warp_active.pct": 5.8,
        "smsp__warp_issue_stalled_memory_dependency_per_warp_active.pct": 27.3,
        "smsp__warp_issue_stalled_long_scoreboard_per_warp_active.pct": 58.9,
    },
    5: {
        "smsp__warp_issue_stalled_barrier_per_warp_active.pct": 5.2,
        "smsp__warp_issue_stalled_long_scoreboard_per_warp_active.pct": 65.104,
        "launch__registers_per_thread": 52.0,
    },
    6: {
        "smsp__warp_issue_stalled_barrier_per_warp_active.pct": 5.0,
        "smsp__warp_issue_stalled_long_scoreboard_per_warp_active.pct": 65.0,
        "launch__registers_per_thread": 44.0,
    },
    7: {
        "smsp__warp_issue_stalled_barrier_per_warp_active.pct": 4.9,
        "smsp__warp_issue_stalled_long_scoreboard_per_warp_active.pct": 71.3,
        "l1tex__t_sector_hit_rate.pct": 68.4,
    },
    8: {"launch__waves_per_multiprocessor": 1.9},
    9: {"l1tex__throughput.avg.pct_of_peak_sustained_active": 58.2},
    10: {"sm__warps_active.avg.pct_of_peak_sustained_active": 47.6},
}

PROFILE_UNITS = {
    "sm__cycles_active.avg": "cycle",
    "dram__bytes_read.sum": "byte",
    "dram__bytes_write.sum": "byte",
    "dram__bytes.sum.per_second": "byte/s",
    "sm__inst_executed.sum": "inst",
    "launch__registers_per_thread": "register/thread",
}


def round_profile(round_index: int) -> dict[str, float]:
    profile = dict(PROFILE_BASE)
    profile.update(PROFILE_OVERRIDES.get(round_index, {}))
    # Mild deterministic drift so rounds are distinguishable.
    profile["sm__cycles_active.avg"] = PROFILE_BASE["sm__cycles_active.avg"] * (
        1.0 - 0.04 * round_index
    )
    return profile


def write_replay_transcripts() -> None:
    task_dir = FIXTURES / "transcripts" / "level1_95"
    task_dir.mkdir(parents=True, exist_ok=True)

    for round_index in range(1, 11):
        code = round_kernel(round_index)
        if round_index == 1:
            kind = "coder_initial"
            prose = "Here is a fused CUDA cross-entropy replacement for the Model architecture."
        elif round_index == 5:
            kind = "coder_correct"
            prose = "Fixing the broadcast: the owner lane now defines the shuffled value."
        else:
            kind = "coder_optimize"
            prose = f"Applying the requested strategy ({VARIANT_NOTES[round_index - 1]})."
        if round_index == 6:
            body = (
                f"{prose}\n\nThe key change first:\n\n"
                "```cuda\n__shared__ float staged[1024];\n"
                "for (int c = tid; c < classes; c += blockDim.x) staged[c] = row_logits[c];\n"
                "```\n\nFull program:\n\n```python\n" + code + "\n```\n"
            )
        else:
            body = f"{prose}\n\n```python\n" + code + "\n```\n"
        (task_dir / f"{round_index:02d}_{kind}.txt").write_text(body)

    for round_index, payload in JUDGE_OPTIMIZE_REPLIES.items():
        (task_dir / f"{round_index:02d}_judge_optimize.txt").write_text(
            json.dumps(payload, indent=2) + "\n"
        )
    (task_dir / "04_judge_correct.txt").write_text(json.dumps(JUDGE_CORRECT_REPLY, indent=2) + "\n")

    rounds: dict[str, dict] = {}
    for round_index, speedup in enumerate(ROUND_SPEEDUPS, start=1):
        if speedup is None:
            rounds[str(round_index)] = {
                "compiled": False,
                "correct": False,
                "error_log": COMPILE_ERROR_LOG,
                "compile_s": 14.2,
                "execute_s": 0.0,
            }
        else:
            rounds[str(round_index)] = {
                "compiled": True,
                "correct": True,
                "speedup": speedup,
                "max_abs_diff": round(2.0e-6 + 1.0e-7 * round_index, 12),
                "compile_s": 28.0 + 0.5 * round_index,
                "execute_s": 2.1,
                "profile_s": 4.5,
                "kernel_name": f"cross_entropy_kernel_v{round_index}",
                "profile": round_profile(round_index),
                "profile_units": PROFILE_UNITS,
            }
    script = {"ref_latency_ms": REF_LATENCY_MS, "rounds": rounds}
    (task_dir / "executor.json").write_text(json.dumps(script, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------- #
# suite fixture (one task consuming the transcripts above)
# --------------------------------------------------------------------------- #

CROSS_ENTROPY_REFERENCE = '''import torch
import torch.nn as nn

class Model(nn.Module):
    """Cross entropy loss for multi-class classification."""

    def __init__(self):
        super(Model, self).__init__()

    def forward(self, predictions, targets):
        return torch.nn.functional.cross_entropy(predictions, targets)

batch_size = 4096
num_classes = 10

def get_inputs():
    return [
        torch.randn(batch_size, num_classes),
        torch.randint(0, num_classes, (batch_size,)),
    ]

def get_init_inputs():
    return []
'''


def write_suite_fixture() -> None:
    suite_dir = FIXTURES / "suite"
    (suite_dir / "tasks").mkdir(parents=True, exist_ok=True)
    task = {
        "id": "level1/95",
        "level": 1,
        "description": "Cross entropy loss for multi-class classification.",
        "reference_source": CROSS_ENTROPY_REFERENCE,
        "input_spec": [
            {"shape": [4096, 10], "dtype": "float32", "seed": 0},
            {"shape": [4096], "dtype": "int64", "low": 0, "high": 10, "seed": 1},
        ],
        "init_spec": [],
    }
    (suite_dir / "tasks" / "level1_95.json").write_text(json.dumps(task, indent=2) + "\n")
    (suite_dir / "manifest.json").write_text(
        json.dumps({"tasks": ["tasks/level1_95.json"]}, indent=2) + "\n"
    )


# --------------------------------------------------------------------------- #
# prompt goldens
# --------------------------------------------------------------------------- #

PROMPT_CONTEXTS: dict[str, dict[str, str]] = {
    "coder_initial": {
        "few_base": "class Model(nn.Module):\n    def forward(self, a, b):\n        return a + b",
        "few_new": "elementwise_add = load_inline(...)\n\nclass ModelNew(nn.Module):\n    def forward(self, a, b):\n        return elementwise_add.elementwise_add_cuda(a, b)",
        "arch_src": "class Model(nn.Module):\n    def forward(self, x):\n        return torch.softmax(x, dim=-1)",
    },
    "coder_correct": {
        "ERROR_LOG": "main.cu(12): error: identifier \"blockDim_x\" is undefined",
        "CUDA_CODE": "__global__ void softmax_kernel(const float* x, float* y, int n) {\n    int i = blockIdx.x * blockDim_x + threadIdx.x;\n}",
        "Problem": "Critical issue: blockDim_x is not a CUDA builtin.\nWhy it matters: The kernel cannot compile, so the extension never loads.\nMinimal fix hint: Use blockDim.x in the index computation.",
    },
    "coder_optimize": {
        "gpu_name": "NVIDIA RTX 6000 Ada Generation",
        "gpu_arch": "Ada Lovelace",
        "gpu_items": "sm_count: 142\nmemory_bandwidth: 960 GB/s",
        "CUDA_CODE": "__global__ void softmax_kernel(const float* x, float* y, int n) {\n    int i = blockIdx.x * blockDim.x + threadIdx.x;\n    if (i < n) y[i] = expf(x[i]);\n}",
        "optimization_suggestion": "Bottleneck: Two full passes over x.\nOptimisation method: Fuse max and sum scans.\nModification plan: Keep the slice in registers across both phases.",
    },
    "judge_correct": {
        "ERROR_LOG": "Outputs are not close, indicating a result mismatch: max abs diff 3.41e+00",
        "PYTORCH_CODE": "class Model(nn.Module):\n    def forward(self, x):\n        return torch.softmax(x, dim=-1)",
        "CUDA_CODE": "__global__ void softmax_kernel(const float* x, float* y, int n) {\n    // missing row-max subtraction\n}",
    },
    "judge_optimize": {
        "gpu_name": "NVIDIA RTX 6000 Ada Generation",
        "gpu_arch": "Ada Lovelace",
        "gpu_items": "sm_count: 142\nmemory_bandwidth: 960 GB/s",
        "python_code": "class Model(nn.Module):\n    def forward(self, x):\n        return torch.softmax(x, dim=-1)",
        "CUDA_CODE": "__global__ void softmax_kernel(const float* x, float* y, int n) {\n    // one thread per row\n}",
        "NCU_METRICS": "sm__cycles_active.avg = 8100000.0 cycle\nsmsp__warp_issue_stalled_long_scoreboard_per_warp_active.pct = 65.104",
    },
}


def write_prompt_goldens() -> None:
    out_dir = GOLDENS / "prompts"
    out_dir.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "prompt_contexts.json").write_text(
        json.dumps(PROMPT_CONTEXTS, indent=2, sort_keys=True) + "\n"
    )
    for kind_name, context in PROMPT_CONTEXTS.items():
        kind = PromptKind(kind_name)
        rendered = render_prompt(kind, context)
        (out_dir / f"{kind_name}.txt").write_text(rendered)


# --------------------------------------------------------------------------- #
# mini two-task archive for the mining golden
# --------------------------------------------------------------------------- #

MINI_RUNTIMES = {
    "softmax": [0.41, 0.47, 0.55, 0.63, 0.74, 1.62, 1.98, 2.45, 3.02, 3.71],
    "layernorm": [0.88, 0.97, 1.12, 1.26, 1.44, 2.91, 3.55, 4.21, 5.02, 6.14],
}

# name -> (per-task r, mean, spread); alias_of marks an exact scaled copy.
MINI_TARGETS = [
    ("sm__cycles_active.avg", {"softmax": 0.998, "layernorm": 0.995}, 5.0e6, 3.0e6, None),
    ("dram__bytes.sum.per_second", {"softmax": -0.91, "layernorm": -0.88}, 4.1e11, 1.6e11, None),
    ("lts__t_sector_hit_rate.pct", {"softmax": 0.83, "layernorm": 0.79}, 58.0, 18.0, None),
    ("launch__grid_size", {"softmax": 0.64, "layernorm": 0.71}, 18000.0, 9000.0, None),
    ("l1tex__t_sector_hit_rate.pct", {"softmax": 0.55, "layernorm": -0.52}, 47.0, 14.0, None),
    ("smsp__warps_eligible.avg.per_cycle_active", {"softmax": 0.31, "layernorm": 0.28}, 3.0, 1.2, None),
    ("smsp__inst_executed.sum", {"softmax": 0.42, "layernorm": 0.38}, 8.0e8, 4.5e8, None),
    # exact alias of smsp__inst_executed.sum (scaled copy -> pairwise r == 1)
    ("smsp__inst_executed.avg", None, 0.0, 0.0, ("smsp__inst_executed.sum", 1.0 / 568.0)),
    ("launch__block_size", None, 256.0, 0.0, None),  # constant
]


def build_mini_task(task_id: str, seed: int) -> dict[str, dict[str, float]]:
    t = np.asarray(MINI_RUNTIMES[task_id])
    u = t - t.mean()
    u_hat = u / np.linalg.norm(u)
    directions = orthonormal_complement(t, 8, seed=seed)
    vectors: dict[str, np.ndarray] = {}
    direction_index = 0
    for name, per_task_r, mean, spread, alias in MINI_TARGETS:
        if alias is not None:
            base, scale = alias
            vectors[name] = vectors[base] * scale
            continue
        if spread == 0.0:
            vectors[name] = np.full(len(t), mean)
            continue
        r = per_task_r[task_id]
        w_hat = directions[direction_index % len(directions)]
        direction_index += 1
        x_unit = r * u_hat + math.sqrt(1.0 - r * r) * w_hat
        vectors[name] = mean + spread * x_unit
    return {
        f"s{i + 1:02d}": {name: float(vec[i]) for name, vec in vectors.items()}
        for i in range(len(t))
    }


def write_mini_archive() -> None:
    root = FIXTURES / "mini_samples"
    for task_id, seed in (("softmax", 11), ("layernorm", 12)):
        samples = build_mini_task(task_id, seed)
        for i, (kernel_id, metrics) in enumerate(samples.items()):
            sample_dir = root / task_id / kernel_id
            sample_dir.mkdir(parents=True, exist_ok=True)
            (sample_dir / "meta.json").write_text(
                json.dumps({"runtime_ms": MINI_RUNTIMES[task_id][i]}, indent=2) + "\n"
            )
            export = export_from_metrics(f"{task_id}_{kernel_id}", metrics, {})
            (sample_dir / "profile.csv").write_text(serialize_profiler_csv(export))


def main() -> None:
    write_conv2d_fixture()
    write_replay_transcripts()
    write_suite_fixture()
    write_prompt_goldens()
    write_mini_archive()
    print("fixtures written under", FIXTURES)


if __name__ == "__main__":
    main()
