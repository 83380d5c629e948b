"""Latency measurement: warmup, repeated runs, median.

The median over a fixed number of repetitions is robust to the occasional
stall (page migration, clock ramp) that would skew a mean.  On a CUDA
device each repetition is bracketed by CUDA events so only device time is
counted; on CPU the wall clock is the device time.
"""

from __future__ import annotations

import statistics
import time
from typing import Callable

import torch


def median_latency_ms(
    fn: Callable[[], object],
    *,
    warmup: int,
    reps: int,
    device: torch.device,
) -> float:
    use_cuda = device.type == "cuda"
    for _ in range(warmup):
        fn()
    if use_cuda:
        torch.cuda.synchronize(device)
    samples = []
    for _ in range(reps):
        if use_cuda:
            start = torch.cuda.Event(enable_timing=True)
            stop = torch.cuda.Event(enable_timing=True)
            start.record()
            fn()
            stop.record()
            torch.cuda.synchronize(device)
            samples.append(start.elapsed_time(stop))
        else:
            begin = time.perf_counter()
            fn()
            samples.append((time.perf_counter() - begin) * 1000.0)
    return float(statistics.median(samples))
