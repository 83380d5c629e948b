"""Mine profiler metrics that predict kernel runtime from archived samples.

Walks the offline pipeline end to end on the bundled sample archives: rank
one task's metrics by absolute runtime correlation (the ten-kernel Conv2D
study), then consolidate several tasks into a global catalog — a metric
survives only if it recurs across tasks, keeps a consistent sign, and
scores above the 75th percentile of all candidates.

    python demos/mine_metric_catalog.py
"""

from pathlib import Path

from kernelpilot.mining import load_task_samples, mine, top20_for_task

REPO = Path(__file__).resolve().parents[1]
FIXTURES = REPO / "tests" / "fixtures"


def main() -> None:
    samples = load_task_samples(FIXTURES / "conv2d_samples" / "conv2d")
    runtimes = sorted(s.runtime_ms for s in samples)
    print(f"Conv2D archive: {len(samples)} kernels, "
          f"{runtimes[0]:.2f}-{runtimes[-1]:.2f} ms\n")
    print("rank  r        metric")
    for rank, (name, r) in enumerate(top20_for_task(samples), start=1):
        print(f"{rank:>4}  {r:+.4f}  {name}")

    report = mine(FIXTURES / "mini_samples")
    selection = report.selection
    print(f"\nglobal selection over {len(report.tables)} tasks "
          f"(score threshold {selection.threshold:.4f}):")
    for score in selection.scores:
        kept = "kept   " if score.name in selection.selected else "dropped"
        print(f"  {kept} {score.name:<40} score {score.score:.4f} "
              f"in {score.tasks_appeared} task(s)"
              f"{'' if score.sign_consistent else '  (sign flips)'}")


if __name__ == "__main__":
    main()
