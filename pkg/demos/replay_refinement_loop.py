"""Replay a full ten-round refinement run from recorded transcripts.

No GPU, no network: the coder/judge replies come from transcript files and
the executor replays recorded build/run/profile outcomes.  What you see is
the real orchestration logic — mode switching after a failed round, judge
feedback threading into the next prompt, best-kernel selection — driven by
a run that actually happened.

    python demos/replay_refinement_loop.py
"""

from pathlib import Path

from kernelpilot.evaluation import report_cost
from kernelpilot.gateway import BackendPricing, MockBackend
from kernelpilot.hardware import lookup_gpu
from kernelpilot.prompts import load_oneshot_pair
from kernelpilot.suites import load_suite
from kernelpilot.workflow import ScriptedExecutor, WorkflowConfig, run_workflow

REPO = Path(__file__).resolve().parents[1]
TRANSCRIPTS = REPO / "tests" / "fixtures" / "transcripts" / "level1_95"


def main() -> None:
    task = load_suite(REPO / "tests" / "fixtures" / "suite")[0]
    few_base, few_new = load_oneshot_pair()
    config = WorkflowConfig(
        gpu=lookup_gpu("rtx6000"),
        few_base=few_base,
        few_new=few_new,
        pricing=BackendPricing(prompt_per_1k=0.001, completion_per_1k=0.002),
    )
    backend = MockBackend(TRANSCRIPTS)
    executor = ScriptedExecutor(TRANSCRIPTS / "executor.json")

    result = run_workflow(task, backend, backend, executor, config)

    print(f"task {result.task_id}: {result.rounds_used} rounds\n")
    print("round  status        speedup  feedback")
    for record in result.rounds:
        speedup = f"{record.report.speedup:.3f}x" if record.report.speedup else "   -  "
        mode = record.feedback.mode.name if record.feedback else "(final round, not judged)"
        print(f"{record.round:>5}  {record.candidate.status.name:<12}  {speedup:>7}  {mode}")
    best = result.best
    reference_ms = result.rounds[best.round - 1].report.ref_latency_ms
    print(f"\nbest: round {best.round} at {result.speedup:.3f}x "
          f"({best.latency_ms:.3f} ms vs the {reference_ms:.1f} ms reference)")
    print()
    print(report_cost(result.cost), end="")


if __name__ == "__main__":
    main()
