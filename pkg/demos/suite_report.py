"""Run a suite end to end and print the benchmark tables.

Uses the bundled replayed suite (one task), writes result files to a
temporary directory the way a real run would, and renders the summary:
correctness, median/75th-percentile/mean speedup over a zero-filled score
vector, the share of tasks beating the reference, and the cost ledger.

    python demos/suite_report.py
"""

import json
import tempfile
from pathlib import Path

from kernelpilot.core import CostLedger
from kernelpilot.evaluation import (
    render_cost_row,
    render_suite_table,
    scores_from_result_files,
    summarize,
)
from kernelpilot.gateway import BackendPricing, MockBackend
from kernelpilot.hardware import lookup_gpu
from kernelpilot.prompts import load_oneshot_pair
from kernelpilot.suites import load_suite
from kernelpilot.workflow import ScriptedExecutor, WorkflowConfig, run_suite

REPO = Path(__file__).resolve().parents[1]
TRANSCRIPTS = REPO / "tests" / "fixtures" / "transcripts" / "level1_95"


def main() -> None:
    tasks = load_suite(REPO / "tests" / "fixtures" / "suite")
    few_base, few_new = load_oneshot_pair()
    config = WorkflowConfig(
        gpu=lookup_gpu("rtx6000"),
        few_base=few_base,
        few_new=few_new,
        pricing=BackendPricing(prompt_per_1k=0.001, completion_per_1k=0.002),
    )

    def backend_factory(task):
        backend = MockBackend(TRANSCRIPTS)
        return backend, backend

    executor = ScriptedExecutor(TRANSCRIPTS / "executor.json")

    with tempfile.TemporaryDirectory() as out:
        paths = run_suite(tasks, backend_factory, executor, config, Path(out))
        print(f"wrote {len(paths)} result file(s)\n")
        summary = summarize(scores_from_result_files(paths))
        print(render_suite_table(summary, label="replayed"), end="")
        ledger = CostLedger()
        for path in paths:
            ledger.merge(CostLedger.from_dict(json.loads(path.read_text())["cost"]))
        print(render_cost_row(ledger))


if __name__ == "__main__":
    main()
