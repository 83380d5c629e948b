"""Suite statistics, the fake-kernel linter, and cost reporting."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kernelpilot.core import CostEvent, CostLedger
from kernelpilot.evaluation import (
    EmptySuite,
    EvaluationError,
    LintRule,
    lint_file,
    lint_kernel,
    record_cost,
    render_cost_row,
    render_suite_row,
    render_suite_table,
    report_cost,
    score_from_result,
    scores_from_result_files,
    summarize,
)

from conftest import LINT_DIR

# Four tasks: one fast win, one failure, one correct-but-slower, one modest win.
SCORES = [2.0, 0.0, 0.5, 1.5]


class TestSummarize:
    def test_fixed_vector_statistics(self):
        summary = summarize(SCORES)
        assert summary.n_tasks == 4
        assert summary.correctness_pct == 75.0
        assert summary.mean_speedup == 1.0
        assert summary.median_speedup == 1.0
        assert summary.p75_speedup == pytest.approx(1.625)
        assert summary.fast1_pct == 50.0

    def test_percentile_matches_numpy_linear_interpolation(self):
        scores = [0.3, 1.4, 2.8, 0.9, 1.1, 5.0, 0.0]
        summary = summarize(scores)
        assert summary.p75_speedup == float(np.percentile(scores, 75))
        assert summary.median_speedup == float(np.median(scores))

    def test_failed_tasks_drag_the_statistics(self):
        # zero-filling means a failure lowers every statistic, not just correctness
        with_fail = summarize([2.0, 2.0, 0.0])
        without = summarize([2.0, 2.0])
        assert with_fail.mean_speedup < without.mean_speedup
        assert with_fail.median_speedup <= without.median_speedup

    def test_fast1_denominator_all_vs_correct(self):
        assert summarize(SCORES, "all").fast1_pct == 50.0
        assert summarize(SCORES, "correct").fast1_pct == pytest.approx(200.0 / 3.0)

    def test_fast1_requires_strict_improvement(self):
        # a 1.00x kernel is correct but not a win
        summary = summarize([1.0, 1.0])
        assert summary.correctness_pct == 100.0
        assert summary.fast1_pct == 0.0

    def test_all_failed_suite(self):
        summary = summarize([0.0, 0.0], "correct")
        assert summary.correctness_pct == 0.0
        assert summary.fast1_pct == 0.0  # 0/0 reported as zero, not NaN

    def test_empty_suite_raises(self):
        with pytest.raises(EmptySuite):
            summarize([])

    def test_negative_scores_rejected(self):
        with pytest.raises(EvaluationError, match="non-negative"):
            summarize([1.0, -0.5])

    def test_unknown_denominator_rejected(self):
        with pytest.raises(EvaluationError, match="fast1_denominator"):
            summarize(SCORES, "either")

    @given(
        st.lists(
            st.integers(min_value=0, max_value=500).map(lambda n: n / 100.0),
            min_size=1,
            max_size=40,
        )
    )
    def test_fast1_never_exceeds_correctness_over_all_tasks(self, scores):
        summary = summarize(scores, "all")
        assert summary.fast1_pct <= summary.correctness_pct + 1e-9

    @given(
        # Quarters are exact dyadic rationals, so the mean over any ordering
        # accrues no rounding and equality can be exact.
        st.lists(
            st.integers(min_value=0, max_value=500).map(lambda n: n / 4.0),
            min_size=1,
            max_size=20,
        ),
        st.randoms(use_true_random=False),
    )
    def test_permutation_invariance(self, scores, rng):
        shuffled = list(scores)
        rng.shuffle(shuffled)
        assert summarize(shuffled) == summarize(scores)


class TestRendering:
    def test_row_golden(self):
        assert render_suite_row(summarize(SCORES)) == "75.0% | 1.000 | 1.625 | 1.000 | 50.0%"

    def test_table_golden(self):
        assert render_suite_table(summarize(SCORES), label="replay") == (
            "Method | Correct | Median | 75% | Perf | Fast1\n"
            "replay | 75.0% | 1.000 | 1.625 | 1.000 | 50.0%\n"
        )


class TestScoreExtraction:
    def test_speedup_taken_when_present(self):
        assert score_from_result({"speedup": 1.7}) == 1.7

    def test_missing_null_or_zero_speedup_scores_zero(self):
        assert score_from_result({}) == 0.0
        assert score_from_result({"speedup": None}) == 0.0
        assert score_from_result({"speedup": 0}) == 0.0

    def test_files_read_in_sorted_order(self, tmp_path):
        (tmp_path / "b.json").write_text('{"speedup": 2.0}')
        (tmp_path / "a.json").write_text('{"speedup": 1.5}')
        scores = scores_from_result_files(tmp_path.glob("*.json"))
        assert scores == [1.5, 2.0]


# --------------------------------------------------------------------------- #
# fake-kernel linter
# --------------------------------------------------------------------------- #


class TestLinterOnFixtures:
    """The fixtures are verbatim submissions of the kinds the audit targets."""

    def _rules(self, name):
        return [(f.rule, f.line_start) for f in lint_file(LINT_DIR / name)]

    def test_pure_pytorch_rewrite_has_no_device_kernel(self):
        assert self._rules("no_kernel_conv3d_groupnorm.py") == [
            (LintRule.NO_DEVICE_KERNEL, 1)
        ]

    def test_broadcast_trick_has_no_device_kernel(self):
        assert self._rules("no_kernel_diag_matmul.py") == [(LintRule.NO_DEVICE_KERNEL, 1)]

    def test_fallback_kernel_trips_all_three_rules(self):
        assert self._rules("fallback_batched_matmul.py") == [
            (LintRule.NO_DEVICE_KERNEL, 1),
            (LintRule.LOAD_FAIL_FALLBACK, 13),
            (LintRule.TRY_EXCEPT_FALLBACK, 31),
        ]

    def test_genuine_kernels_are_clean(self):
        assert self._rules("genuine_elementwise_add.py") == []
        assert self._rules("genuine_fused_bias_relu.py") == []

    def test_findings_carry_excerpts(self):
        findings = lint_file(LINT_DIR / "fallback_batched_matmul.py")
        fallback = [f for f in findings if f.rule is LintRule.LOAD_FAIL_FALLBACK][0]
        assert "torch.bmm" in fallback.excerpt


class TestLinterUnits:
    def test_global_token_inside_cuda_string_counts(self):
        source = 'kernel = """__global__ void k(float* x) {}"""\n'
        assert lint_kernel(source) == ()

    def test_unparsable_source_still_gets_token_pass(self):
        findings = lint_kernel("def broken(:\n    pass\n")
        assert [f.rule for f in findings] == [LintRule.NO_DEVICE_KERNEL]

    def test_handler_without_torch_call_is_not_flagged(self):
        source = (
            '"""__global__"""\n'
            "try:\n    run()\nexcept RuntimeError:\n    raise\n"
        )
        assert lint_kernel(source) == ()

    def test_handler_with_nested_torch_call_is_flagged(self):
        source = (
            '"""__global__"""\n'
            "try:\n    run()\nexcept Exception:\n"
            "    out = torch.nn.functional.relu(x)\n"
        )
        assert [f.rule for f in lint_kernel(source)] == [LintRule.TRY_EXCEPT_FALLBACK]

    def test_not_guard_on_module_handle_is_flagged(self):
        source = (
            '"""__global__"""\n'
            "if not self._ext_lib:\n    return torch.matmul(a, b)\n"
        )
        assert [f.rule for f in lint_kernel(source)] == [LintRule.LOAD_FAIL_FALLBACK]

    def test_none_guard_without_return_is_not_flagged(self):
        source = (
            '"""__global__"""\n'
            "if module is None:\n    raise RuntimeError('no build')\n"
        )
        assert lint_kernel(source) == ()

    def test_guard_on_non_module_name_is_not_flagged(self):
        source = '"""__global__"""\nif not x.is_contiguous():\n    return torch.clone(x)\n'
        assert lint_kernel(source) == ()

    def test_indented_method_body_is_dedented_before_parsing(self):
        source = (
            "    def forward(self, x):\n"
            "        try:\n            out = go(x)\n"
            "        except Exception:\n            out = torch.relu(x)\n"
            "        return out\n"
        )
        rules = [f.rule for f in lint_kernel(source)]
        assert LintRule.TRY_EXCEPT_FALLBACK in rules


# --------------------------------------------------------------------------- #
# cost reporting
# --------------------------------------------------------------------------- #


def _ledger():
    ledger = CostLedger()
    for event in (
        CostEvent(phase="generate", seconds=600.0, dollars=0.18, prompt_tokens=90_000,
                  completion_tokens=30_000),
        CostEvent(phase="judge", seconds=210.0, dollars=0.12, prompt_tokens=60_000,
                  completion_tokens=9_000),
        CostEvent(phase="compile", seconds=420.0),
        CostEvent(phase="execute", seconds=180.0),
        CostEvent(phase="profile", seconds=180.0),
    ):
        record_cost(ledger, event)
    return ledger


class TestCostReporting:
    def test_cost_row_golden(self):
        assert render_cost_row(_ledger()) == "API Cost $0.30, Time 26.5 min"

    def test_full_report(self):
        assert report_cost(_ledger()) == (
            "phase      minutes\n"
            "generate   10.0\n"
            "judge      3.5\n"
            "compile    7.0\n"
            "execute    3.0\n"
            "profile    3.0\n"
            "total      26.5\n"
            "API cost   $0.30\n"
            "tokens     150000 prompt, 39000 completion\n"
        )

    def test_empty_ledger_renders_zero(self):
        assert render_cost_row(CostLedger()) == "API Cost $0.00, Time 0.0 min"
