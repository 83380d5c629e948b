"""Template registry and rendering: declared placeholders, byte-exactness."""

import json

import pytest
from hypothesis import given, strategies as st

from kernelpilot.prompts import (
    ALL_PLACEHOLDERS,
    PromptKind,
    TEMPLATES,
    UnresolvedPlaceholder,
    load_oneshot_pair,
    placeholders_in,
    render_prompt,
    template_for,
)

from conftest import FIXTURES, GOLDENS


def golden_context(kind: PromptKind) -> dict:
    contexts = json.loads((FIXTURES / "prompt_contexts.json").read_text())
    return contexts[kind.value]


EXPECTED_PLACEHOLDERS = {
    PromptKind.CODER_INITIAL: {"few_base", "few_new", "arch_src"},
    PromptKind.CODER_CORRECT: {"ERROR_LOG", "CUDA_CODE", "Problem"},
    PromptKind.CODER_OPTIMIZE: {
        "gpu_name",
        "gpu_arch",
        "gpu_items",
        "CUDA_CODE",
        "optimization_suggestion",
    },
    PromptKind.JUDGE_CORRECT: {"ERROR_LOG", "PYTORCH_CODE", "CUDA_CODE"},
    PromptKind.JUDGE_OPTIMIZE: {
        "gpu_name",
        "gpu_arch",
        "gpu_items",
        "python_code",
        "CUDA_CODE",
        "NCU_METRICS",
    },
}


class TestRegistry:
    def test_every_kind_has_a_template(self):
        assert set(TEMPLATES) == set(PromptKind)

    @pytest.mark.parametrize("kind", list(PromptKind))
    def test_declared_placeholder_sets(self, kind):
        assert placeholders_in(kind) == EXPECTED_PLACEHOLDERS[kind]

    @pytest.mark.parametrize("kind", list(PromptKind))
    def test_every_declared_placeholder_appears_in_body(self, kind):
        body = template_for(kind).body
        for name in placeholders_in(kind):
            assert "{" + name + "}" in body

    def test_all_placeholders_is_the_union(self):
        union = set()
        for names in EXPECTED_PLACEHOLDERS.values():
            union |= names
        assert ALL_PLACEHOLDERS == union


class TestRendering:
    @pytest.mark.parametrize("kind", list(PromptKind))
    def test_rendered_prompt_matches_golden(self, kind):
        rendered = render_prompt(kind, golden_context(kind))
        golden = (GOLDENS / "prompts" / f"{kind.value}.txt").read_text()
        assert rendered == golden

    @pytest.mark.parametrize("kind", list(PromptKind))
    def test_missing_placeholder_raises(self, kind):
        context = dict(golden_context(kind))
        dropped = sorted(context)[0]
        del context[dropped]
        with pytest.raises(UnresolvedPlaceholder, match=dropped):
            render_prompt(kind, context)

    @pytest.mark.parametrize("kind", list(PromptKind))
    def test_extra_context_keys_are_ignored(self, kind):
        context = dict(golden_context(kind))
        baseline = render_prompt(kind, context)
        context["unrelated_extra"] = "ignored"
        assert render_prompt(kind, context) == baseline

    def test_literal_json_braces_survive(self):
        rendered = render_prompt(PromptKind.JUDGE_OPTIMIZE, golden_context(PromptKind.JUDGE_OPTIMIZE))
        assert '"bottleneck": "<max 30 words>"' in rendered
        assert rendered.count("{") >= 1  # the JSON schema block keeps its braces

    def test_substitution_is_single_pass(self):
        # A value that *looks* like another placeholder must not be re-expanded.
        context = dict(golden_context(PromptKind.CODER_CORRECT))
        context["Problem"] = "see {CUDA_CODE} above"
        rendered = render_prompt(PromptKind.CODER_CORRECT, context)
        assert "see {CUDA_CODE} above" in rendered

    @given(
        values=st.lists(
            st.text(
                alphabet=st.characters(blacklist_categories=("Cs",)), min_size=0, max_size=80
            ),
            min_size=3,
            max_size=3,
        )
    )
    def test_rendering_embeds_values_verbatim(self, values):
        few_base, few_new, arch = values
        rendered = render_prompt(
            PromptKind.CODER_INITIAL,
            {"few_base": few_base, "few_new": few_new, "arch_src": arch},
        )
        assert few_base in rendered
        assert few_new in rendered
        assert arch in rendered


class TestOneShotPair:
    def test_pair_loads_and_is_plausible(self):
        few_base, few_new = load_oneshot_pair()
        assert "class Model" in few_base
        assert "load_inline" in few_new
        assert "__global__" in few_new
        assert "class ModelNew" in few_new
