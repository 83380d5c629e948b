"""Backends, metered calls, reply extraction, and Judge JSON parsing."""

import json
import warnings

import pytest

from kernelpilot.core import CostEvent, CostLedger, FeedbackMode
from kernelpilot.gateway import (
    AgentReply,
    AuthError,
    BackendPricing,
    BudgetExceeded,
    EmptyReply,
    HTTPBackend,
    JUDGE_REASK_LIMIT,
    MissingKey,
    MockBackend,
    NetworkError,
    NoJsonFound,
    TranscriptMiss,
    WordCapWarning,
    WrongMode,
    ask_judge,
    call_agent,
    extract_kernel_code,
    parse_judge_feedback,
    serialize_judge_feedback,
)
from kernelpilot.prompts import PromptKind

from conftest import JUDGE_REPLIES, TRANSCRIPTS


class TestMockBackend:
    def test_replays_recorded_reply(self):
        backend = MockBackend(TRANSCRIPTS)
        reply = backend.complete("ignored prompt", kind=PromptKind.CODER_INITIAL, round=1)
        assert "cross_entropy" in reply.text
        assert reply.completion_tokens == len(reply.text.split())
        assert backend.calls == [("coder_initial", 1)]

    def test_prompt_tokens_track_the_prompt(self):
        backend = MockBackend(TRANSCRIPTS)
        reply = backend.complete("one two three", kind=PromptKind.CODER_INITIAL, round=1)
        assert reply.prompt_tokens == 3

    def test_missing_record_raises(self):
        backend = MockBackend(TRANSCRIPTS)
        with pytest.raises(TranscriptMiss):
            backend.complete("p", kind=PromptKind.CODER_INITIAL, round=9)

    def test_missing_directory_raises(self, tmp_path):
        with pytest.raises(TranscriptMiss):
            MockBackend(tmp_path / "nope")


class _Canned:
    """Backend stub answering from a list of texts, in order."""

    def __init__(self, texts, prompt_tokens=100, completion_tokens=50):
        self.texts = list(texts)
        self.prompts = []
        self.prompt_tokens = prompt_tokens
        self.completion_tokens = completion_tokens

    def complete(self, prompt, *, kind, round):
        self.prompts.append(prompt)
        return AgentReply(
            text=self.texts.pop(0),
            prompt_tokens=self.prompt_tokens,
            completion_tokens=self.completion_tokens,
            latency_s=0.25,
        )


class TestCallAgent:
    def test_meters_one_event_per_call(self):
        ledger = CostLedger()
        backend = _Canned(["hello"])
        pricing = BackendPricing(prompt_per_1k=1.0, completion_per_1k=2.0)
        reply = call_agent(
            backend,
            PromptKind.CODER_INITIAL,
            {"few_base": "a", "few_new": "b", "arch_src": "c"},
            round=1,
            ledger=ledger,
            pricing=pricing,
        )
        assert reply.text == "hello"
        assert len(ledger.entries) == 1
        event = ledger.entries[0]
        assert event.phase == "generate"
        assert event.dollars == pytest.approx(100 / 1000 * 1.0 + 50 / 1000 * 2.0)
        assert event.seconds == pytest.approx(0.25)

    def test_judge_kinds_bill_the_judge_phase(self):
        ledger = CostLedger()
        call_agent(
            _Canned(["{}"]),
            PromptKind.JUDGE_CORRECT,
            {"ERROR_LOG": "e", "PYTORCH_CODE": "p", "CUDA_CODE": "c"},
            round=2,
            ledger=ledger,
            pricing=BackendPricing(),
        )
        assert ledger.entries[0].phase == "judge"

    def test_budget_is_preflight_only(self):
        ledger = CostLedger()
        pricing = BackendPricing(prompt_per_1k=10.0)
        context = {"few_base": "a", "few_new": "b", "arch_src": "c"}
        # First call pushes the ledger past the cap but still returns.
        reply = call_agent(
            _Canned(["paid reply"]),
            PromptKind.CODER_INITIAL,
            context,
            round=1,
            ledger=ledger,
            pricing=pricing,
            budget_dollars=0.5,
        )
        assert reply.text == "paid reply"
        assert ledger.api_dollars == pytest.approx(1.0)
        # The next call must not be placed at all.
        untouched = _Canned(["never sent"])
        with pytest.raises(BudgetExceeded):
            call_agent(
                untouched,
                PromptKind.CODER_INITIAL,
                context,
                round=2,
                ledger=ledger,
                pricing=pricing,
                budget_dollars=0.5,
            )
        assert untouched.prompts == []

    def test_blank_reply_raises(self):
        with pytest.raises(EmptyReply):
            call_agent(
                _Canned(["   \n"]),
                PromptKind.CODER_INITIAL,
                {"few_base": "a", "few_new": "b", "arch_src": "c"},
                round=1,
            )


class TestHTTPBackend:
    def _response(self, status=200, body=None, text=""):
        class R:
            status_code = status

            def json(self):
                if body is None:
                    raise ValueError("no json")
                return body

        R.text = text
        return R()

    def test_missing_api_key_is_auth_error(self, monkeypatch):
        monkeypatch.delenv("TEST_KEY", raising=False)
        backend = HTTPBackend("https://api.example", "m", api_key_env="TEST_KEY")
        with pytest.raises(AuthError):
            backend.complete("p", kind=PromptKind.CODER_INITIAL, round=1)

    def test_success_parses_content_and_usage(self, monkeypatch):
        monkeypatch.setenv("TEST_KEY", "sk-x")
        seen = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            seen["url"] = url
            seen["payload"] = json
            seen["headers"] = headers
            return self._response(
                body={
                    "choices": [{"message": {"content": "the reply"}}],
                    "usage": {"prompt_tokens": 7, "completion_tokens": 3},
                }
            )

        monkeypatch.setattr("kernelpilot.gateway.requests.post", fake_post)
        backend = HTTPBackend("https://api.example/v1/", "model-x", api_key_env="TEST_KEY")
        reply = backend.complete("hi", kind=PromptKind.CODER_INITIAL, round=1)
        assert reply.text == "the reply"
        assert (reply.prompt_tokens, reply.completion_tokens) == (7, 3)
        assert seen["url"] == "https://api.example/v1/chat/completions"
        assert seen["payload"]["model"] == "model-x"
        assert "temperature" not in seen["payload"]
        assert seen["headers"]["Authorization"] == "Bearer sk-x"

    def test_temperature_sent_only_when_configured(self, monkeypatch):
        monkeypatch.setenv("TEST_KEY", "sk-x")
        seen = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            seen["payload"] = json
            return self._response(body={"choices": [{"message": {"content": "ok"}}]})

        monkeypatch.setattr("kernelpilot.gateway.requests.post", fake_post)
        backend = HTTPBackend(
            "https://api.example", "m", api_key_env="TEST_KEY", temperature=0.2
        )
        backend.complete("p", kind=PromptKind.CODER_INITIAL, round=1)
        assert seen["payload"]["temperature"] == 0.2

    def test_401_fails_immediately(self, monkeypatch):
        monkeypatch.setenv("TEST_KEY", "sk-x")
        calls = []

        def fake_post(url, **kwargs):
            calls.append(url)
            return self._response(status=401)

        monkeypatch.setattr("kernelpilot.gateway.requests.post", fake_post)
        backend = HTTPBackend("https://api.example", "m", api_key_env="TEST_KEY", max_retries=3)
        with pytest.raises(AuthError):
            backend.complete("p", kind=PromptKind.CODER_INITIAL, round=1)
        assert len(calls) == 1

    def test_5xx_retries_then_network_error(self, monkeypatch):
        monkeypatch.setenv("TEST_KEY", "sk-x")
        calls = []

        def fake_post(url, **kwargs):
            calls.append(url)
            return self._response(status=503, text="busy")

        monkeypatch.setattr("kernelpilot.gateway.requests.post", fake_post)
        monkeypatch.setattr("kernelpilot.gateway.time.sleep", lambda s: None)
        backend = HTTPBackend("https://api.example", "m", api_key_env="TEST_KEY", max_retries=2)
        with pytest.raises(NetworkError):
            backend.complete("p", kind=PromptKind.CODER_INITIAL, round=1)
        assert len(calls) == 3  # initial + 2 retries


class TestKernelExtraction:
    def test_single_block(self):
        text = "Intro.\n```python\nx = 1\n```\nOutro."
        assert extract_kernel_code(text) == "x = 1"

    def test_last_block_wins(self):
        text = "```cuda\n// snippet\n```\nfull version:\n```python\nfull = True\n```\n"
        assert extract_kernel_code(text) == "full = True"

    def test_transcript_round6_two_blocks(self):
        reply = (TRANSCRIPTS / "06_coder_optimize.txt").read_text()
        code = extract_kernel_code(reply)
        assert code.startswith("import torch")
        assert "staged[1024]" not in code  # the short first block is skipped
        assert "load_inline" in code

    def test_unfenced_reply_taken_whole(self):
        assert extract_kernel_code("  just code  ") == "just code"

    def test_empty_reply_raises(self):
        with pytest.raises(EmptyReply):
            extract_kernel_code("```python\n\n```")
        with pytest.raises(EmptyReply):
            extract_kernel_code("   ")


CORRECTION_REPLY = json.dumps(
    {
        "critical_issue": "Row max is never subtracted.",
        "why_it_matters": "exp overflows for large logits, outputs diverge.",
        "minimal_fix_hint": "Subtract the per-row max before exponentiation.",
    }
)


class TestJudgeParsing:
    @pytest.mark.parametrize(
        "name", ["optimize_full_metrics.txt", "optimize_subset_metrics.txt"]
    )
    def test_recorded_optimization_payloads_parse(self, name):
        text = (JUDGE_REPLIES / name).read_text()
        feedback = parse_judge_feedback(text, FeedbackMode.OPTIMIZATION)
        assert feedback.mode is FeedbackMode.OPTIMIZATION
        assert feedback.optimization is not None
        assert feedback.optimization.bottleneck
        assert feedback.optimization.modification_plan

    def test_multiline_string_values_survive(self):
        text = (JUDGE_REPLIES / "optimize_full_metrics.txt").read_text()
        feedback = parse_judge_feedback(text, FeedbackMode.OPTIMIZATION)
        assert "\n" in feedback.optimization.bottleneck

    def test_correction_payload(self):
        feedback = parse_judge_feedback(CORRECTION_REPLY, FeedbackMode.CORRECTION)
        assert feedback.correction.critical_issue == "Row max is never subtracted."

    def test_json_wrapped_in_prose_and_fence(self):
        text = "Sure, here is my analysis:\n```json\n" + CORRECTION_REPLY + "\n```\nDone."
        feedback = parse_judge_feedback(text, FeedbackMode.CORRECTION)
        assert feedback.correction is not None

    @pytest.mark.parametrize(
        "name", ["optimize_full_metrics.txt", "optimize_subset_metrics.txt"]
    )
    def test_deleting_any_required_key_raises_missing_key(self, name):
        text = (JUDGE_REPLIES / name).read_text()
        parsed = parse_judge_feedback(text, FeedbackMode.OPTIMIZATION)
        base = {
            "bottleneck": parsed.optimization.bottleneck,
            "optimisation method": parsed.optimization.optimisation_method,
            "modification plan": parsed.optimization.modification_plan,
        }
        for key in base:
            broken = {k: v for k, v in base.items() if k != key}
            with pytest.raises(MissingKey):
                parse_judge_feedback(json.dumps(broken), FeedbackMode.OPTIMIZATION)

    def test_wrong_mode_detected(self):
        with pytest.raises(WrongMode):
            parse_judge_feedback(CORRECTION_REPLY, FeedbackMode.OPTIMIZATION)
        opt = (JUDGE_REPLIES / "optimize_full_metrics.txt").read_text()
        with pytest.raises(WrongMode):
            parse_judge_feedback(opt, FeedbackMode.CORRECTION)

    def test_no_json_raises(self):
        with pytest.raises(NoJsonFound):
            parse_judge_feedback("no structured content here", FeedbackMode.CORRECTION)

    def test_extra_keys_ignored(self):
        obj = json.loads(CORRECTION_REPLY)
        obj["confidence"] = 0.9
        feedback = parse_judge_feedback(json.dumps(obj), FeedbackMode.CORRECTION)
        assert feedback.correction is not None

    def test_word_cap_warns_but_parses(self):
        obj = json.loads(CORRECTION_REPLY)
        obj["critical_issue"] = " ".join(["word"] * 25)  # cap is 20
        with pytest.warns(WordCapWarning):
            feedback = parse_judge_feedback(json.dumps(obj), FeedbackMode.CORRECTION)
        assert len(feedback.correction.critical_issue.split()) == 25

    def test_within_caps_is_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error", WordCapWarning)
            parse_judge_feedback(CORRECTION_REPLY, FeedbackMode.CORRECTION)

    def test_serialize_roundtrip(self):
        feedback = parse_judge_feedback(CORRECTION_REPLY, FeedbackMode.CORRECTION)
        text = serialize_judge_feedback(feedback)
        again = parse_judge_feedback(text, FeedbackMode.CORRECTION)
        assert again == feedback


JUDGE_CONTEXT = {"ERROR_LOG": "e", "PYTORCH_CODE": "p", "CUDA_CODE": "c"}


class TestAskJudge:
    def test_first_try_success_costs_one_call(self):
        backend = _Canned([CORRECTION_REPLY])
        feedback = ask_judge(
            backend, PromptKind.JUDGE_CORRECT, JUDGE_CONTEXT, FeedbackMode.CORRECTION, round=1
        )
        assert feedback is not None
        assert len(backend.prompts) == 1

    def test_reask_appends_parse_error_then_succeeds(self):
        backend = _Canned(["not json at all", CORRECTION_REPLY])
        feedback = ask_judge(
            backend, PromptKind.JUDGE_CORRECT, JUDGE_CONTEXT, FeedbackMode.CORRECTION, round=1
        )
        assert feedback is not None
        assert len(backend.prompts) == 2
        assert "could not be parsed" in backend.prompts[1]
        assert backend.prompts[1].startswith(backend.prompts[0])

    def test_degrades_to_none_after_limit(self):
        bad = ["still prose"] * (JUDGE_REASK_LIMIT + 1)
        backend = _Canned(bad)
        feedback = ask_judge(
            backend, PromptKind.JUDGE_CORRECT, JUDGE_CONTEXT, FeedbackMode.CORRECTION, round=1
        )
        assert feedback is None
        assert len(backend.prompts) == JUDGE_REASK_LIMIT + 1

    def test_every_attempt_is_metered(self):
        ledger = CostLedger()
        backend = _Canned(["prose", "prose", CORRECTION_REPLY])
        ask_judge(
            backend,
            PromptKind.JUDGE_CORRECT,
            JUDGE_CONTEXT,
            FeedbackMode.CORRECTION,
            round=1,
            ledger=ledger,
            pricing=BackendPricing(completion_per_1k=1.0),
        )
        assert len(ledger.entries) == 3
        assert all(e.phase == "judge" for e in ledger.entries)
