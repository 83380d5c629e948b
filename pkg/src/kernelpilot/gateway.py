"""Talking to the Coder and Judge: backends, reply parsing, cost metering.

The workflow engine never speaks to a model directly; it goes through
:func:`call_agent`, which renders the prompt, dispatches to a backend
(mock transcript or HTTP chat endpoint), meters tokens/dollars into the
cost ledger, and enforces the budget cap.  Reply post-processing — fenced
code extraction and Judge JSON parsing — also lives here.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Protocol

import requests

from .core import (
    CorrectionFeedback,
    CostEvent,
    CostLedger,
    FeedbackMode,
    JudgeFeedback,
    OptimizationFeedback,
)
from .prompts import PromptKind, render_prompt


class GatewayError(Exception):
    """Base class for agent-communication failures."""


class EmptyReply(GatewayError):
    """The agent replied with no usable text."""


class ParseError(GatewayError):
    """Base for reply-shape failures that are worth a re-ask."""


class NoJsonFound(ParseError):
    """No JSON object could be located in the Judge reply."""


class MissingKey(ParseError):
    """The located JSON object lacks a required key."""


class WrongMode(ParseError):
    """The JSON carries the other mode's keys (correction vs optimization)."""


class TranscriptMiss(GatewayError):
    """The mock transcript has no record for the requested (kind, round)."""


class NetworkError(GatewayError):
    """Transient transport failure (retryable)."""


class AuthError(GatewayError):
    """Credential problem (fatal, never retried)."""


class BudgetExceeded(GatewayError):
    """The cost ledger passed the configured dollar cap."""


class WordCapWarning(UserWarning):
    """A Judge field exceeded its advisory word cap (never an error)."""


# --------------------------------------------------------------------------- #
# replies and backends
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class AgentReply:
    """One model reply plus its usage accounting."""

    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_s: float = 0.0


class LLMBackend(Protocol):
    """Anything that can answer a rendered prompt."""

    def complete(self, prompt: str, *, kind: PromptKind, round: int) -> AgentReply: ...


@dataclass(frozen=True)
class BackendPricing:
    """Dollars per 1000 tokens, split by direction."""

    prompt_per_1k: float = 0.0
    completion_per_1k: float = 0.0

    def dollars(self, prompt_tokens: int, completion_tokens: int) -> float:
        return (
            prompt_tokens / 1000.0 * self.prompt_per_1k
            + completion_tokens / 1000.0 * self.completion_per_1k
        )


class MockBackend:
    """Replays a recorded transcript; deterministic and thread-safe.

    A transcript directory holds one file per (kind, round) named
    ``{round:02d}_{kind}.txt`` whose content is the raw reply text.  Token
    counts are derived from whitespace word counts and the reported latency
    is fixed, so replayed runs are byte-reproducible.
    """

    def __init__(self, transcript_dir: str | Path, latency_s: float = 0.01) -> None:
        self._dir = Path(transcript_dir)
        self._latency_s = latency_s
        self._records: dict[tuple[str, int], str] = {}
        self._lock = threading.Lock()
        self.calls: list[tuple[str, int]] = []
        pattern = re.compile(r"^(\d{2})_([a-z_]+)\.txt$")
        if not self._dir.is_dir():
            raise TranscriptMiss(f"transcript directory {self._dir} does not exist")
        for path in sorted(self._dir.iterdir()):
            match = pattern.match(path.name)
            if match:
                self._records[(match.group(2), int(match.group(1)))] = path.read_text()

    def complete(self, prompt: str, *, kind: PromptKind, round: int) -> AgentReply:
        with self._lock:
            self.calls.append((kind.value, round))
        try:
            text = self._records[(kind.value, round)]
        except KeyError:
            raise TranscriptMiss(f"no transcript record for kind={kind.value} round={round}")
        return AgentReply(
            text=text,
            prompt_tokens=len(prompt.split()),
            completion_tokens=len(text.split()),
            latency_s=self._latency_s,
        )


class HTTPBackend:
    """Minimal chat-completion client (OpenAI-style wire shape), no streaming.

    The API key is read from an environment variable at call time; decoding
    parameters are sent only when explicitly configured.  Transport failures
    and 5xx responses are retried with exponential backoff, then surface as
    :class:`NetworkError`; 401/403 are :class:`AuthError` and never retried.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "LLM_API_KEY",
        temperature: Optional[float] = None,
        timeout_s: float = 120.0,
        max_retries: int = 3,
        backoff_s: float = 0.5,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s

    def complete(self, prompt: str, *, kind: PromptKind, round: int) -> AgentReply:
        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        if self.temperature is not None:
            payload["temperature"] = self.temperature

        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            started = time.perf_counter()
            try:
                response = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers={"Authorization": f"Bearer {api_key}"},
                    timeout=self.timeout_s,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {response.status_code})")
            if response.status_code >= 400:
                last_error = NetworkError(f"HTTP {response.status_code}: {response.text[:200]}")
                continue
            try:
                body = response.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise NetworkError(f"malformed completion response: {exc}") from exc
            usage = body.get("usage", {}) or {}
            return AgentReply(
                text=text,
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
                latency_s=time.perf_counter() - started,
            )
        raise NetworkError(f"request failed after {self.max_retries + 1} attempts: {last_error}")


# --------------------------------------------------------------------------- #
# metered calls
# --------------------------------------------------------------------------- #

_PHASE_BY_KIND = {
    PromptKind.CODER_INITIAL: "generate",
    PromptKind.CODER_CORRECT: "generate",
    PromptKind.CODER_OPTIMIZE: "generate",
    PromptKind.JUDGE_CORRECT: "judge",
    PromptKind.JUDGE_OPTIMIZE: "judge",
}


def call_agent(
    backend: LLMBackend,
    kind: PromptKind,
    context: Mapping[str, str],
    *,
    round: int,
    ledger: Optional[CostLedger] = None,
    pricing: Optional[BackendPricing] = None,
    budget_dollars: Optional[float] = None,
    prompt_override: Optional[str] = None,
) -> AgentReply:
    """Render, dispatch, meter.  Exactly one cost event per call.

    ``prompt_override`` lets re-asks append a parse error to an already
    rendered prompt without re-deriving the context.  The budget cap is
    enforced *before* dispatch: once the ledger has reached
    ``budget_dollars`` no further call is placed, but a reply that was
    already paid for is always returned and used.
    """

    if ledger is not None and budget_dollars is not None and ledger.api_dollars >= budget_dollars:
        raise BudgetExceeded(
            f"ledger at ${ledger.api_dollars:.4f} has reached the ${budget_dollars:.4f} cap"
        )
    prompt = prompt_override if prompt_override is not None else render_prompt(kind, context)
    reply = backend.complete(prompt, kind=kind, round=round)
    if not reply.text.strip():
        raise EmptyReply(f"{kind.value} round {round}: backend returned empty text")
    if ledger is not None:
        pricing = pricing or BackendPricing()
        ledger.record(
            CostEvent(
                phase=_PHASE_BY_KIND[kind],
                seconds=reply.latency_s,
                dollars=pricing.dollars(reply.prompt_tokens, reply.completion_tokens),
                prompt_tokens=reply.prompt_tokens,
                completion_tokens=reply.completion_tokens,
            )
        )
    return reply


# --------------------------------------------------------------------------- #
# kernel-code extraction
# --------------------------------------------------------------------------- #

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def extract_kernel_code(reply_text: str) -> str:
    """Pull the kernel source out of a Coder reply.

    The last fenced code block wins (models often restate or prefix partial
    snippets; the final block is the full program by convention).  A reply
    without fences is taken whole, trimmed.  Raises :class:`EmptyReply` if
    nothing remains.
    """

    blocks = _FENCE_RE.findall(reply_text)
    if blocks:
        code = blocks[-1].strip("\n")
        if not code.strip():
            raise EmptyReply("last fenced block is empty")
        return code
    code = reply_text.strip()
    if not code:
        raise EmptyReply("reply contains no text")
    return code


# --------------------------------------------------------------------------- #
# judge JSON parsing
# --------------------------------------------------------------------------- #

CORRECTION_KEYS = ("critical_issue", "why_it_matters", "minimal_fix_hint")
OPTIMIZATION_KEYS = ("bottleneck", "optimisation method", "modification plan")

#: Advisory word caps from the Judge output schema; exceeding one warns.
WORD_CAPS = {
    "critical_issue": 20,
    "why_it_matters": 35,
    "minimal_fix_hint": 20,
    "bottleneck": 30,
    "optimisation method": 35,
    "modification plan": 35,
}


def _first_json_object(text: str) -> dict:
    """Locate and decode the first JSON object in free-form text.

    Judges wrap JSON in prose, code fences, or line-broken strings; decoding
    is therefore non-strict (literal newlines inside strings are accepted).
    """

    decoder = json.JSONDecoder(strict=False)
    index = text.find("{")
    while index != -1:
        try:
            obj, _ = decoder.raw_decode(text, index)
        except ValueError:
            index = text.find("{", index + 1)
            continue
        if isinstance(obj, dict):
            return obj
        index = text.find("{", index + 1)
    raise NoJsonFound("no JSON object found in reply")


def _check_word_caps(obj: Mapping[str, object], keys: tuple[str, ...]) -> None:
    for key in keys:
        cap = WORD_CAPS[key]
        words = len(str(obj[key]).split())
        if words > cap:
            warnings.warn(
                f"judge field {key!r} has {words} words, cap is {cap}",
                WordCapWarning,
                stacklevel=3,
            )


def parse_judge_feedback(raw_text: str, mode: FeedbackMode) -> JudgeFeedback:
    """Decode a Judge reply into structured feedback for ``mode``.

    Extra keys are ignored.  A reply carrying the *other* mode's complete key
    set raises :class:`WrongMode`; any other absent key raises
    :class:`MissingKey`.  Word-cap violations warn but never fail.
    """

    obj = _first_json_object(raw_text)
    required = CORRECTION_KEYS if mode is FeedbackMode.CORRECTION else OPTIMIZATION_KEYS
    other = OPTIMIZATION_KEYS if mode is FeedbackMode.CORRECTION else CORRECTION_KEYS
    missing = [key for key in required if key not in obj]
    if missing:
        if all(key in obj for key in other):
            raise WrongMode(
                f"reply carries {('optimization' if mode is FeedbackMode.CORRECTION else 'correction')} "
                f"keys but {mode.value} was expected"
            )
        raise MissingKey(f"judge reply lacks required key(s): {', '.join(missing)}")
    _check_word_caps(obj, required)
    if mode is FeedbackMode.CORRECTION:
        return JudgeFeedback(
            mode=mode,
            correction=CorrectionFeedback(
                critical_issue=str(obj["critical_issue"]),
                why_it_matters=str(obj["why_it_matters"]),
                minimal_fix_hint=str(obj["minimal_fix_hint"]),
            ),
        )
    return JudgeFeedback(
        mode=mode,
        optimization=OptimizationFeedback(
            bottleneck=str(obj["bottleneck"]),
            optimisation_method=str(obj["optimisation method"]),
            modification_plan=str(obj["modification plan"]),
        ),
    )


def serialize_judge_feedback(feedback: JudgeFeedback) -> str:
    """Schema-shaped JSON text; inverse of :func:`parse_judge_feedback`."""

    if feedback.mode is FeedbackMode.CORRECTION:
        assert feedback.correction is not None
        payload = {
            "critical_issue": feedback.correction.critical_issue,
            "why_it_matters": feedback.correction.why_it_matters,
            "minimal_fix_hint": feedback.correction.minimal_fix_hint,
        }
    else:
        assert feedback.optimization is not None
        payload = {
            "bottleneck": feedback.optimization.bottleneck,
            "optimisation method": feedback.optimization.optimisation_method,
            "modification plan": feedback.optimization.modification_plan,
        }
    return json.dumps(payload, indent=2)


#: How many times a malformed Judge reply is re-asked before degrading.
JUDGE_REASK_LIMIT = 3

_REASK_SUFFIX = (
    "\n\nYour previous reply could not be parsed: {error}\n"
    "Return only the JSON object in the specified format."
)


def ask_judge(
    backend: LLMBackend,
    kind: PromptKind,
    context: Mapping[str, str],
    mode: FeedbackMode,
    *,
    round: int,
    ledger: Optional[CostLedger] = None,
    pricing: Optional[BackendPricing] = None,
    budget_dollars: Optional[float] = None,
    reask_limit: int = JUDGE_REASK_LIMIT,
) -> Optional[JudgeFeedback]:
    """Ask the Judge, re-asking on malformed JSON; None means "degraded".

    The first ask uses the rendered prompt; each re-ask appends the parse
    error.  After ``reask_limit`` re-asks the round degrades (the caller
    falls back to self-refinement) rather than failing the workflow.
    """

    prompt = render_prompt(kind, context)
    attempt_prompt = prompt
    for _ in range(reask_limit + 1):
        reply = call_agent(
            backend,
            kind,
            context,
            round=round,
            ledger=ledger,
            pricing=pricing,
            budget_dollars=budget_dollars,
            prompt_override=attempt_prompt,
        )
        try:
            return parse_judge_feedback(reply.text, mode)
        except ParseError as exc:
            attempt_prompt = prompt + _REASK_SUFFIX.format(error=exc)
    return None
