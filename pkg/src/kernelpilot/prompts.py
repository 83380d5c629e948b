"""Prompt templates for the Coder and Judge agents.

Templates are fixed byte-for-byte: rendering substitutes declared
placeholders and changes nothing else, so golden-file tests can pin the
exact bytes each agent sees.  Placeholders use ``{name}`` syntax but only
names declared for the template are substituted — literal braces (for
example in the JSON schema blocks) pass through untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping


class PromptError(Exception):
    """Base class for template rendering failures."""


class UnknownKind(PromptError):
    pass


class UnresolvedPlaceholder(PromptError):
    """A placeholder required by the template is missing from the context."""


class PromptKind(Enum):
    CODER_INITIAL = "coder_initial"
    CODER_CORRECT = "coder_correct"
    CODER_OPTIMIZE = "coder_optimize"
    JUDGE_CORRECT = "judge_correct"
    JUDGE_OPTIMIZE = "judge_optimize"


@dataclass(frozen=True)
class PromptTemplate:
    kind: PromptKind
    body: str
    placeholders: frozenset[str]


_CODER_INITIAL_BODY = """\
You write custom CUDA kernels to replace the PyTorch operators in the given architecture to get speedups.
You have complete freedom to choose the set of operators you want to replace. You may decide to replace
some operators with custom CUDA kernels and leave others unchanged. You may replace multiple operators
with custom implementations, consider operator fusion opportunities (combining multiple operators into a
single kernel, for example, combining matmul + relu), or algorithmic changes (such as online softmax).
You are only limited by your imagination.

Here is an example to show you the syntax of inline-embedding custom CUDA operators in PyTorch.

The example given architecture is:

```
{few_base}
```

The example new architecture with custom CUDA kernels looks like this:

```
{few_new}
```

You are given the following architecture:

```
{arch_src}
```

Optimize the architecture named Model with custom CUDA operators! Name your optimized output
architecture ModelNew. Output the new code in code blocks. Please generate real code, NOT
pseudocode. Make sure the code compiles and is fully functional. Just output the new model code, no other
text, and NO testing code!
"""

_JUDGE_CORRECT_BODY = """\
You are a senior CUDA + PyTorch correctness auditor. Your job is to read a PyTorch reference and a CUDA candidate and report exactly one most critical correctness issue in the CUDA code that would cause a behavioral mismatch vs. the PyTorch reference. Be terse and precise.

Rules:
- Return one and only one issue --- the single highest-impact problem.
- Prefer semantic/correctness issues over micro-optimizations or style.
- If multiple issues exist, pick the one that most changes outputs or gradients.
- If nothing clearly wrong is found, say it explicitly.
- Keep each field brief; avoid extra commentary, lists, or alternatives.

Output format (JSON):
{
  "critical_issue": "<max 20 words>",
  "why_it_matters": "<max 35 words>",
  "minimal_fix_hint": "<max 20 words>"
}

You are given:

ERROR_LOG:
{ERROR_LOG}

PyTorch reference (ground truth):
{PYTORCH_CODE}

CUDA candidate (to audit):
{CUDA_CODE}

Follow the Rules and produce the JSON exactly in the specified format.
"""

_JUDGE_OPTIMIZE_BODY = """\
You are a senior CUDA performance engineer. Read the target GPU spec, the PyTorch reference code, the current CUDA candidate, and the Nsight Compute metrics. Then identify exactly one highest-impact speed bottleneck by 3-4 most important metrics, propose exactly one optimisation method and propose a modification plan. Be surgical and metrics-driven.

Rules:
- Return one and only one optimisation method --- the largest expected speedup.
- Prefer changes that directly address measured bottlenecks (occupancy limits,
  memory coalescing, smem bank conflicts, register pressure, long/short scoreboard
  stalls, tensor-core underutilisation, etc.).
- Keep fields brief; avoid lists of alternatives, disclaimers, or generic advice.

Output format (JSON):
{
  "bottleneck": "<max 30 words>",
  "optimisation method": "<max 35 words>",
  "modification plan": "<max 35 words>"
}

Target GPU
GPU Name: {gpu_name}
Architecture: {gpu_arch}
Details:
{gpu_items}

PyTorch Reference
{python_code}

CUDA Candidate
{CUDA_CODE}

Nsight Compute metrics (verbatim)
{NCU_METRICS}

Read everything and follow the Rules exactly. Return the JSON in the specified format.
"""

_CODER_CORRECT_BODY = """\
You are a senior CUDA-extension developer.
Your job is to FIX the compilation or runtime errors in the Python script shown below.

OUTPUT RULES (STRICT)
1. Inside the block, follow exactly this order:
   1. Imports - torch, torch.nn, load_inline.
   2. source - triple-quoted CUDA string(s) (kernel + host wrapper).
   3. cpp_src - prototypes for all kernels you expose.
   4. One load_inline call per kernel group.
   5. class ModelNew(nn.Module) - mirrors original inputs/outputs but calls
      your CUDA kernels.
2. Do NOT include testing code, if __name__ == "__main__", or extra prose.

ERROR LOG
{ERROR_LOG}

OLD CODE (read-only)
{CUDA_CODE}

Main Critical Problem
{Problem}

Output Section (to be generated):
# <your corrected code>
"""

_CODER_OPTIMIZE_BODY = """\
Target GPU
GPU Name: {gpu_name}
Architecture: {gpu_arch}
Details:
{gpu_items}

You are a CUDA-kernel optimization specialist.

Analyze the provided architecture and strictly apply the following STRATEGY to produce an improved CUDA kernel.

{CUDA_CODE}

Optimization instructions:
{optimization_suggestion}

GOAL
----
- Improve latency and throughput on the target GPU.
- Maintain correctness within atol=1e-4 or rtol=1e-4.
- Preserve the public Python API (same inputs/outputs, shapes, dtypes).

OUTPUT RULES (STRICT)
1. Inside the block, follow exactly this order:
   1. Imports - torch, torch.nn, load_inline.
   2. source - triple-quoted CUDA string(s) (kernel + host wrapper).
   3. cpp_src - prototypes for all kernels you expose.
   4. One load_inline call per kernel group.
   5. class ModelNew(nn.Module) - mirrors original inputs/outputs but calls
      your CUDA kernels.
2. Do NOT include testing code, if __name__ == "__main__", or extra prose.

Output Section (to be generated):
# <your corrected code>
"""

#: Every placeholder any template may use.
ALL_PLACEHOLDERS = frozenset(
    {
        "arch_src",
        "few_base",
        "few_new",
        "ERROR_LOG",
        "CUDA_CODE",
        "PYTORCH_CODE",
        "python_code",
        "NCU_METRICS",
        "gpu_name",
        "gpu_arch",
        "gpu_items",
        "optimization_suggestion",
        "Problem",
    }
)

TEMPLATES: dict[PromptKind, PromptTemplate] = {
    PromptKind.CODER_INITIAL: PromptTemplate(
        PromptKind.CODER_INITIAL,
        _CODER_INITIAL_BODY,
        frozenset({"few_base", "few_new", "arch_src"}),
    ),
    PromptKind.CODER_CORRECT: PromptTemplate(
        PromptKind.CODER_CORRECT,
        _CODER_CORRECT_BODY,
        frozenset({"ERROR_LOG", "CUDA_CODE", "Problem"}),
    ),
    PromptKind.CODER_OPTIMIZE: PromptTemplate(
        PromptKind.CODER_OPTIMIZE,
        _CODER_OPTIMIZE_BODY,
        frozenset({"gpu_name", "gpu_arch", "gpu_items", "CUDA_CODE", "optimization_suggestion"}),
    ),
    PromptKind.JUDGE_CORRECT: PromptTemplate(
        PromptKind.JUDGE_CORRECT,
        _JUDGE_CORRECT_BODY,
        frozenset({"ERROR_LOG", "PYTORCH_CODE", "CUDA_CODE"}),
    ),
    PromptKind.JUDGE_OPTIMIZE: PromptTemplate(
        PromptKind.JUDGE_OPTIMIZE,
        _JUDGE_OPTIMIZE_BODY,
        frozenset({"gpu_name", "gpu_arch", "gpu_items", "python_code", "CUDA_CODE", "NCU_METRICS"}),
    ),
}

_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(sorted(ALL_PLACEHOLDERS)) + r")\}")


def template_for(kind: PromptKind) -> PromptTemplate:
    try:
        return TEMPLATES[kind]
    except KeyError:  # pragma: no cover - enum makes this unreachable from public API
        raise UnknownKind(str(kind))


def render_prompt(kind: PromptKind, context: Mapping[str, str]) -> str:
    """Substitute ``context`` into the template for ``kind``.

    Every placeholder occurring in the template body must be supplied;
    anything else in the body — including literal braces — is left
    byte-identical.  Empty-string values are legal.  Extra context keys are
    ignored, so callers can pass a superset.
    """

    template = template_for(kind)

    def _sub(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in context:
            raise UnresolvedPlaceholder(f"{kind.value}: no value for {{{name}}}")
        return str(context[name])

    return _PLACEHOLDER_RE.sub(_sub, template.body)


def placeholders_in(kind: PromptKind) -> frozenset[str]:
    """The placeholder names actually present in the template body."""

    return frozenset(m.group(1) for m in _PLACEHOLDER_RE.finditer(template_for(kind).body))


def load_oneshot_pair() -> tuple[str, str]:
    """The shipped one-shot exemplar: (reference model, kernelized rewrite).

    These fill ``{few_base}``/``{few_new}`` in the round-1 Coder prompt.
    """

    from importlib import resources

    root = resources.files("kernelpilot").joinpath("data/oneshot")
    return (
        root.joinpath("few_base.py").read_text(),
        root.joinpath("few_new.py").read_text(),
    )
