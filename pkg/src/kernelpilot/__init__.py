"""Profiler-guided two-agent workflow for GPU kernel generation.

A Coder agent writes candidate kernels, a correctness gate tests them
against the reference implementation, an Nsight Compute profile grounds a
Judge agent's feedback, and the loop repeats for a fixed round budget.  The
package also ships the offline pipeline that mined the curated profiler
metric subset, plus evaluation, cost-accounting, and fake-kernel-audit
tooling.
"""

__version__ = "0.1.0"

from .core import (
    BadLevel,
    CandidateStatus,
    CorrectionFeedback,
    CostEvent,
    CostLedger,
    DomainError,
    EmptySource,
    FeedbackMode,
    GPUDetail,
    GPUSpec,
    JudgeFeedback,
    KernelCandidate,
    MissingField,
    NCUProfile,
    OptimizationFeedback,
    RoundRecord,
    RunReport,
    Task,
    WorkflowResult,
    validate_task,
)
from .evaluation import LintFinding, LintRule, SuiteSummary, lint_kernel, summarize
from .gateway import (
    AgentReply,
    BackendPricing,
    HTTPBackend,
    MockBackend,
    call_agent,
    extract_kernel_code,
    parse_judge_feedback,
)
from .hardware import (
    MetricCatalog,
    ProfilerExport,
    default_catalog,
    filter_to_subset,
    format_hardware_feedback,
    lookup_gpu,
    parse_profiler_csv,
)
from .mining import (
    dedupe_aliases,
    mine,
    pearson,
    select_extremes,
    select_global,
    top20_for_task,
)
from .prompts import PromptKind, render_prompt
from .workflow import (
    ScriptedExecutor,
    SubprocessExecutor,
    WorkflowConfig,
    build_coder_context,
    decide_mode,
    run_workflow,
)

__all__ = [name for name in dir() if not name.startswith("_")]
