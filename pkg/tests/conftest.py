"""Shared test fixtures: canonical paths and a replay-run helper."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from kernelpilot.gateway import BackendPricing, MockBackend
from kernelpilot.hardware import lookup_gpu
from kernelpilot.prompts import load_oneshot_pair
from kernelpilot.suites import load_suite
from kernelpilot.workflow import ScriptedExecutor, WorkflowConfig, run_workflow

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
GOLDENS = TESTS / "goldens"

TRANSCRIPTS = FIXTURES / "transcripts" / "level1_95"
SUITE_DIR = FIXTURES / "suite"
CONV2D_DIR = FIXTURES / "conv2d_samples" / "conv2d"
MINI_SAMPLES = FIXTURES / "mini_samples"
LINT_DIR = FIXTURES / "lint"
JUDGE_REPLIES = FIXTURES / "judge_replies"


@pytest.fixture(scope="session")
def replay_task():
    return load_suite(SUITE_DIR)[0]


@pytest.fixture(scope="session")
def rtx6000():
    return lookup_gpu("rtx6000")


@pytest.fixture()
def replay_config(rtx6000):
    few_base, few_new = load_oneshot_pair()
    return WorkflowConfig(
        gpu=rtx6000,
        few_base=few_base,
        few_new=few_new,
        pricing=BackendPricing(prompt_per_1k=0.001, completion_per_1k=0.002),
    )


def run_replay(task, config, event_sink=None, max_rounds=None):
    """One full scripted run against the shipped transcript fixture."""

    if max_rounds is not None:
        config = WorkflowConfig(
            gpu=config.gpu,
            catalog=config.catalog,
            max_rounds=max_rounds,
            tolerance=config.tolerance,
            budget_dollars=config.budget_dollars,
            pricing=config.pricing,
            few_base=config.few_base,
            few_new=config.few_new,
        )
    backend = MockBackend(TRANSCRIPTS)
    executor = ScriptedExecutor(TRANSCRIPTS / "executor.json")
    result = run_workflow(task, backend, backend, executor, config, event_sink=event_sink)
    return result, backend


def load_json(path: Path):
    return json.loads(path.read_text())
