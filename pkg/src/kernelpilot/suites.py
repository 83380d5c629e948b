"""Task-suite storage: one structured file per task plus a manifest.

A suite directory looks like::

    suite/
      manifest.json          {"tasks": ["tasks/level1_95.json", ...]}
      tasks/level1_95.json   {"id": ..., "level": ..., "reference_source": ...}

The manifest fixes run order; every record passes :func:`validate_task`.
"""

from __future__ import annotations

import json
from pathlib import Path

from .core import Task, validate_task


class SuiteError(Exception):
    """The suite directory or manifest is unusable (a configuration error)."""


def load_task_file(path: str | Path) -> Task:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise SuiteError(f"cannot read task file {path}: {exc}") from exc
    return validate_task(raw)


def load_suite(suite_dir: str | Path) -> list[Task]:
    suite_dir = Path(suite_dir)
    manifest_path = suite_dir / "manifest.json"
    if not manifest_path.is_file():
        raise SuiteError(f"no manifest.json in {suite_dir}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except ValueError as exc:
        raise SuiteError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    entries = manifest.get("tasks")
    if not isinstance(entries, list) or not entries:
        raise SuiteError(f"manifest {manifest_path} lists no tasks")
    tasks = [load_task_file(suite_dir / entry) for entry in entries]
    ids = [task.id for task in tasks]
    if len(ids) != len(set(ids)):
        raise SuiteError(f"suite {suite_dir} has duplicate task ids")
    return tasks
