"""Audit submissions for fake-kernel patterns.

Benchmark scores are only meaningful if a "kernel" really is one.  The
audit flags three dodges seen in real submissions: no device kernel
anywhere in the file, an exception handler that silently answers with the
host framework, and a load-failure guard that falls back the same way.
Two genuine inline-extension kernels are included to show the audit stays
quiet when it should.

    python demos/audit_fake_kernels.py
"""

from pathlib import Path

from kernelpilot.evaluation import lint_file

REPO = Path(__file__).resolve().parents[1]
LINT_DIR = REPO / "tests" / "fixtures" / "lint"


def main() -> None:
    for path in sorted(LINT_DIR.glob("*.py")):
        findings = lint_file(path)
        if not findings:
            print(f"{path.name}: clean")
            continue
        print(f"{path.name}:")
        for finding in findings:
            print(f"  lines {finding.line_start}-{finding.line_end}: {finding.rule.value}")
            for line in finding.excerpt.splitlines():
                print(f"      {line}")


if __name__ == "__main__":
    main()
