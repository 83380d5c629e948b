"""End-to-end over the real pipe: one subprocess per request document."""

import json
import shutil
import subprocess
import sys

import pytest

from harness_sources import (
    CANDIDATE_CHATTY,
    CANDIDATE_OFFSET,
    REFERENCE_BROKEN,
    SCALED_INPUT_SPEC,
    request,
)


def roundtrip(document, timeout=180):
    proc = subprocess.run(
        [sys.executable, "-m", "kernelharness"],
        input=document if isinstance(document, str) else json.dumps(document),
        capture_output=True,
        text=True,
        timeout=timeout,
    )
    return proc, json.loads(proc.stdout)


class TestRoundtrip:
    def test_correct_candidate_full_response(self):
        _, response = roundtrip(request())
        assert response["ok"] is True
        assert response["compiled"] and response["correct"]
        assert response["ref_latency_ms"] > 0
        assert response["kernel_latency_ms"] > 0

    def test_stdout_stays_a_single_json_document(self):
        proc, response = roundtrip(request(candidate=CANDIDATE_CHATTY))
        # chatter from the candidate's build and forward goes to stderr
        assert "build step chatter" in proc.stderr
        assert "forward chatter" in proc.stderr
        assert "chatter" not in proc.stdout
        json.loads(proc.stdout)  # exactly one parseable document
        assert response["correct"]

    def test_incorrect_candidate_is_an_ok_response(self):
        _, response = roundtrip(request(candidate=CANDIDATE_OFFSET.format(offset=2e-4)))
        assert response["ok"] is True
        assert response["compiled"] is True
        assert response["correct"] is False
        assert "exceeds tolerance" in response["error_log"]

    def test_invalid_json_request(self):
        _, response = roundtrip("{this is not json")
        assert response["ok"] is False
        assert response["kind"] == "BadRequest"
        assert "not valid JSON" in response["error"]

    def test_wrong_schema_request(self):
        _, response = roundtrip(request() | {"schema": "kernel-exec/v0"})
        assert response == {
            "ok": False,
            "kind": "BadRequest",
            "error": "unsupported schema 'kernel-exec/v0' (expected 'kernel-exec/v1')",
        }

    def test_broken_reference_is_an_error_envelope(self):
        _, response = roundtrip(
            request(reference=REFERENCE_BROKEN, input_spec=SCALED_INPUT_SPEC)
        )
        assert response["ok"] is False
        assert response["kind"] == "ReferenceBroken"
        assert "reference model is broken" in response["error"]

    def test_bad_input_spec_is_a_bad_request(self):
        bad_spec = [{"shape": [4], "dtype": "complex64"}]
        _, response = roundtrip(request(input_spec=bad_spec))
        assert response["ok"] is False
        assert response["kind"] == "BadRequest"
        assert "unsupported dtype" in response["error"]

    @pytest.mark.skipif(shutil.which("ncu") is not None,
                        reason="a real ncu would be used instead")
    def test_profile_without_ncu_degrades(self):
        _, response = roundtrip(
            request(mode="profile", metric_names=["sm__cycles_active.avg"])
        )
        assert response["ok"] is False
        assert response["kind"] == "ProfilerUnavailable"
        assert "not on PATH" in response["error"]
