"""Process entry point: stdin request, stdout response, everything else stderr.

The response stream must stay a single JSON document, but inline-extension
builds (ninja, nvcc) and candidate code write to file descriptor 1 at the OS
level — Python-level redirection cannot catch them.  So the first act is to
duplicate the real stdout away and point fd 1 at stderr for the whole run;
the response is written to the saved descriptor at the very end.  Every
failure mode ends in a JSON envelope: this process never answers with a
traceback on stdout.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile

from .protocol import ProtocolError, error_response, parse_request, profile_response


def _handle(raw: dict) -> dict:
    try:
        request = parse_request(raw)
    except ProtocolError as exc:
        return error_response("BadRequest", str(exc))

    with tempfile.TemporaryDirectory(prefix="kernelharness-ext-") as ext_dir:
        # Fresh per-request build cache: no stale artifacts can mask a
        # compile failure or leak state between candidates.
        os.environ["TORCH_EXTENSIONS_DIR"] = ext_dir
        from . import runner  # heavyweight import deferred past validation
        from .inputs import InputSpecError

        try:
            if request.mode == "test":
                return runner.run_test(request)
            from . import profiling

            try:
                csv_text, seconds = profiling.run_profile(request)
            except profiling.ProfilerUnavailable as exc:
                return error_response("ProfilerUnavailable", str(exc))
            return profile_response(csv_text, seconds)
        except InputSpecError as exc:
            return error_response("BadRequest", str(exc))
        except runner.ReferenceBroken as exc:
            return error_response("ReferenceBroken", str(exc))


def main() -> int:
    real_stdout = os.dup(1)
    os.dup2(2, 1)
    try:
        try:
            raw = json.load(sys.stdin)
        except ValueError as exc:
            response = error_response("BadRequest", f"request is not valid JSON: {exc}")
        else:
            response = _handle(raw)
    except Exception as exc:  # a harness bug still answers on the wire
        response = error_response("Internal", f"{type(exc).__name__}: {exc}")
    with os.fdopen(real_stdout, "w") as out:
        out.write(json.dumps(response))
    return 0


if __name__ == "__main__":
    sys.exit(main())
