"""Kernel execution harness: one JSON request in, one JSON response out.

The harness is the machine-side half of the ``kernel-exec/v1`` protocol.  A
client writes a single request document to stdin and reads a single response
document from stdout; everything else the harness (or the code under test)
prints is routed to stderr.  ``test`` mode builds a candidate module, checks
it against the reference model on seeded input sets, and times both;
``profile`` mode re-runs the candidate under Nsight Compute and passes the
CSV export through verbatim.
"""

__version__ = "0.1.0"

from .protocol import (  # noqa: F401
    SCHEMA,
    ExecRequest,
    ProtocolError,
    error_response,
    parse_request,
    profile_response,
    test_response,
)
