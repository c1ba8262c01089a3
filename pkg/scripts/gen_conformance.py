#!/usr/bin/env python3
"""Regenerate conformance/cases.jsonl from the mock server's own replies.

Each case records the raw request line, the byte-exact reply the bundled
mock server must produce, and a structural expectation any protocol
implementation (e.g. the reference server) must satisfy:

  expect.ok    - list of acceptable ok-reply kinds (hello, log_probs,
                 scores, plain)
  expect.error - list of acceptable error codes

A reply passes if it is an ok reply of an accepted kind or an error reply
with an accepted code.  Run from the repository root after changing the
protocol or the mock config.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from kgic.backend import canonical_dumps  # noqa: E402
from kgic.mockserver import MockModel  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
PROMPT = "head: X, relation: born_in, tail:"

CASES = [
    ("hello", {"op": "hello"}, {"ok": ["hello"], "error": []}),
    ("log_probs_listed", {"op": "next_log_probs", "prompt": PROMPT, "prefix": []},
     {"ok": ["log_probs"], "error": []}),
    ("log_probs_prefix", {"op": "next_log_probs", "prompt": PROMPT, "prefix": ["a"]},
     {"ok": ["log_probs"], "error": []}),
    ("log_probs_fallback", {"op": "next_log_probs", "prompt": "never seen before", "prefix": ["a", "b"]},
     {"ok": ["log_probs"], "error": []}),
    ("property_scores", {"op": "property_scores", "text": "head: X, types: t, description: d"},
     {"ok": ["scores"], "error": []}),
    ("property_scores_unicode", {"op": "property_scores", "text": "head: tête→β"},
     {"ok": ["scores"], "error": []}),
    ("property_scores_unknown", {"op": "property_scores", "text": "head: nobody"},
     {"ok": ["scores"], "error": ["model_error"]}),
    ("malformed_json", "{this is not json", {"ok": [], "error": ["bad_request"]}),
    ("non_object", "[1,2,3]", {"ok": [], "error": ["bad_request"]}),
    ("unknown_op", {"op": "frobnicate"}, {"ok": [], "error": ["unsupported"]}),
    ("missing_prefix", {"op": "next_log_probs", "prompt": "x"}, {"ok": [], "error": ["bad_request"]}),
    ("missing_text", {"op": "property_scores"}, {"ok": [], "error": ["bad_request"]}),
    ("non_string_op", {"op": 5}, {"ok": [], "error": ["bad_request"]}),
    ("shutdown", {"op": "shutdown"}, {"ok": ["plain"], "error": []}),
]


def main() -> None:
    config = json.loads((ROOT / "conformance" / "mock_config.json").read_text(encoding="utf-8"))
    model = MockModel(config)
    lines = []
    for name, request, expect in CASES:
        raw = request if isinstance(request, str) else canonical_dumps(request)
        reply, _ = model.handle_line(raw)
        lines.append(canonical_dumps({
            "name": name,
            "request": raw,
            "mock_response": canonical_dumps(reply),
            "expect": expect,
        }))
    out = ROOT / "conformance" / "cases.jsonl"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines)} cases to {out}")


if __name__ == "__main__":
    main()
