"""Deterministic mock model server for loopback tests and offline runs.

Speaks the same line-delimited JSON protocol as a real model server but
answers from a fixed table loaded at startup:

  {
    "vocab": ["a", "b", "</s>"],
    "relations": ["born_in", ...],
    "contexts": [{"prompt": "...", "prefix": ["a"], "probs": {"a": 0.5, ...}}],
    "default_probs": {"a": 0.5, ...} | null,
    "property_scores": {"<entity text>": {"born_in": 0.8, ...}},
    "default_property_scores": {"born_in": 0.0, ...} | null
  }

Every distribution must cover the whole vocabulary with positive mass
(log-probabilities must stay finite on the wire) and sum to 1 within 1e-6.
Unlisted next_log_probs contexts fall back to default_probs, then uniform;
unlisted property texts fall back to default_property_scores, else a
model_error reply.

Run as ``python -m kgic.mockserver --config cfg.json [--transport tcp]``.
In TCP mode the chosen port is printed to stdout as "LISTENING <port>".
"""

from __future__ import annotations

import argparse
import json
import math
import socket
import sys
from typing import IO, Mapping

from kgic.backend import canonical_dumps

__all__ = ["MockModel", "serve_stream", "main"]


def _error(code: str, message: str) -> dict:
    return {"ok": False, "error": code, "message": message}


class MockModel:
    """Request handler over the fixed-table config."""

    def __init__(self, config: Mapping):
        self.vocab = list(config["vocab"])
        self.relations = list(config["relations"])
        if not self.vocab:
            raise ValueError("mock config needs a nonempty vocab")
        self._contexts: dict[tuple[str, tuple[str, ...]], dict[str, float]] = {}
        for entry in config.get("contexts", []):
            key = (entry["prompt"], tuple(entry["prefix"]))
            self._contexts[key] = self._to_log_probs(entry["probs"], f"context {key!r}")
        default = config.get("default_probs")
        self._default = self._to_log_probs(default, "default_probs") if default else None
        uniform = 1.0 / len(self.vocab)
        self._uniform = {tok: math.log(uniform) for tok in self.vocab}
        self._property_scores = {
            text: dict(scores) for text, scores in config.get("property_scores", {}).items()
        }
        self._default_property = config.get("default_property_scores")

    def _to_log_probs(self, probs: Mapping[str, float], where: str) -> dict[str, float]:
        missing = set(self.vocab) - set(probs)
        if missing:
            raise ValueError(f"{where}: distribution must cover the vocab, missing {sorted(missing)}")
        if any(p <= 0 for p in probs.values()):
            raise ValueError(f"{where}: probabilities must be positive (finite log on the wire)")
        total = sum(probs[tok] for tok in self.vocab)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"{where}: probabilities sum to {total}, not 1")
        return {tok: math.log(probs[tok]) for tok in self.vocab}

    def handle_line(self, raw: str) -> tuple[dict, bool]:
        """Reply object and whether to keep serving."""
        try:
            request = json.loads(raw)
        except json.JSONDecodeError:
            return _error("bad_request", "request is not valid JSON"), True
        if not isinstance(request, dict) or not isinstance(request.get("op"), str):
            return _error("bad_request", "request must be an object with an 'op' field"), True
        op = request["op"]
        if op == "hello":
            return {"ok": True, "vocab": self.vocab, "relations": self.relations}, True
        if op == "next_log_probs":
            prompt, prefix = request.get("prompt"), request.get("prefix")
            if not isinstance(prompt, str) or not isinstance(prefix, list):
                return _error("bad_request", "next_log_probs needs 'prompt' and 'prefix'"), True
            dist = self._contexts.get((prompt, tuple(prefix)), self._default) or self._uniform
            return {"ok": True, "log_probs": dist}, True
        if op == "property_scores":
            text = request.get("text")
            if not isinstance(text, str):
                return _error("bad_request", "property_scores needs 'text'"), True
            scores = self._property_scores.get(text, self._default_property)
            if scores is None:
                return _error("model_error", f"no scores configured for text {text!r}"), True
            return {"ok": True, "scores": scores}, True
        if op == "shutdown":
            return {"ok": True}, False
        return _error("unsupported", f"unknown op {op!r}"), True


def serve_stream(model: MockModel, lines: IO[str] | list[str], out: IO[str]) -> None:
    """Serve requests from an iterable of lines, writing replies to out."""
    for raw in lines:
        raw = raw.rstrip("\n")
        if not raw:
            continue
        reply, keep_going = model.handle_line(raw)
        out.write(canonical_dumps(reply) + "\n")
        out.flush()
        if not keep_going:
            break


def _serve_tcp(model: MockModel, host: str, port: int) -> None:
    with socket.create_server((host, port)) as server:
        print(f"LISTENING {server.getsockname()[1]}", flush=True)
        while True:
            conn, _ = server.accept()
            with conn, conn.makefile("rw", encoding="utf-8", newline="\n") as stream:
                keep_going = True
                while keep_going:
                    line = stream.readline()
                    if not line:
                        break
                    if not line.strip():
                        continue
                    reply, keep_going = model.handle_line(line.rstrip("\n"))
                    stream.write(canonical_dumps(reply) + "\n")
                    stream.flush()
                if not keep_going:
                    return


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="kgic-mockserver", description=__doc__.split("\n")[0])
    parser.add_argument("--config", required=True, help="JSON table config")
    parser.add_argument("--transport", choices=["stdio", "tcp"], default="stdio")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0, help="tcp port (0 = ephemeral)")
    args = parser.parse_args(argv)
    with open(args.config, encoding="utf-8") as fh:
        model = MockModel(json.load(fh))
    if args.transport == "tcp":
        _serve_tcp(model, args.host, args.port)
    else:
        serve_stream(model, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
