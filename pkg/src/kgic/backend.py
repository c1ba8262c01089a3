"""Client for an external model server speaking line-delimited JSON.

One JSON object per line, UTF-8, canonical form (sorted keys, compact
separators, no ASCII escaping):

  -> {"op":"hello"}
  <- {"ok":true,"vocab":[...],"relations":[...]}
  -> {"op":"next_log_probs","prompt":"<text>","prefix":["t1","t2"]}
  <- {"ok":true,"log_probs":{"<token>":-0.69,...}}
  -> {"op":"property_scores","text":"<rendered entity text>"}
  <- {"ok":true,"scores":{"<relation>":0.83,...}}
  -> {"op":"shutdown"}
  <- {"ok":true}

Failures come back as {"ok":false,"error":"<code>","message":"<text>"} with
codes bad_request, model_error, unsupported.  The handshake pins the
vocabulary and relation set for the session; later drift is a hard error.
"""

from __future__ import annotations

import json
import math
import os
import selectors
import shlex
import socket
import subprocess
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from kgic.graph import KnowledgeGraph
from kgic.genlp import render_entity_text

__all__ = [
    "BackendError",
    "BackendTimeout",
    "ProtocolError",
    "BackendConfig",
    "BackendClient",
    "RemoteTokenScorer",
    "RemotePropertyScorer",
    "canonical_dumps",
    "parse_backend_spec",
]

LOG_PROB_TOL = 1e-4
ERROR_CODES = ("bad_request", "model_error", "unsupported")


def canonical_dumps(obj) -> str:
    """Canonical wire serialization: sorted keys, compact, raw UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class BackendError(Exception):
    pass


class BackendTimeout(BackendError):
    """No reply within the configured deadline (after all retries)."""


class ProtocolError(BackendError):
    """Malformed or contract-violating reply; carries the raw payload."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message if raw is None else f"{message}; raw payload: {raw!r}")
        self.raw = raw


@dataclass
class BackendConfig:
    transport: str  # "stdio" | "tcp"
    command: tuple[str, ...] = ()  # stdio: server argv
    host: str = "127.0.0.1"
    port: int = 0
    timeout: float = 10.0
    max_retries: int = 1

    def __post_init__(self):
        if self.transport not in ("stdio", "tcp"):
            raise ValueError("transport must be 'stdio' or 'tcp'")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.transport == "stdio" and not self.command:
            raise ValueError("stdio transport needs a server command")


def parse_backend_spec(spec: str, timeout: float = 10.0, max_retries: int = 1) -> BackendConfig:
    """Parse "stdio:<command line>" or "tcp:<host>:<port>" (KGIC_BACKEND form)."""
    kind, _, rest = spec.partition(":")
    if kind == "stdio" and rest:
        return BackendConfig("stdio", command=tuple(shlex.split(rest)), timeout=timeout, max_retries=max_retries)
    if kind == "tcp":
        host, _, port = rest.rpartition(":")
        if host and port.isdigit():
            return BackendConfig("tcp", host=host, port=int(port), timeout=timeout, max_retries=max_retries)
    raise ValueError(f"bad backend spec {spec!r}; expected stdio:<command> or tcp:<host>:<port>")


class _StdioTransport:
    """Line transport over a spawned server's stdin/stdout."""

    def __init__(self, command: Sequence[str]):
        self.proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )
        os.set_blocking(self.proc.stdout.fileno(), False)
        self._buf = b""

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line.encode("utf-8") + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"server pipe closed: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        fd = self.proc.stdout.fileno()
        with selectors.DefaultSelector() as sel:
            sel.register(fd, selectors.EVENT_READ)
            while b"\n" not in self._buf:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise BackendTimeout(f"no reply within {timeout} s")
                if sel.select(remaining):
                    chunk = os.read(fd, 1 << 16)
                    if not chunk:
                        raise ProtocolError("server closed the connection")
                    self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8")

    def close(self) -> None:
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._buf = b""

    def send_line(self, line: str) -> None:
        try:
            self.sock.sendall(line.encode("utf-8") + b"\n")
        except OSError as exc:
            raise ProtocolError(f"connection lost: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BackendTimeout(f"no reply within {timeout} s")
            self.sock.settimeout(remaining)
            try:
                chunk = self.sock.recv(1 << 16)
            except socket.timeout:
                raise BackendTimeout(f"no reply within {timeout} s") from None
            if not chunk:
                raise ProtocolError("server closed the connection")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8")

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class BackendClient:
    """Session with one model server; reconnects and retries on timeouts.

    Every call terminates within timeout * (max_retries + 1) plus process
    spawn overhead; there is no unbounded blocking path.
    """

    def __init__(self, config: BackendConfig):
        self.config = config
        self.vocab: tuple[str, ...] | None = None
        self.relations: tuple[str, ...] | None = None
        self._transport: _StdioTransport | _TcpTransport | None = None

    # -- connection management ----------------------------------------------

    def _open_transport(self):
        if self.config.transport == "stdio":
            return _StdioTransport(self.config.command)
        return _TcpTransport(self.config.host, self.config.port, self.config.timeout)

    def _ensure_connected(self) -> None:
        if self._transport is not None:
            return
        self._transport = self._open_transport()
        reply = self._roundtrip_once({"op": "hello"})
        vocab = reply.get("vocab")
        relations = reply.get("relations")
        if not isinstance(vocab, list) or not all(isinstance(t, str) for t in vocab):
            raise ProtocolError("hello reply lacks a token vocabulary", canonical_dumps(reply))
        if not isinstance(relations, list) or not all(isinstance(t, str) for t in relations):
            raise ProtocolError("hello reply lacks a relation list", canonical_dumps(reply))
        if self.vocab is not None and tuple(vocab) != self.vocab:
            raise ProtocolError("server vocabulary changed within the session")
        if self.relations is not None and tuple(relations) != self.relations:
            raise ProtocolError("server relation set changed within the session")
        self.vocab = tuple(vocab)
        self.relations = tuple(relations)

    def _roundtrip_once(self, request: Mapping) -> dict:
        assert self._transport is not None
        self._transport.send_line(canonical_dumps(request))
        raw = self._transport.recv_line(self.config.timeout)
        try:
            reply = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"reply is not valid JSON: {exc}", raw) from exc
        if not isinstance(reply, dict) or "ok" not in reply:
            raise ProtocolError("reply is not a protocol object", raw)
        if reply["ok"] is not True:
            code = reply.get("error", "unknown")
            raise ProtocolError(f"server error [{code}]: {reply.get('message', '')}", raw)
        return reply

    def close(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None

    def __enter__(self) -> "BackendClient":
        self._ensure_connected()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- protocol ops --------------------------------------------------------

    def call(self, request: Mapping) -> dict:
        """Round-trip with reconnect-and-retry on timeout."""
        last: BackendTimeout | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                self._ensure_connected()
                return self._roundtrip_once(request)
            except BackendTimeout as exc:
                last = exc
                self.close()
        raise BackendTimeout(
            f"no reply after {self.config.max_retries + 1} attempts of {self.config.timeout} s"
        ) from last

    def hello(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        self._ensure_connected()
        assert self.vocab is not None and self.relations is not None
        return self.vocab, self.relations

    def next_log_probs(self, prompt: str, prefix: Sequence[str]) -> dict[str, float]:
        reply = self.call({"op": "next_log_probs", "prompt": prompt, "prefix": list(prefix)})
        log_probs = reply.get("log_probs")
        if not isinstance(log_probs, dict):
            raise ProtocolError("next_log_probs reply lacks log_probs", canonical_dumps(reply))
        assert self.vocab is not None
        if set(log_probs) != set(self.vocab):
            raise ProtocolError(
                f"log_probs keys disagree with the pinned vocabulary "
                f"({len(log_probs)} tokens, expected {len(self.vocab)})"
            )
        values = {}
        for tok, lp in log_probs.items():
            if not isinstance(lp, (int, float)) or not math.isfinite(lp):
                raise ProtocolError(f"non-finite log-probability for token {tok!r}")
            values[tok] = float(lp)
        m = max(values.values())
        lse = m + math.log(sum(math.exp(v - m) for v in values.values()))
        if abs(lse) > LOG_PROB_TOL:
            raise ProtocolError(f"log_probs not normalized: log-sum-exp = {lse:.3g}")
        return {tok: lp - lse for tok, lp in values.items()}

    def property_scores(self, text: str) -> dict[str, float]:
        reply = self.call({"op": "property_scores", "text": text})
        scores = reply.get("scores")
        if not isinstance(scores, dict):
            raise ProtocolError("property_scores reply lacks scores", canonical_dumps(reply))
        assert self.relations is not None
        known = set(self.relations)
        unknown = set(scores) - known
        if unknown:
            raise ProtocolError(f"scores for unknown relations: {sorted(unknown)[:5]}")
        missing = known - set(scores)
        if missing:
            raise ProtocolError(f"scores missing relations: {sorted(missing)[:5]}")
        out = {}
        for rel, s in scores.items():
            if not isinstance(s, (int, float)) or not 0.0 <= float(s) <= 1.0:
                raise ProtocolError(f"score out of [0, 1] for relation {rel!r}: {s!r}")
            out[rel] = float(s)
        return out

    def shutdown(self) -> None:
        """Best-effort shutdown notice; always closes the transport."""
        if self._transport is None:
            return
        try:
            self._roundtrip_once({"op": "shutdown"})
        except BackendError:
            pass
        finally:
            self.close()


class RemoteTokenScorer:
    """TokenScorer backed by a backend session (vocab from the handshake)."""

    def __init__(self, client: BackendClient):
        self._client = client
        vocab, _ = client.hello()
        self.vocab: tuple[str, ...] = vocab

    def next_log_probs(self, prompt: str, prefix: tuple[str, ...]) -> dict[str, float]:
        return self._client.next_log_probs(prompt, prefix)


class RemotePropertyScorer:
    """Per-entity relation scores from a backend session, aligned to the graph."""

    def __init__(
        self,
        client: BackendClient,
        graph: KnowledgeGraph,
        mask_types: bool = False,
        mask_description: bool = False,
    ):
        self._client = client
        self._graph = graph
        self.mask_types = mask_types
        self.mask_description = mask_description
        _, relations = client.hello()
        missing = [r for r in graph.relations.labels if r not in set(relations)]
        if missing:
            raise ProtocolError(f"server does not know graph relations: {missing[:5]}")

    def scores(self, entity: int) -> np.ndarray:
        text = render_entity_text(
            self._graph.entities.label(entity),
            self._graph.entity_meta(entity),
            self.mask_types,
            self.mask_description,
        )
        by_label = self._client.property_scores(text)
        out = np.zeros(self._graph.n_relations)
        for rel, value in by_label.items():
            if rel in self._graph.relations:
                out[self._graph.relations.id(rel)] = value
        return out
