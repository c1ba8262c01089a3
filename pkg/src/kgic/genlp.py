"""Generative link prediction: prompts, beam search, trie-constrained decoding.

The token scorer is pluggable (in-process table/ngram scorers for tests and
toys, a wire-protocol client for real models).  Scorers return one full
normalized log-probability distribution per step; beam search validates
normalization and never renormalizes except when masking to a name trie.

Beam semantics, fixed for determinism:

* every live hypothesis is expanded by every token each step;
* expansions ending in the END token always move to the finished pool,
  the rest compete for the top-B live slots (ties break lexicographically
  on the token sequence);
* search stops once B hypotheses have finished or max_len steps are done;
  leftover live hypotheses are returned finalized-as-is with
  ``finished=False`` only when the finished pool came up short.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

from kgic.graph import EntityMeta, KnowledgeGraph

__all__ = [
    "END_TOKEN",
    "CharTokenizer",
    "build_prompt",
    "render_entity_text",
    "TokenScorer",
    "TableScorer",
    "NgramTailScorer",
    "NameTrie",
    "build_trie",
    "Hypothesis",
    "beam_search",
    "constrained_beam_search",
    "sequence_nll",
    "NllResult",
]

END_TOKEN = "</s>"
NORMALIZATION_TOL = 1e-6


class CharTokenizer:
    """Character tokenizer over a fixed corpus of surface forms.

    Round-trips every string drawn from its corpus characters, which is all
    the name trie needs.
    """

    def __init__(self, corpus: Iterable[str]):
        chars: set[str] = set()
        for text in corpus:
            chars.update(text)
        self.vocab: tuple[str, ...] = tuple(sorted(chars)) + (END_TOKEN,)
        self._known = frozenset(self.vocab)

    @classmethod
    def from_vocab(cls, vocab: Sequence[str]) -> "CharTokenizer":
        """Adopt an externally pinned vocabulary (e.g. from a model server).

        Non-end tokens must be single characters for the trie round-trip
        guarantee to hold.
        """
        bad = [t for t in vocab if t != END_TOKEN and len(t) != 1]
        if bad:
            raise ValueError(f"vocabulary is not character-level: {bad[:5]}")
        tok = cls([])
        tok.vocab = tuple(t for t in vocab if t != END_TOKEN) + (END_TOKEN,)
        tok._known = frozenset(tok.vocab)
        return tok

    def encode(self, text: str) -> list[str]:
        for ch in text:
            if ch not in self._known:
                raise ValueError(f"character {ch!r} not in tokenizer vocabulary")
        return list(text)

    def decode(self, tokens: Sequence[str]) -> str:
        out = []
        for tok in tokens:
            if tok == END_TOKEN:
                break
            out.append(tok)
        return "".join(out)


def build_prompt(
    head_label: str,
    meta: EntityMeta,
    relation_label: str,
    mask_types: bool = False,
    mask_description: bool = False,
) -> str:
    """Render "head: h, types: c, description: d, relation: r, tail:".

    Masked or missing fields are dropped together with their key labels, so
    ablations produce no dangling separators.
    """
    if not head_label or not relation_label:
        raise ValueError("head and relation labels must be nonempty")
    parts = [f"head: {head_label}"]
    if not mask_types and meta.types:
        parts.append(f"types: {', '.join(meta.types)}")
    if not mask_description and meta.description:
        parts.append(f"description: {meta.description}")
    parts.append(f"relation: {relation_label}")
    return ", ".join(parts) + ", tail:"


def render_entity_text(
    head_label: str,
    meta: EntityMeta,
    mask_types: bool = False,
    mask_description: bool = False,
) -> str:
    """Entity-only rendering: the prompt minus relation and tail slots."""
    parts = [f"head: {head_label}"]
    if not mask_types and meta.types:
        parts.append(f"types: {', '.join(meta.types)}")
    if not mask_description and meta.description:
        parts.append(f"description: {meta.description}")
    return ", ".join(parts)


class TokenScorer(Protocol):
    """Next-token distribution provider; log-sum-exp of each reply is 0."""

    vocab: tuple[str, ...]

    def next_log_probs(self, prompt: str, prefix: tuple[str, ...]) -> Mapping[str, float]:
        ...


class TableScorer:
    """Scorer backed by a fixed table of conditional distributions.

    Entries are keyed by (prompt, prefix) and hold probabilities; unlisted
    contexts fall back to the default distribution, or uniform when none is
    given.  Every entry must be normalized at construction.
    """

    def __init__(
        self,
        vocab: Sequence[str],
        table: Mapping[tuple[str, tuple[str, ...]], Mapping[str, float]] | None = None,
        default: Mapping[str, float] | None = None,
    ):
        if END_TOKEN not in vocab:
            raise ValueError(f"vocabulary must contain the end token {END_TOKEN!r}")
        self.vocab = tuple(vocab)
        self._table = {
            (prompt, tuple(prefix)): self._to_log(dist, f"entry {(prompt, tuple(prefix))!r}")
            for (prompt, prefix), dist in (table or {}).items()
        }
        self._default = self._to_log(default, "default") if default is not None else None
        self._uniform = {tok: -math.log(len(self.vocab)) for tok in self.vocab}

    def _to_log(self, dist: Mapping[str, float], where: str) -> dict[str, float]:
        unknown = set(dist) - set(self.vocab)
        if unknown:
            raise ValueError(f"{where}: tokens outside vocabulary: {sorted(unknown)}")
        if any(p < 0 for p in dist.values()):
            raise ValueError(f"{where}: negative probability")
        total = sum(dist.values())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"{where}: probabilities sum to {total}, not 1")
        return {tok: (math.log(dist[tok]) if dist.get(tok, 0.0) > 0 else -math.inf) for tok in self.vocab}

    @classmethod
    def static(cls, vocab: Sequence[str], dist: Mapping[str, float]) -> "TableScorer":
        """Same distribution at every step."""
        return cls(vocab, table=None, default=dist)

    def next_log_probs(self, prompt: str, prefix: tuple[str, ...]) -> dict[str, float]:
        hit = self._table.get((prompt, tuple(prefix)))
        if hit is not None:
            return hit
        if self._default is not None:
            return self._default
        return self._uniform


class NgramTailScorer:
    """Count-based tail language model fit on train triples.

    Serves as the local stand-in for a fine-tuned generative model: for a
    prompt seen in training, the next-token distribution is the smoothed
    count of continuations of the current prefix among that prompt's train
    tails; anything unseen backs off to uniform.  Deterministic.
    """

    def __init__(self, vocab: Sequence[str], smoothing: float = 0.1):
        if END_TOKEN not in vocab:
            raise ValueError(f"vocabulary must contain the end token {END_TOKEN!r}")
        self.vocab = tuple(vocab)
        self.smoothing = smoothing
        self._counts: dict[str, dict[tuple[str, ...], dict[str, int]]] = {}

    def observe(self, prompt: str, target_tokens: Sequence[str]) -> None:
        by_prefix = self._counts.setdefault(prompt, {})
        for i, tok in enumerate(target_tokens):
            ctx = by_prefix.setdefault(tuple(target_tokens[:i]), {})
            ctx[tok] = ctx.get(tok, 0) + 1

    def next_log_probs(self, prompt: str, prefix: tuple[str, ...]) -> dict[str, float]:
        counts = self._counts.get(prompt, {}).get(tuple(prefix), {})
        lam = self.smoothing
        total = sum(counts.values()) + lam * len(self.vocab)
        if total <= 0:
            u = -math.log(len(self.vocab))
            return {tok: u for tok in self.vocab}
        return {tok: math.log((counts.get(tok, 0) + lam) / total) for tok in self.vocab}


@dataclass
class TrieNode:
    children: dict[str, "TrieNode"] = field(default_factory=dict)
    entity_ids: list[int] = field(default_factory=list)

    @property
    def terminal(self) -> bool:
        return bool(self.entity_ids)


class NameTrie:
    """Prefix tree over tokenized entity names; terminals carry entity ids."""

    def __init__(self):
        self.root = TrieNode()
        self.n_terminals = 0
        self.n_entities = 0

    def insert(self, tokens: Sequence[str], entity_id: int) -> None:
        node = self.root
        for tok in tokens:
            node = node.children.setdefault(tok, TrieNode())
        if not node.entity_ids:
            self.n_terminals += 1
        node.entity_ids.append(entity_id)
        self.n_entities += 1

    def is_empty(self) -> bool:
        return not self.root.children and not self.root.entity_ids


def build_trie(labeled_entities: Iterable[tuple[int, str]], tokenizer: CharTokenizer) -> NameTrie:
    """Trie over the tokenized entity labels.

    Every label must survive an encode/decode round-trip (else the decoded
    output could not be matched back to the entity); duplicate labels
    collapse onto one terminal holding all their entity ids.
    """
    trie = NameTrie()
    for eid, label in labeled_entities:
        tokens = tokenizer.encode(label)
        if tokenizer.decode(tokens) != label:
            raise ValueError(f"label {label!r} does not round-trip through the tokenizer")
        trie.insert(tokens, eid)
    if trie.is_empty():
        raise ValueError("no entity labels provided")
    return trie


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[str, ...]
    log_prob: float
    finished: bool

    @property
    def text_tokens(self) -> tuple[str, ...]:
        """Tokens without the trailing end marker."""
        if self.tokens and self.tokens[-1] == END_TOKEN:
            return self.tokens[:-1]
        return self.tokens


def _check_normalized(log_probs: Mapping[str, float], vocab: tuple[str, ...]) -> None:
    missing = set(vocab) - set(log_probs)
    if missing:
        raise ValueError(f"scorer reply is missing tokens: {sorted(missing)[:5]}")
    finite = [lp for lp in log_probs.values() if lp != -math.inf]
    if not finite:
        raise ValueError("scorer reply assigns zero probability everywhere")
    m = max(finite)
    lse = m + math.log(sum(math.exp(lp - m) for lp in finite))
    if abs(lse) > NORMALIZATION_TOL:
        raise ValueError(f"scorer reply is not normalized: log-sum-exp = {lse:.3g}")


def _sort_key(tokens: tuple[str, ...], log_prob: float):
    return (-log_prob, tokens)


def beam_search(
    scorer: TokenScorer,
    prompt: str,
    beam_width: int,
    max_len: int,
) -> list[Hypothesis]:
    """Top-B finished hypotheses for the prompt, best first.

    See the module docstring for the exact expansion/pruning/stop rules.
    Raises ValueError if the scorer returns an unnormalized distribution.
    """
    if beam_width < 1 or max_len < 1:
        raise ValueError("beam width and max length must be >= 1")
    live: list[tuple[tuple[str, ...], float]] = [((), 0.0)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        candidates: list[tuple[tuple[str, ...], float]] = []
        for tokens, lp in live:
            dist = scorer.next_log_probs(prompt, tokens)
            _check_normalized(dist, scorer.vocab)
            for tok in scorer.vocab:
                step_lp = dist.get(tok, -math.inf)
                if step_lp == -math.inf:
                    continue  # zero-probability extension can never occur
                candidates.append((tokens + (tok,), lp + step_lp))
        next_live = []
        for tokens, lp in candidates:
            if tokens[-1] == END_TOKEN:
                finished.append(Hypothesis(tokens, lp, True))
            else:
                next_live.append((tokens, lp))
        next_live.sort(key=lambda c: _sort_key(c[0], c[1]))
        live = next_live[:beam_width]
        if len(finished) >= beam_width or not live:
            break
    finished.sort(key=lambda h: _sort_key(h.tokens, h.log_prob))
    if len(finished) < beam_width:
        leftovers = [Hypothesis(tokens, lp, False) for tokens, lp in live]
        leftovers.sort(key=lambda h: _sort_key(h.tokens, h.log_prob))
        finished.extend(leftovers)
    return finished[:beam_width]


def constrained_beam_search(
    scorer: TokenScorer,
    trie: NameTrie,
    prompt: str,
    beam_width: int,
    max_len: int,
) -> list[tuple[int, float]]:
    """Decode directly into the entity set: (entity id, log-prob), best first.

    Token choices are masked to the current trie node's children (the end
    token is allowed exactly at terminals) and the masked log-probabilities
    are renormalized, so a forced single path scores 0.  Every output is a
    graph entity by construction; hypotheses that cannot finish within
    max_len are dropped.
    """
    if beam_width < 1 or max_len < 1:
        raise ValueError("beam width and max length must be >= 1")
    if trie.is_empty():
        raise ValueError("empty name trie")
    live: list[tuple[tuple[str, ...], float, TrieNode]] = [((), 0.0, trie.root)]
    finished: list[tuple[tuple[str, ...], float, TrieNode]] = []
    for _ in range(max_len):
        candidates: list[tuple[tuple[str, ...], float, TrieNode]] = []
        for tokens, lp, node in live:
            allowed = list(node.children)
            if node.terminal:
                allowed.append(END_TOKEN)
            dist = scorer.next_log_probs(prompt, tokens)
            _check_normalized(dist, scorer.vocab)
            masked = {tok: dist.get(tok, -math.inf) for tok in allowed}
            finite = [v for v in masked.values() if v != -math.inf]
            if not finite:
                continue  # scorer rules out every legal continuation
            m = max(finite)
            lse = m + math.log(sum(math.exp(v - m) for v in finite))
            for tok in sorted(allowed):
                step_lp = masked[tok]
                if step_lp == -math.inf:
                    continue
                new_lp = lp + step_lp - lse
                if tok == END_TOKEN:
                    candidates.append((tokens + (tok,), new_lp, node))
                else:
                    candidates.append((tokens + (tok,), new_lp, node.children[tok]))
        next_live = []
        for tokens, lp, node in candidates:
            if tokens[-1] == END_TOKEN:
                finished.append((tokens, lp, node))
            else:
                next_live.append((tokens, lp, node))
        next_live.sort(key=lambda c: _sort_key(c[0], c[1]))
        live = next_live[:beam_width]
        if len(finished) >= beam_width or not live:
            break
    results: list[tuple[int, float, tuple[str, ...]]] = []
    for tokens, lp, node in finished:
        for eid in sorted(node.entity_ids):
            results.append((eid, lp, tokens))
    results.sort(key=lambda r: (-r[1], r[2], r[0]))
    return [(eid, lp) for eid, lp, _ in results[:beam_width]]


class NllResult:
    """Sequence negative log-likelihood with its per-token mean."""

    __slots__ = ("total", "per_token")

    def __init__(self, total: float, per_token: float):
        self.total = total
        self.per_token = per_token

    def __repr__(self):
        return f"NllResult(total={self.total:.6g}, per_token={self.per_token:.6g})"


def sequence_nll(scorer: TokenScorer, prompt: str, target: Sequence[str]) -> NllResult:
    """Autoregressive cross-entropy of the target under the scorer.

    The target must end with the END token (and contain it nowhere else);
    tokens outside the scorer vocabulary are an error.
    """
    target = list(target)
    if not target or target[-1] != END_TOKEN:
        raise ValueError(f"target must end with {END_TOKEN!r}")
    if END_TOKEN in target[:-1]:
        raise ValueError("end token may only appear at the end of the target")
    known = set(scorer.vocab)
    for tok in target:
        if tok not in known:
            raise ValueError(f"token {tok!r} not in scorer vocabulary")
    total = 0.0
    for i, tok in enumerate(target):
        dist = scorer.next_log_probs(prompt, tuple(target[:i]))
        _check_normalized(dist, scorer.vocab)
        total -= dist.get(tok, -math.inf)
    return NllResult(total, total / len(target))
