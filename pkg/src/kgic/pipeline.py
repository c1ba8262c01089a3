"""Instance completion: stage-one candidate pairs, stage-two tails, metrics.

Evaluation semantics (also echoed in every report):

* pair precision  = fraction of proposed (head, relation) pairs that occur
  among the distinct (head, relation) pairs of the gold test triples;
* coverage        = fraction of gold test triples whose (head, relation)
  pair was proposed by stage one;
* overall Hits@k  = fraction of ALL gold test triples whose tail is in the
  top-k for its pair, counting triples with an unproposed pair as misses;
* conditional Hits@k restricts the denominator to covered triples.

Only triples present in the dataset count as correct (closed-world); a
decoded tail forming an unknown triple is simply wrong.  Stage one and
stage two must have been trained on the identical train split: evaluation
refuses to run when their split fingerprints differ.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from kgic import kge as kge_mod
from kgic import properties as prop
from kgic.genlp import CharTokenizer, NameTrie, TokenScorer, build_prompt, constrained_beam_search
from kgic.graph import KnowledgeGraph, SplitSet, Triple

__all__ = [
    "LeakageError",
    "CandidatePair",
    "CandidateSet",
    "InstancePrediction",
    "CompletionResult",
    "EvalReport",
    "PropertyMethod",
    "RecoinMethod",
    "KnnMethod",
    "ContentMethod",
    "HybridMethod",
    "LinearMethod",
    "KgePredictor",
    "GenerativePredictor",
    "split_test_heads",
    "gold_property_matrix",
    "generate_candidates",
    "pair_precision",
    "coverage",
    "complete",
    "eval_ic",
    "eval_property_prediction",
    "ablate",
    "ablation_table",
    "MASK_COMBOS",
]


class LeakageError(RuntimeError):
    """Stage-one and stage-two split fingerprints disagree."""


# ---------------------------------------------------------------------------
# stage-one property methods
# ---------------------------------------------------------------------------


class PropertyMethod(Protocol):
    name: str
    split_fingerprint: str

    def scores(self, entity: int) -> np.ndarray:
        ...


class RecoinMethod:
    """Class-frequency heuristic over train-split statistics."""

    name = "recoin"

    def __init__(self, graph: KnowledgeGraph, split: SplitSet):
        self._graph = graph
        self._stats = prop.build_class_stats(graph, split.train)
        self.split_fingerprint = split.fingerprint_hex()

    def scores(self, entity: int) -> np.ndarray:
        return prop.recoin_scores(self._graph, entity, self._stats)


class KnnMethod:
    """Item-KNN over binary train property rows."""

    name = "knn"

    def __init__(self, graph: KnowledgeGraph, split: SplitSet, k: int = 10):
        self._matrix = graph.property_matrix(split.train).astype(np.float64)
        self._k = k
        self.split_fingerprint = split.fingerprint_hex()

    def scores(self, entity: int) -> np.ndarray:
        return prop.knn_scores(entity, self._matrix, self._k)


class ContentMethod:
    """Content-based neighbors over TF-IDF of label + types + description."""

    name = "content"

    def __init__(
        self,
        graph: KnowledgeGraph,
        split: SplitSet,
        k: int = 10,
        mask_types: bool = False,
        mask_description: bool = False,
    ):
        corpus = [
            prop.entity_text(graph, e, mask_types, mask_description)
            for e in range(graph.n_entities)
        ]
        self._tfidf, _ = prop.tfidf_features(corpus)
        self._matrix = graph.property_matrix(split.train).astype(np.float64)
        self._k = k
        self.split_fingerprint = split.fingerprint_hex()

    def scores(self, entity: int) -> np.ndarray:
        return prop.content_scores(entity, self._tfidf, self._matrix, self._k)


class HybridMethod:
    """Convex blend of the collaborative and content-based scores."""

    name = "hybrid"

    def __init__(
        self,
        graph: KnowledgeGraph,
        split: SplitSet,
        k: int = 10,
        alpha: float = 0.5,
        mask_types: bool = False,
        mask_description: bool = False,
    ):
        self._knn = KnnMethod(graph, split, k)
        self._content = ContentMethod(graph, split, k, mask_types, mask_description)
        self._alpha = alpha
        self.split_fingerprint = split.fingerprint_hex()

    def scores(self, entity: int) -> np.ndarray:
        return prop.hybrid_scores(self._knn.scores(entity), self._content.scores(entity), self._alpha)


class LinearMethod:
    """Logistic classifier on TF-IDF text, trained on train-split gold vectors."""

    name = "linear"

    def __init__(
        self,
        graph: KnowledgeGraph,
        split: SplitSet,
        epochs: int = 300,
        lr: float = 2.0,
        seed: int = 0,
        mask_types: bool = False,
        mask_description: bool = False,
    ):
        corpus = [
            prop.entity_text(graph, e, mask_types, mask_description)
            for e in range(graph.n_entities)
        ]
        self._features, _ = prop.tfidf_features(corpus)
        gold = graph.property_matrix(split.train)
        train_heads = sorted({graph.triples[i].head for i in split.train})
        model, self.losses = prop.train_linear_classifier(
            self._features[train_heads], gold[train_heads], epochs=epochs, lr=lr, seed=seed
        )
        self._model = model
        self.split_fingerprint = split.fingerprint_hex()

    def scores(self, entity: int) -> np.ndarray:
        return self._model.predict_proba(self._features[entity]).ravel()


# ---------------------------------------------------------------------------
# stage-two link predictors
# ---------------------------------------------------------------------------


class LinkPredictor(Protocol):
    name: str
    split_fingerprint: str

    def predict(self, head: int, relation: int, k: int) -> list[tuple[int, float]]:
        ...


class KgePredictor:
    """Ranks every entity as tail by embedding score."""

    def __init__(self, table: kge_mod.EmbeddingTable, norm_p: int = 1):
        self._table = table
        self._p = norm_p
        self.name = table.model
        self.split_fingerprint = table.split_fingerprint or ""

    def predict(self, head: int, relation: int, k: int) -> list[tuple[int, float]]:
        scores = kge_mod.score_tails(self._table, head, relation, self._p)
        order = np.lexsort((np.arange(len(scores)), -scores))[:k]
        return [(int(e), float(scores[e])) for e in order]


class GenerativePredictor:
    """Trie-constrained beam decoding over a token scorer."""

    def __init__(
        self,
        scorer: TokenScorer,
        trie: NameTrie,
        graph: KnowledgeGraph,
        split_fingerprint: str,
        beam_width: int = 10,
        max_len: int = 64,
        mask_types: bool = False,
        mask_description: bool = False,
        name: str = "generative",
    ):
        self._scorer = scorer
        self._trie = trie
        self._graph = graph
        self._beam_width = beam_width
        self._max_len = max_len
        self.mask_types = mask_types
        self.mask_description = mask_description
        self.name = name
        self.split_fingerprint = split_fingerprint

    def prompt_for(self, head: int, relation: int) -> str:
        return build_prompt(
            self._graph.entities.label(head),
            self._graph.entity_meta(head),
            self._graph.relations.label(relation),
            self.mask_types,
            self.mask_description,
        )

    def predict(self, head: int, relation: int, k: int) -> list[tuple[int, float]]:
        width = max(self._beam_width, k)
        results = constrained_beam_search(
            self._scorer, self._trie, self.prompt_for(head, relation), width, self._max_len
        )
        return results[:k]


# ---------------------------------------------------------------------------
# candidate generation and metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidatePair:
    head: int
    relation: int
    score: float


@dataclass
class CandidateSet:
    pairs: list[CandidatePair]
    threshold: float
    method: str
    split_fingerprint: str

    def pair_keys(self) -> set[tuple[int, int]]:
        return {(p.head, p.relation) for p in self.pairs}


def split_test_heads(graph: KnowledgeGraph, split: SplitSet) -> list[int]:
    """Distinct heads of the test triples, ascending."""
    return sorted({graph.triples[i].head for i in split.test})


def gold_property_matrix(graph: KnowledgeGraph, triple_ids: Iterable[int], heads: Sequence[int]) -> np.ndarray:
    """Gold relevance vectors for the given heads over one triple subset."""
    full = graph.property_matrix(triple_ids)
    return full[list(heads)]


def generate_candidates(
    method: PropertyMethod,
    heads: Sequence[int],
    threshold: float,
) -> CandidateSet:
    """One pair per (head, relation) whose stage-one score clears the threshold."""
    pairs: list[CandidatePair] = []
    for head in heads:
        try:
            scores = method.scores(head)
        except Exception as exc:
            raise RuntimeError(f"property predictor failed for head {head}: {exc}") from exc
        selected = prop.select_properties(scores, threshold)
        for rel in np.flatnonzero(selected):
            pairs.append(CandidatePair(int(head), int(rel), float(scores[rel])))
    return CandidateSet(pairs, threshold, method.name, method.split_fingerprint)


def _gold_pairs(gold_triples: Sequence[Triple]) -> set[tuple[int, int]]:
    return {(t.head, t.relation) for t in gold_triples}


def pair_precision(pairs: Iterable[CandidatePair | tuple[int, int]], gold_triples: Sequence[Triple]) -> float:
    """|predicted pairs ∩ gold test pairs| / |predicted pairs|."""
    predicted = {(p[0], p[1]) if isinstance(p, tuple) else (p.head, p.relation) for p in pairs}
    if not predicted:
        warnings.warn("no predicted pairs; pair precision is 0 by convention")
        return 0.0
    gold = _gold_pairs(gold_triples)
    return len(predicted & gold) / len(predicted)


def coverage(pairs: Iterable[CandidatePair | tuple[int, int]], gold_triples: Sequence[Triple]) -> float:
    """Fraction of gold test triples whose (head, relation) was proposed."""
    if not gold_triples:
        return 0.0
    predicted = {(p[0], p[1]) if isinstance(p, tuple) else (p.head, p.relation) for p in pairs}
    hit = sum(1 for t in gold_triples if (t.head, t.relation) in predicted)
    return hit / len(gold_triples)


@dataclass
class InstancePrediction:
    pair: CandidatePair
    tails: list[tuple[int, float]]  # (entity, score), best first, len <= k_max


@dataclass
class CompletionResult:
    predictions: list[InstancePrediction]
    failures: list[tuple[CandidatePair, str]]
    method: str
    split_fingerprint: str
    k_max: int


def complete(
    predictor: LinkPredictor,
    pairs: Sequence[CandidatePair],
    k_max: int = 10,
) -> CompletionResult:
    """Stage two: top-k tails per candidate pair.

    Predictor failures are recorded per pair and the run continues; at
    evaluation time the failed pair's gold triples count as misses.
    """
    predictions: list[InstancePrediction] = []
    failures: list[tuple[CandidatePair, str]] = []
    for pair in pairs:
        try:
            tails = predictor.predict(pair.head, pair.relation, k_max)[:k_max]
        except Exception as exc:  # noqa: BLE001 - degrade to a miss, keep going
            failures.append((pair, f"{type(exc).__name__}: {exc}"))
            continue
        predictions.append(InstancePrediction(pair, [(int(t), float(s)) for t, s in tails]))
    return CompletionResult(predictions, failures, predictor.name, predictor.split_fingerprint, k_max)


@dataclass
class EvalReport:
    """Instance-completion metrics plus full provenance for reproduction."""

    ks: tuple[int, ...]
    hits_overall: dict[int, float]
    hits_conditional: dict[int, float]
    pair_precision: float
    coverage: float
    counts: dict[str, int]
    split_fingerprint: str
    config: dict = field(default_factory=dict)

    DEFINITIONS = (
        "coverage = share of gold test triples whose (head, relation) was proposed; "
        "pair precision = share of proposed pairs occurring in gold test triples; "
        "overall Hits@k counts uncovered gold triples as misses, conditional Hits@k "
        "restricts to covered triples; closed-world: only dataset triples are correct"
    )

    def to_dict(self) -> dict:
        return {
            "definitions": self.DEFINITIONS,
            "split_fingerprint": self.split_fingerprint,
            "ks": list(self.ks),
            "hits_overall": {str(k): v for k, v in self.hits_overall.items()},
            "hits_conditional": {str(k): v for k, v in self.hits_conditional.items()},
            "pair_precision": self.pair_precision,
            "coverage": self.coverage,
            "counts": self.counts,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_tsv(self) -> str:
        """Flat metric rows: metric<TAB>value, one line per number."""
        rows = [("split_fingerprint", self.split_fingerprint),
                ("pair_precision", f"{self.pair_precision:.6g}"),
                ("coverage", f"{self.coverage:.6g}")]
        for k in self.ks:
            rows.append((f"hits@{k}_overall", f"{self.hits_overall[k]:.6g}"))
            rows.append((f"hits@{k}_conditional", f"{self.hits_conditional[k]:.6g}"))
        rows.extend((name, str(value)) for name, value in sorted(self.counts.items()))
        return "\n".join(f"{name}\t{value}" for name, value in rows) + "\n"

    def to_text(self) -> str:
        lines = [
            f"split fingerprint: {self.split_fingerprint}",
            f"gold triples: {self.counts.get('n_gold_triples', 0)}, "
            f"predicted pairs: {self.counts.get('n_predicted_pairs', 0)}, "
            f"failures: {self.counts.get('n_failures', 0)}",
            f"pair precision: {self.pair_precision:.4f}",
            f"coverage:       {self.coverage:.4f}",
        ]
        for k in self.ks:
            lines.append(
                f"Hits@{k}: overall {self.hits_overall[k]:.4f}  "
                f"conditional {self.hits_conditional[k]:.4f}"
            )
        lines.append(f"definitions: {self.DEFINITIONS}")
        if self.config:
            lines.append("config: " + json.dumps(self.config, sort_keys=True))
        return "\n".join(lines)


def eval_ic(
    candidates: CandidateSet,
    completion: CompletionResult,
    gold_triples: Sequence[Triple],
    ks: tuple[int, ...] = (1, 5, 10),
    config: Mapping | None = None,
) -> EvalReport:
    """Score a completed run against the held-out test triples."""
    if not gold_triples:
        raise ValueError("empty gold test set")
    if candidates.split_fingerprint != completion.split_fingerprint:
        raise LeakageError(
            "split fingerprint mismatch between stages: "
            f"stage one {candidates.split_fingerprint}, stage two {completion.split_fingerprint}"
        )
    tails_by_pair: dict[tuple[int, int], list[int]] = {
        (p.pair.head, p.pair.relation): [t for t, _ in p.tails] for p in completion.predictions
    }
    proposed = candidates.pair_keys()
    n_gold = len(gold_triples)
    covered = [t for t in gold_triples if (t.head, t.relation) in proposed]
    hits = {k: 0 for k in ks}
    for t in gold_triples:
        ranked = tails_by_pair.get((t.head, t.relation))
        if not ranked:
            continue
        try:
            pos = ranked.index(t.tail)
        except ValueError:
            continue
        for k in ks:
            if pos < k:
                hits[k] += 1
    report = EvalReport(
        ks=tuple(ks),
        hits_overall={k: hits[k] / n_gold for k in ks},
        hits_conditional={k: (hits[k] / len(covered) if covered else 0.0) for k in ks},
        pair_precision=pair_precision(candidates.pairs, gold_triples),
        coverage=len(covered) / n_gold,
        counts={
            "n_gold_triples": n_gold,
            "n_gold_pairs": len(_gold_pairs(gold_triples)),
            "n_predicted_pairs": len(candidates.pairs),
            "n_covered_triples": len(covered),
            "n_predictions": len(completion.predictions),
            "n_failures": len(completion.failures),
        },
        split_fingerprint=candidates.split_fingerprint,
        config=dict(config or {}),
    )
    return report


# ---------------------------------------------------------------------------
# property-prediction evaluation and ablations
# ---------------------------------------------------------------------------


def eval_property_prediction(
    method: PropertyMethod,
    graph: KnowledgeGraph,
    split: SplitSet,
    threshold: float | None = None,
    grid: Sequence[float] = prop.DEFAULT_THRESHOLD_GRID,
) -> dict:
    """Micro P/R/F1 of the method on test heads; threshold tuned on validation
    unless given explicitly."""
    if threshold is None:
        valid_heads = sorted({graph.triples[i].head for i in split.valid})
        valid_scores = np.vstack([method.scores(h) for h in valid_heads])
        valid_gold = gold_property_matrix(graph, split.valid, valid_heads)
        threshold = prop.tune_threshold(valid_scores, valid_gold, grid)
    heads = split_test_heads(graph, split)
    scores = np.vstack([method.scores(h) for h in heads])
    gold = gold_property_matrix(graph, split.test, heads)
    pred = prop.select_properties(scores, threshold)
    precision, recall, f1 = prop.micro_prf(pred, gold)
    return {
        "method": method.name,
        "threshold": threshold,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "n_heads": len(heads),
        "split_fingerprint": method.split_fingerprint,
    }


MASK_COMBOS: tuple[tuple[str, bool, bool], ...] = (
    ("with types & description", False, False),
    ("w/o types", True, False),
    ("w/o description", False, True),
    ("w/o types, w/o description", True, True),
)


def ablate(
    graph: KnowledgeGraph,
    split: SplitSet,
    make_stage_one: Callable[[bool, bool], PropertyMethod],
    make_stage_two: Callable[[bool, bool], LinkPredictor],
    threshold: float,
    k_max: int = 10,
    ks: tuple[int, ...] = (1, 5, 10),
    config: Mapping | None = None,
) -> dict[str, EvalReport]:
    """Re-run the pipeline once per type/description mask combination.

    Masks change only the prompt/feature rendering; splits, seeds and the
    selection threshold are shared across all four runs.
    """
    heads = split_test_heads(graph, split)
    gold = [graph.triples[i] for i in split.test]
    reports: dict[str, EvalReport] = {}
    for label, mask_types, mask_description in MASK_COMBOS:
        stage_one = make_stage_one(mask_types, mask_description)
        stage_two = make_stage_two(mask_types, mask_description)
        candidates = generate_candidates(stage_one, heads, threshold)
        completion = complete(stage_two, candidates.pairs, k_max)
        run_config = dict(config or {})
        run_config.update({"mask_types": mask_types, "mask_description": mask_description})
        reports[label] = eval_ic(candidates, completion, gold, ks, run_config)
    return reports


def ablation_table(reports: Mapping[str, EvalReport], ks: tuple[int, ...] = (1, 5, 10)) -> str:
    """Aligned four-row comparison across mask combinations."""
    header = ["setting".ljust(28)] + [f"Hits@{k}" for k in ks] + ["precision", "coverage"]
    rows = ["  ".join(h.rjust(9) if i else h for i, h in enumerate(header))]
    for label, _, _ in MASK_COMBOS:
        if label not in reports:
            continue
        r = reports[label]
        cells = [label.ljust(28)]
        cells += [f"{r.hits_overall[k]:.4f}".rjust(9) for k in ks]
        cells += [f"{r.pair_precision:.4f}".rjust(9), f"{r.coverage:.4f}".rjust(9)]
        rows.append("  ".join(cells))
    return "\n".join(rows)
