"""Stage one: score relations per head entity and select the relevant set.

Four scoring routes share one contract (a vector of |R| reals in [0, 1]):

* class-frequency heuristic (weighted per-class property frequency),
* item-based KNN over binary property rows,
* content-based neighbors over TF-IDF text features,
* a logistic classifier trained with binary cross-entropy on TF-IDF text.

Selection is a single threshold tuned on validation micro-F1.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from kgic.graph import KnowledgeGraph

__all__ = [
    "ClassStats",
    "build_class_stats",
    "recoin_scores",
    "knn_scores",
    "tfidf_features",
    "entity_text",
    "content_scores",
    "hybrid_scores",
    "bce_loss",
    "bce_loss_grad",
    "LinearClassifier",
    "train_linear_classifier",
    "tune_threshold",
    "select_properties",
    "micro_prf",
    "DEFAULT_THRESHOLD_GRID",
]

BCE_EPS = 1e-7
DEFAULT_THRESHOLD_GRID = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))


# ---------------------------------------------------------------------------
# class-frequency heuristic
# ---------------------------------------------------------------------------


@dataclass
class ClassStats:
    """Per-class entity counts and per-(relation, class) head frequencies.

    size[c]    = number of entities carrying class c in their metadata
    freq[p, c] = number of class-c entities heading at least one train
                 triple with relation p

    Entities with several classes count toward each of them.
    """

    size: dict[str, int]
    freq: dict[tuple[int, str], int]
    n_relations: int


def build_class_stats(graph: KnowledgeGraph, train_ids: Iterable[int]) -> ClassStats:
    """Count class sizes and per-class property frequencies on the train set."""
    size: dict[str, int] = {}
    for eid in range(graph.n_entities):
        for cls in graph.entity_meta(eid).types:
            size[cls] = size.get(cls, 0) + 1

    head_relations: dict[int, set[int]] = {}
    for i in train_ids:
        t = graph.triples[i]
        head_relations.setdefault(t.head, set()).add(t.relation)

    freq: dict[tuple[int, str], int] = {}
    for eid, rels in head_relations.items():
        for cls in graph.entity_meta(eid).types:
            for rel in rels:
                key = (rel, cls)
                freq[key] = freq.get(key, 0) + 1
    return ClassStats(size, freq, graph.n_relations)


def recoin_scores(graph: KnowledgeGraph, entity: int, stats: ClassStats) -> np.ndarray:
    """Weighted class-frequency score for every relation.

    score(p) = sum over the entity's classes of freq(p, c), divided by the
    sum of the class sizes.  Entities without any class get all zeros and a
    UserWarning.
    """
    scores = np.zeros(stats.n_relations, dtype=np.float64)
    classes = graph.entity_meta(entity).types
    if not classes:
        warnings.warn(
            f"entity {graph.entities.label(entity)!r} has no classes; "
            "class-frequency scores are all zero",
            stacklevel=2,
        )
        return scores
    denom = sum(stats.size.get(c, 0) for c in classes)
    if denom == 0:
        return scores
    for rel in range(stats.n_relations):
        num = sum(stats.freq.get((rel, c), 0) for c in classes)
        scores[rel] = num / denom
    return scores


# ---------------------------------------------------------------------------
# neighbor-based recommenders
# ---------------------------------------------------------------------------


def _cosine_to_rows(query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    qnorm = np.linalg.norm(query)
    if qnorm == 0:
        return np.zeros(matrix.shape[0])
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = (matrix @ query) / (norms * qnorm)
    sims[~np.isfinite(sims)] = 0.0
    return sims


def _top_k(sims: np.ndarray, exclude: int | None, k: int) -> np.ndarray:
    """Indices of the k largest similarities, ties broken by row index."""
    order = np.lexsort((np.arange(len(sims)), -sims))
    if exclude is not None:
        order = order[order != exclude]
    return order[:k]


def knn_scores(entity_row: int, property_matrix: np.ndarray, k: int) -> np.ndarray:
    """Item-KNN property scores: mean of the k most cosine-similar rows.

    The query entity's own row is excluded.  A zero query row (entity has
    no properties yet) yields zero scores; if fewer than k other rows
    exist, all of them are used.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    matrix = np.asarray(property_matrix, dtype=np.float64)
    query = matrix[entity_row]
    if not query.any():
        return np.zeros(matrix.shape[1])
    sims = _cosine_to_rows(query, matrix)
    neighbors = _top_k(sims, entity_row, k)
    if neighbors.size == 0:
        return np.zeros(matrix.shape[1])
    return matrix[neighbors].mean(axis=0)


_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def _tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def entity_text(graph: KnowledgeGraph, entity: int, mask_types: bool = False, mask_description: bool = False) -> str:
    """Feature text for one entity: label, types, description, space-joined."""
    meta = graph.entity_meta(entity)
    parts = [graph.entities.label(entity)]
    if not mask_types:
        parts.extend(meta.types)
    if not mask_description and meta.description:
        parts.append(meta.description)
    return " ".join(parts)


def tfidf_features(corpus: Sequence[str]) -> tuple[sp.csr_matrix, dict[str, int]]:
    """TF-IDF matrix over whitespace/punctuation-tokenized documents.

    weight(t, d) = tf(t, d) * (ln((1 + N) / (1 + df(t))) + 1), rows
    L2-normalized.  Documents with no tokens become zero rows.  Returns the
    sparse matrix and the term -> column mapping.
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    vocab: dict[str, int] = {}
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    df_sets: dict[int, int] = {}
    for d, text in enumerate(corpus):
        counts: dict[int, int] = {}
        for tok in _tokenize(text):
            col = vocab.setdefault(tok, len(vocab))
            counts[col] = counts.get(col, 0) + 1
        for col, tf in counts.items():
            rows.append(d)
            cols.append(col)
            vals.append(float(tf))
            df_sets[col] = df_sets.get(col, 0) + 1
    n_docs = len(corpus)
    n_terms = max(len(vocab), 1)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n_docs, n_terms), dtype=np.float64)
    df = np.ones(n_terms)
    for col, d in df_sets.items():
        df[col] = d
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
    mat = mat.multiply(idf[np.newaxis, :]).tocsr()
    norms = np.sqrt(mat.multiply(mat).sum(axis=1)).A.ravel()
    norms[norms == 0] = 1.0
    mat = sp.diags(1.0 / norms) @ mat
    return mat.tocsr(), vocab


def content_scores(
    entity_row: int,
    tfidf: sp.csr_matrix,
    property_matrix: np.ndarray,
    k: int,
) -> np.ndarray:
    """Content-based scores: similarity-weighted mean of neighbors' rows.

    Neighbors are ranked by TF-IDF cosine similarity (rows are already
    L2-normalized, so similarity is a dot product); weights are the top-k
    similarities normalized to sum to 1.  All-zero similarities (e.g. an
    entity with no text) yield zero scores.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query = tfidf[entity_row]
    sims = (tfidf @ query.T).toarray().ravel()
    sims[entity_row] = 0.0
    neighbors = _top_k(sims, entity_row, k)
    weights = sims[neighbors]
    total = weights.sum()
    if total <= 0:
        return np.zeros(property_matrix.shape[1])
    weights = weights / total
    matrix = np.asarray(property_matrix, dtype=np.float64)
    return weights @ matrix[neighbors]


def hybrid_scores(knn: np.ndarray, content: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Convex blend of collaborative and content-based scores."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * np.asarray(knn) + (1.0 - alpha) * np.asarray(content)


# ---------------------------------------------------------------------------
# binary cross-entropy and the logistic classifier
# ---------------------------------------------------------------------------


def _clip(pred: np.ndarray) -> np.ndarray:
    return np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)


def bce_loss(pred: np.ndarray, gold: np.ndarray) -> float:
    """Multi-label binary cross-entropy, summed over labels, mean over samples.

    L = -(1/N) * sum_i sum_c [y log p + (1 - y) log(1 - p)], with
    predictions clipped to [1e-7, 1 - 1e-7].
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    gold = np.atleast_2d(np.asarray(gold, dtype=np.float64))
    if pred.shape != gold.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gold {gold.shape}")
    p = _clip(pred)
    n = pred.shape[0]
    cell = gold * np.log(p) + (1.0 - gold) * np.log(1.0 - p)
    return float(-cell.sum() / n)


def bce_loss_grad(pred: np.ndarray, gold: np.ndarray) -> np.ndarray:
    """Analytic dL/dpred for interior predictions: (p - y) / (p (1 - p)) / N."""
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    gold = np.atleast_2d(np.asarray(gold, dtype=np.float64))
    if pred.shape != gold.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gold {gold.shape}")
    p = _clip(pred)
    return (p - gold) / (p * (1.0 - p)) / pred.shape[0]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LinearClassifier:
    """Per-label logistic model over sparse text features."""

    weights: np.ndarray  # (n_features, n_labels)
    bias: np.ndarray  # (n_labels,)

    def predict_proba(self, features: sp.spmatrix | np.ndarray) -> np.ndarray:
        logits = features @ self.weights + self.bias
        return _sigmoid(np.asarray(logits))


def train_linear_classifier(
    features: sp.spmatrix | np.ndarray,
    gold: np.ndarray,
    epochs: int = 200,
    lr: float = 1.0,
    seed: int = 0,
) -> tuple[LinearClassifier, list[float]]:
    """Full-batch gradient descent on the multi-label BCE loss.

    Weights start at small seeded-uniform values, so the run is fully
    deterministic.  Returns the classifier and the per-epoch loss curve
    (loss evaluated before each step).  Aborts on non-finite loss.
    """
    gold = np.asarray(gold, dtype=np.float64)
    n_samples, n_labels = gold.shape
    n_features = features.shape[1]
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1e-3, 1e-3, size=(n_features, n_labels))
    b = np.zeros(n_labels)
    losses: list[float] = []
    for epoch in range(epochs):
        probs = _sigmoid(np.asarray(features @ w + b))
        loss = bce_loss(probs, gold)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"training diverged at epoch {epoch}: loss={loss!r}, "
                f"|w|max={np.abs(w).max():.3g}"
            )
        losses.append(loss)
        grad_logits = (probs - gold) / n_samples
        grad_w = features.T @ grad_logits
        grad_b = grad_logits.sum(axis=0)
        w = w - lr * np.asarray(grad_w)
        b = b - lr * grad_b
    return LinearClassifier(w, b), losses


# ---------------------------------------------------------------------------
# thresholding and metrics
# ---------------------------------------------------------------------------


def select_properties(scores: np.ndarray, threshold: float) -> np.ndarray:
    """Binary relevance vector: positions where score >= threshold."""
    return (np.asarray(scores) >= threshold).astype(np.int8)


def micro_prf(pred: np.ndarray, gold: np.ndarray) -> tuple[float, float, float]:
    """Micro precision/recall/F1 over all entity-label cells. 0/0 counts as 0."""
    pred = np.asarray(pred)
    gold = np.asarray(gold)
    if pred.shape != gold.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gold {gold.shape}")
    pred = pred.astype(bool)
    gold = gold.astype(bool)
    tp = int(np.count_nonzero(pred & gold))
    fp = int(np.count_nonzero(pred & ~gold))
    fn = int(np.count_nonzero(~pred & gold))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def tune_threshold(
    scores: np.ndarray,
    gold: np.ndarray,
    grid: Sequence[float] = DEFAULT_THRESHOLD_GRID,
) -> float:
    """Grid value maximizing validation micro-F1.

    Ties on F1 prefer the threshold predicting fewer positives (a higher
    cut), and remaining ties take the smaller threshold, so a degenerate
    all-negative validation set selects the top of the grid and predicts
    nothing.
    """
    if len(grid) == 0:
        raise ValueError("empty threshold grid")
    scores = np.asarray(scores)
    gold = np.asarray(gold)
    best: tuple[float, int, float] | None = None  # (-f1, n_pos, threshold)
    for theta in sorted(grid):
        pred = select_properties(scores, theta)
        _, _, f1 = micro_prf(pred, gold)
        key = (-f1, int(pred.sum()), theta)
        if best is None or key < best:
            best = key
    return float(best[2])
