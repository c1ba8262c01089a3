"""Translation (TransE) and rotation (RotatE) embeddings with
self-adversarial negative sampling, plus filtered tail-ranking evaluation.

TransE scores a triple as -||e_h + w_r - e_t||_p.  RotatE stores entity
rows as dim/2 complex numbers laid out [real half | imaginary half] and
relations as phase vectors of length dim/2; the score is the negated L2
norm of e_h * exp(i*theta_r) - e_t.  Phases being the parameters, relation
factors keep unit modulus through every update.

Training is plain SGD over shuffled batches, fully deterministic for a
given seed.  Heavy inner loops live in kgic.kernels.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Sequence

import numpy as np

from kgic import kernels
from kgic.graph import Triple

__all__ = [
    "KgeConfig",
    "EmbeddingTable",
    "init_embeddings",
    "score",
    "score_tails",
    "sample_negatives",
    "train",
    "rank_tail",
    "eval_tail_ranks",
    "hits_at_k",
]

MODELS = ("transe", "rotate")
CHECKPOINT_MAGIC = "kgic-kge"


@dataclass(frozen=True)
class KgeConfig:
    model: str = "transe"
    dim: int = 64
    norm_p: int = 1  # TransE distance norm
    margin: float | None = None  # default 5 (transe) / 12 (rotate)
    adversarial_temp: float = 1.0
    num_negatives: int = 8
    neg_mode: str = "both"  # tail | head | both
    epochs: int = 100
    batch_size: int = 256
    lr: float = 0.05
    seed: int = 0
    reject_train_negatives: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.dim < 1 or self.epochs < 0 or self.batch_size < 1 or self.num_negatives < 1:
            raise ValueError("dim, epochs, batch_size and num_negatives must be positive")
        if self.norm_p not in (1, 2):
            raise ValueError("norm_p must be 1 or 2")
        if self.adversarial_temp < 0:
            raise ValueError("adversarial temperature must be >= 0")
        if self.neg_mode not in ("tail", "head", "both"):
            raise ValueError("neg_mode must be tail, head or both")

    @property
    def effective_margin(self) -> float:
        if self.margin is not None:
            return self.margin
        return 12.0 if self.model == "rotate" else 5.0


@dataclass
class EmbeddingTable:
    model: str
    dim: int
    entities: np.ndarray  # (|E|, dim) float64
    relations: np.ndarray  # transe: (|R|, dim); rotate: (|R|, dim/2) phases
    seed: int = 0
    split_fingerprint: str | None = None

    @property
    def n_entities(self) -> int:
        return self.entities.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relations.shape[0]

    def copy(self) -> "EmbeddingTable":
        return replace(self, entities=self.entities.copy(), relations=self.relations.copy())

    def relation_factors(self, r: int) -> np.ndarray:
        """RotatE unit-modulus complex factors exp(i*theta) for relation r."""
        if self.model != "rotate":
            raise ValueError("relation factors exist only for the rotation model")
        theta = self.relations[r]
        return np.cos(theta) + 1j * np.sin(theta)

    # -- checkpoint: JSON header line + row-major little-endian float64 ----

    def save(self, path: str) -> None:
        header = {
            "magic": CHECKPOINT_MAGIC,
            "version": 1,
            "model": self.model,
            "dim": self.dim,
            "n_entities": int(self.entities.shape[0]),
            "n_relations": int(self.relations.shape[0]),
            "rel_width": int(self.relations.shape[1]),
            "seed": self.seed,
            "split_fingerprint": self.split_fingerprint,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
            fh.write(np.ascontiguousarray(self.entities, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.relations, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str) -> "EmbeddingTable":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            if header.get("magic") != CHECKPOINT_MAGIC:
                raise ValueError(f"{path} is not an embedding checkpoint")
            ne, nr = header["n_entities"], header["n_relations"]
            dim, rw = header["dim"], header["rel_width"]
            ent = np.frombuffer(fh.read(ne * dim * 8), dtype="<f8").reshape(ne, dim).copy()
            rel = np.frombuffer(fh.read(nr * rw * 8), dtype="<f8").reshape(nr, rw).copy()
            trailing = fh.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes after embedding payload")
        return cls(header["model"], dim, ent, rel, header.get("seed", 0), header.get("split_fingerprint"))


def init_embeddings(config: KgeConfig, n_entities: int, n_relations: int) -> EmbeddingTable:
    """Seeded uniform init in [-6/sqrt(dim), 6/sqrt(dim)]; rotation phases
    uniform in [-pi, pi].  The rotation model needs an even dim."""
    if config.model == "rotate" and config.dim % 2:
        raise ValueError("rotation model requires an even embedding dim")
    rng = np.random.default_rng(config.seed)
    bound = 6.0 / np.sqrt(config.dim)
    ent = rng.uniform(-bound, bound, size=(n_entities, config.dim))
    if config.model == "rotate":
        rel = rng.uniform(-np.pi, np.pi, size=(n_relations, config.dim // 2))
    else:
        rel = rng.uniform(-bound, bound, size=(n_relations, config.dim))
    return EmbeddingTable(config.model, config.dim, ent, rel, seed=config.seed)


def _rotate_target(table: EmbeddingTable, h: int, r: int) -> np.ndarray:
    """h * exp(i*theta_r) in the [re | im] layout used by entity rows."""
    half = table.dim // 2
    hc = table.entities[h, :half] + 1j * table.entities[h, half:]
    hr = hc * table.relation_factors(r)
    return np.concatenate([hr.real, hr.imag])


def score(table: EmbeddingTable, h: int, r: int, t: int, p: int = 1) -> float:
    """Plausibility score of one triple; higher is more plausible."""
    if table.model == "transe":
        diff = table.entities[h] + table.relations[r] - table.entities[t]
        return float(-np.abs(diff).sum()) if p == 1 else float(-np.sqrt((diff * diff).sum()))
    target = _rotate_target(table, h, r)
    diff = target - table.entities[t]
    return float(-np.sqrt((diff * diff).sum()))


def score_tails(table: EmbeddingTable, h: int, r: int, p: int = 1) -> np.ndarray:
    """Scores of (h, r, t) for every entity t, via the active kernel backend."""
    if table.model == "transe":
        target = table.entities[h] + table.relations[r]
        return kernels.neg_dist_to_rows(table.entities, np.ascontiguousarray(target), p)
    target = _rotate_target(table, h, r)
    return kernels.neg_dist_to_rows(table.entities, np.ascontiguousarray(target), 2)


def sample_negatives(
    triple: Triple | Sequence[int],
    n: int,
    n_entities: int,
    rng: np.random.Generator,
    mode: str = "both",
    forbidden: set[tuple[int, int, int]] | None = None,
) -> np.ndarray:
    """n corrupted copies of a triple as an (n, 3) int64 array.

    Replacement entities are uniform over the entity set; "both" alternates
    tail and head corruption.  When ``forbidden`` is given (normally the
    train set), corruptions appearing there are rejected and redrawn, with
    a bounded number of attempts.
    """
    h, r, t = int(triple[0]), int(triple[1]), int(triple[2])
    if n_entities == 1:
        warnings.warn("only one entity: corruptions equal the original triple")
    out = np.empty((n, 3), dtype=np.int64)
    for i in range(n):
        corrupt_tail = mode == "tail" or (mode == "both" and i % 2 == 0)
        for _ in range(100):
            e = int(rng.integers(n_entities))
            cand = (h, r, e) if corrupt_tail else (e, r, t)
            if forbidden is None or cand not in forbidden or n_entities == 1:
                break
        out[i] = cand
    return out


def train(
    config: KgeConfig,
    train_triples: Sequence[Triple] | np.ndarray,
    n_entities: int,
    n_relations: int,
    log_every: int = 0,
) -> tuple[EmbeddingTable, list[float]]:
    """SGD on the self-adversarial negative-sampling loss.

    L = -ln sigmoid(margin - d(pos)) - sum_i p_i ln sigmoid(d(neg_i) - margin),
    with p_i the softmax of adversarial_temp * score(neg_i) over the
    corruptions of one positive (temperature 0 gives uniform weights).
    Gradients are averaged over the batch, so the effective step per
    triple shrinks with batch_size; small batches with lr around 0.1-0.5
    train fastest under plain SGD.  Returns the trained table and
    per-epoch mean losses.  Raises on a non-finite loss with epoch/batch
    diagnostics.
    """
    triples = np.asarray(train_triples, dtype=np.int64).reshape(-1, 3)
    if triples.shape[0] == 0:
        raise ValueError("empty train set")
    table = init_embeddings(config, n_entities, n_relations)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7261696E]))
    gamma = config.effective_margin

    forbidden: set[tuple[int, int, int]] | None = None
    if config.reject_train_negatives:
        forbidden = {tuple(row) for row in triples.tolist()}

    n = triples.shape[0]
    losses: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = triples[order[start : start + config.batch_size]]
            if forbidden is None:
                # vectorized fast path, same distribution as sample_negatives
                draws = rng.integers(n_entities, size=(batch.shape[0], config.num_negatives))
                neg = np.repeat(batch[:, np.newaxis, :], config.num_negatives, axis=1)
                if config.neg_mode == "tail":
                    neg[:, :, 2] = draws
                elif config.neg_mode == "head":
                    neg[:, :, 0] = draws
                else:
                    neg[:, 0::2, 2] = draws[:, 0::2]
                    neg[:, 1::2, 0] = draws[:, 1::2]
            else:
                neg = np.stack(
                    [
                        sample_negatives(row, config.num_negatives, n_entities, rng,
                                         config.neg_mode, forbidden)
                        for row in batch
                    ]
                )
            if config.model == "transe":
                loss = kernels.transe_train_batch(
                    table.entities, table.relations, batch, neg,
                    gamma, config.adversarial_temp, config.lr, config.norm_p,
                )
            else:
                loss = kernels.rotate_train_batch(
                    table.entities, table.relations, batch, neg,
                    gamma, config.adversarial_temp, config.lr,
                )
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch {start // config.batch_size} (lr={config.lr}, margin={gamma})"
                )
            epoch_loss += loss * batch.shape[0]
        losses.append(epoch_loss / n)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{config.epochs}: loss {losses[-1]:.6f}")
    return table, losses


def rank_tail(
    table: EmbeddingTable,
    h: int,
    r: int,
    gold_t: int,
    known_triples: Iterable[Triple] | None = None,
    p: int = 1,
    raw: bool = False,
    known_tails: set[int] | None = None,
) -> int:
    """1-based filtered rank of the gold tail among all entities.

    Other known true tails for (h, r) are removed before ranking (pass
    raw=True to skip filtering).  Ties are broken by ascending entity
    handle, so the rank counts entities scoring strictly higher plus
    equal-scoring entities with a smaller handle.
    """
    scores = score_tails(table, h, r, p)
    gold_score = scores[gold_t]
    mask = np.ones(len(scores), dtype=bool)
    if not raw:
        if known_tails is None:
            known_tails = {t.tail for t in known_triples or () if t.head == h and t.relation == r}
        for t in known_tails:
            if t != gold_t:
                mask[t] = False
    better = np.count_nonzero(mask & (scores > gold_score))
    tied_smaller = np.count_nonzero(mask[:gold_t] & (scores[:gold_t] == gold_score))
    return int(1 + better + tied_smaller)


def eval_tail_ranks(
    table: EmbeddingTable,
    test_triples: Sequence[Triple],
    known_triples: Iterable[Triple],
    p: int = 1,
    raw: bool = False,
) -> list[int]:
    """Filtered tail ranks for a batch of test triples."""
    tails_by_pair: dict[tuple[int, int], set[int]] = {}
    if not raw:
        for t in known_triples:
            tails_by_pair.setdefault((t.head, t.relation), set()).add(t.tail)
    return [
        rank_tail(
            table, t.head, t.relation, t.tail, p=p, raw=raw,
            known_tails=tails_by_pair.get((t.head, t.relation), set()) if not raw else None,
        )
        for t in test_triples
    ]


def hits_at_k(ranks: Sequence[int], k: int) -> float:
    """Fraction of ranks at or below k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(ranks) == 0:
        raise ValueError("empty rank list")
    ranks = np.asarray(ranks)
    return float(np.count_nonzero(ranks <= k) / len(ranks))
