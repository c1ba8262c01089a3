"""In-memory knowledge graph: interned entities/relations, triples, metadata.

The graph is immutable once built.  All downstream stages (splitting,
property prediction, embedding training, decoding) address entities and
relations by dense integer handles; labels exist only at the boundary.
"""

from __future__ import annotations

import gzip
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Vocab",
    "Triple",
    "EntityMeta",
    "KnowledgeGraph",
    "SplitSet",
    "build_graph",
    "fnv1a64",
]

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


class Vocab:
    """Bijection between string labels and dense handles starting at 0."""

    def __init__(self, labels: Iterable[str] = ()):
        self._labels: list[str] = []
        self._ids: dict[str, int] = {}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        """Intern a label. Idempotent; new labels get the next dense handle."""
        if not label:
            raise ValueError("cannot intern an empty label")
        handle = self._ids.get(label)
        if handle is None:
            handle = len(self._labels)
            self._ids[label] = handle
            self._labels.append(label)
        return handle

    def id(self, label: str) -> int:
        return self._ids[label]

    def label(self, handle: int) -> str:
        return self._labels[handle]

    @property
    def labels(self) -> list[str]:
        return list(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._ids

    def __len__(self) -> int:
        return len(self._labels)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._labels == other._labels


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class EntityMeta:
    """Class labels and free-text description attached to an entity."""

    types: tuple[str, ...] = ()
    description: str = ""

    @property
    def primary_type(self) -> str | None:
        """First listed type, used for stratification. None when untyped."""
        return self.types[0] if self.types else None


_EMPTY_META = EntityMeta()


class KnowledgeGraph:
    """Interned triple set plus per-entity metadata and head indexes.

    Duplicate input triples are dropped (first occurrence wins); the number
    of dropped duplicates is kept in ``duplicates_dropped``.  Entities that
    only ever appear as tails still get handles and empty metadata.
    """

    def __init__(
        self,
        entities: Vocab,
        relations: Vocab,
        triples: Sequence[Triple],
        meta: Mapping[int, EntityMeta] | None = None,
        duplicates_dropped: int = 0,
    ):
        self.entities = entities
        self.relations = relations
        self.triples: list[Triple] = list(triples)
        self.meta: dict[int, EntityMeta] = dict(meta or {})
        self.duplicates_dropped = duplicates_dropped

        for i, t in enumerate(self.triples):
            if not (0 <= t.head < len(entities) and 0 <= t.tail < len(entities)):
                raise ValueError(f"triple {i} has an uninterned entity handle")
            if not 0 <= t.relation < len(relations):
                raise ValueError(f"triple {i} has an uninterned relation handle")

        self.index_by_head: dict[int, list[int]] = {}
        self.index_by_head_relation: dict[tuple[int, int], list[int]] = {}
        for i, t in enumerate(self.triples):
            self.index_by_head.setdefault(t.head, []).append(i)
            self.index_by_head_relation.setdefault((t.head, t.relation), []).append(i)

        self._triple_array: np.ndarray | None = None

    # -- basic accessors ---------------------------------------------------

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_triples(self) -> int:
        return len(self.triples)

    def entity_meta(self, entity: int) -> EntityMeta:
        return self.meta.get(entity, _EMPTY_META)

    def triple_array(self) -> np.ndarray:
        """Triples as an (n, 3) int64 array, cached."""
        if self._triple_array is None:
            self._triple_array = np.array(self.triples, dtype=np.int64).reshape(-1, 3)
        return self._triple_array

    # -- property vectors ----------------------------------------------------

    def property_vector(self, entity: int, triple_ids: Iterable[int] | None = None) -> np.ndarray:
        """Binary relevance vector over relations for one head entity.

        Position k is 1 iff the entity heads some triple with relation k in
        the given triple subset (all triples when None).  Restricting the
        subset to the train split is what keeps stage-one gold vectors free
        of test leakage.
        """
        if not 0 <= entity < self.n_entities:
            raise KeyError(f"unknown entity handle {entity}")
        vec = np.zeros(self.n_relations, dtype=np.int8)
        if triple_ids is None:
            for i in self.index_by_head.get(entity, ()):
                vec[self.triples[i].relation] = 1
        else:
            allowed = triple_ids if isinstance(triple_ids, (set, frozenset)) else set(triple_ids)
            for i in self.index_by_head.get(entity, ()):
                if i in allowed:
                    vec[self.triples[i].relation] = 1
        return vec

    def property_matrix(self, triple_ids: Iterable[int] | None = None) -> np.ndarray:
        """Stacked property vectors, one row per entity, shape (|E|, |R|)."""
        mat = np.zeros((self.n_entities, self.n_relations), dtype=np.int8)
        ids = range(len(self.triples)) if triple_ids is None else triple_ids
        arr = self.triple_array()
        idx = np.fromiter(ids, dtype=np.int64)
        if idx.size:
            mat[arr[idx, 0], arr[idx, 1]] = 1
        return mat

    # -- snapshot ------------------------------------------------------------

    def save(self, path: str) -> None:
        """Write a gzip JSON snapshot (internal format)."""
        payload = {
            "format": "kgic-graph",
            "version": 1,
            "entities": self.entities.labels,
            "relations": self.relations.labels,
            "triples": [list(t) for t in self.triples],
            "meta": {
                str(eid): {"types": list(m.types), "description": m.description}
                for eid, m in sorted(self.meta.items())
            },
            "duplicates_dropped": self.duplicates_dropped,
        }
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: str) -> "KnowledgeGraph":
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != "kgic-graph":
            raise ValueError(f"{path} is not a graph snapshot")
        meta = {
            int(eid): EntityMeta(tuple(m["types"]), m["description"])
            for eid, m in payload["meta"].items()
        }
        return cls(
            Vocab(payload["entities"]),
            Vocab(payload["relations"]),
            [Triple(*t) for t in payload["triples"]],
            meta,
            payload.get("duplicates_dropped", 0),
        )


def build_graph(
    labeled_triples: Iterable[tuple[str, str, str]],
    metadata: Mapping[str, EntityMeta] | None = None,
) -> KnowledgeGraph:
    """Intern labeled triples into a KnowledgeGraph.

    Metadata entries for entities that never occur in a triple are ignored;
    the graph's entity set is defined by the triples alone.
    """
    entities = Vocab()
    relations = Vocab()
    triples: list[Triple] = []
    seen: set[Triple] = set()
    dropped = 0
    for h, r, t in labeled_triples:
        triple = Triple(entities.add(h), relations.add(r), entities.add(t))
        if triple in seen:
            dropped += 1
            continue
        seen.add(triple)
        triples.append(triple)
    meta: dict[int, EntityMeta] = {}
    for label, m in (metadata or {}).items():
        if label in entities:
            meta[entities.id(label)] = m
    return KnowledgeGraph(entities, relations, triples, meta, dropped)


@dataclass
class SplitSet:
    """Disjoint train/valid/test triple-id sets covering one graph."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    seed: int | None = None
    ratios: tuple[float, float, float] | None = None
    _fingerprint: int | None = field(default=None, repr=False)

    def __post_init__(self):
        self.train = np.sort(np.asarray(self.train, dtype=np.int64))
        self.valid = np.sort(np.asarray(self.valid, dtype=np.int64))
        self.test = np.sort(np.asarray(self.test, dtype=np.int64))

    def fingerprint(self) -> int:
        """FNV-1a 64-bit hash over the sorted train triple indices.

        Printed in every report; stages that must share a split compare
        this value to detect accidental re-splitting.
        """
        if self._fingerprint is None:
            self._fingerprint = fnv1a64(self.train.astype("<i8").tobytes())
        return self._fingerprint

    def fingerprint_hex(self) -> str:
        return f"{self.fingerprint():016x}"

    def assert_partition(self, n_triples: int) -> None:
        """Raise unless train/valid/test exactly partition range(n_triples)."""
        union = np.concatenate([self.train, self.valid, self.test])
        if len(np.unique(union)) != len(union):
            raise ValueError("split sets overlap")
        if len(union) != n_triples or (len(union) and (union.min() < 0 or union.max() >= n_triples)):
            raise ValueError("split does not cover the triple set")

    def save(self, path: str) -> None:
        payload = {
            "format": "kgic-split",
            "version": 1,
            "seed": self.seed,
            "ratios": list(self.ratios) if self.ratios else None,
            "fingerprint": self.fingerprint_hex(),
            "train": self.train.tolist(),
            "valid": self.valid.tolist(),
            "test": self.test.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: str) -> "SplitSet":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != "kgic-split":
            raise ValueError(f"{path} is not a split file")
        split = cls(
            np.array(payload["train"], dtype=np.int64),
            np.array(payload["valid"], dtype=np.int64),
            np.array(payload["test"], dtype=np.int64),
            seed=payload.get("seed"),
            ratios=tuple(payload["ratios"]) if payload.get("ratios") else None,
        )
        stored = payload.get("fingerprint")
        if stored is not None and stored != split.fingerprint_hex():
            raise ValueError(f"{path}: stored fingerprint does not match content")
        return split
