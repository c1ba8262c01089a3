"""Dataset parsing and seeded stratified splitting.

Input formats (TSV, UTF-8):
  triples:   head<TAB>relation<TAB>tail
  metadata:  entity<TAB>type1,type2,...<TAB>description
             (type and description fields may be empty; later lines for the
             same entity overwrite earlier ones)

Splitting is stratified per triple on the head's primary type (first listed
type); untyped heads stratify under the reserved class "⊥".
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

import numpy as np

from kgic.graph import EntityMeta, KnowledgeGraph, SplitSet, build_graph

__all__ = [
    "ParseError",
    "DatasetConfig",
    "parse_triples",
    "parse_metadata",
    "load_dataset",
    "stratified_split",
    "leakage_check",
    "UNTYPED_CLASS",
]

UNTYPED_CLASS = "⊥"  # ⊥, strata bucket for heads without a type


class ParseError(ValueError):
    """Malformed dataset line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class DatasetConfig:
    triples_paths: tuple[str, ...]
    metadata_path: str | None = None
    split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        if len(self.split_ratios) != 3 or any(r <= 0 for r in self.split_ratios):
            raise ValueError("split ratios must be three positive fractions")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")


def _lines(stream: IO[str] | Iterable[str]) -> Iterable[tuple[int, str]]:
    for i, raw in enumerate(stream, start=1):
        yield i, raw.rstrip("\n").rstrip("\r")


def parse_triples(stream: IO[str] | Iterable[str]) -> list[tuple[str, str, str]]:
    """Parse head<TAB>relation<TAB>tail lines, preserving order.

    Labels keep their interior whitespace; only surrounding whitespace is
    stripped.  Empty lines are skipped.
    """
    out: list[tuple[str, str, str]] = []
    for line_no, line in _lines(stream):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        h, r, t = (f.strip() for f in fields)
        if not h or not r or not t:
            raise ParseError(line_no, "empty field in triple")
        out.append((h, r, t))
    return out


def parse_metadata(stream: IO[str] | Iterable[str]) -> dict[str, EntityMeta]:
    """Parse entity<TAB>types<TAB>description lines into EntityMeta."""
    out: dict[str, EntityMeta] = {}
    for line_no, line in _lines(stream):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        entity, types_field, description = fields[0].strip(), fields[1], fields[2]
        if not entity:
            raise ParseError(line_no, "empty entity label")
        types = tuple(t.strip() for t in types_field.split(",") if t.strip())
        out[entity] = EntityMeta(types, description.strip())
    return out


def load_dataset(config: DatasetConfig) -> KnowledgeGraph:
    """Parse triple and metadata files per the config and build a graph."""
    triples: list[tuple[str, str, str]] = []
    for path in config.triples_paths:
        with open(path, encoding="utf-8") as fh:
            triples.extend(parse_triples(fh))
    metadata: Mapping[str, EntityMeta] = {}
    if config.metadata_path:
        with open(config.metadata_path, encoding="utf-8") as fh:
            metadata = parse_metadata(fh)
    return build_graph(triples, metadata)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(
    graph: KnowledgeGraph,
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
) -> SplitSet:
    """Seeded stratified split of the graph's triples by head type.

    Triples are grouped by their head's primary type, each group is
    shuffled with the seed, and valid/test sizes are rounded to nearest
    (half up) with the remainder going to train.  Groups with fewer than 3
    triples go wholly to train.  Deterministic: same graph, ratios and seed
    always produce the identical SplitSet.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    _, valid_ratio, test_ratio = ratios

    groups: dict[str, list[int]] = {}
    for i, t in enumerate(graph.triples):
        key = graph.entity_meta(t.head).primary_type or UNTYPED_CLASS
        groups.setdefault(key, []).append(i)

    rng = random.Random(seed)
    train: list[int] = []
    valid: list[int] = []
    test: list[int] = []
    for key in sorted(groups):
        ids = groups[key]
        rng.shuffle(ids)
        n = len(ids)
        if n < 3:
            train.extend(ids)
            continue
        n_valid = _round_half_up(n * valid_ratio)
        n_test = _round_half_up(n * test_ratio)
        if n_valid + n_test > n:  # tiny groups with aggressive ratios
            n_test = max(0, n - n_valid)
        test.extend(ids[:n_test])
        valid.extend(ids[n_test : n_test + n_valid])
        train.extend(ids[n_test + n_valid :])

    split = SplitSet(
        np.array(train, dtype=np.int64),
        np.array(valid, dtype=np.int64),
        np.array(test, dtype=np.int64),
        seed=seed,
        ratios=tuple(ratios),
    )
    split.assert_partition(graph.n_triples)
    return split


def leakage_check(
    split: SplitSet,
    n_triples: int,
    stage_fingerprints: Mapping[str, int | str] | None = None,
) -> list[str]:
    """Audit a split for leakage. Returns violations; empty list means pass.

    Checks (a) that train/valid/test are disjoint and cover all triples and
    (b) that every stage claiming to have trained on this split reports the
    same train-set fingerprint, i.e. stage-one gold vectors and stage-two
    training triples derive from the identical train set.
    """
    violations: list[str] = []
    names = ("train", "valid", "test")
    parts = (split.train, split.valid, split.test)
    for a in range(3):
        for b in range(a + 1, 3):
            overlap = np.intersect1d(parts[a], parts[b])
            for idx in overlap:
                violations.append(f"triple {int(idx)} in both {names[a]} and {names[b]}")
    union = np.unique(np.concatenate(parts))
    missing = np.setdiff1d(np.arange(n_triples, dtype=np.int64), union)
    for idx in missing:
        violations.append(f"triple {int(idx)} not assigned to any split")
    out_of_range = union[(union < 0) | (union >= n_triples)]
    for idx in out_of_range:
        violations.append(f"triple index {int(idx)} out of range")

    if stage_fingerprints:
        expected = split.fingerprint()
        for stage, fp in sorted(stage_fingerprints.items()):
            fp_int = int(fp, 16) if isinstance(fp, str) else int(fp)
            if fp_int != expected:
                violations.append(
                    f"split fingerprint mismatch: stage '{stage}' trained on "
                    f"{fp_int:016x}, split is {expected:016x}"
                )
    return violations
