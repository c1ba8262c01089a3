import io

import numpy as np
import pytest

from kgic.graph import EntityMeta, build_graph
from kgic.ingest import (
    UNTYPED_CLASS,
    DatasetConfig,
    ParseError,
    leakage_check,
    load_dataset,
    parse_metadata,
    parse_triples,
    stratified_split,
)


class TestParseTriples:
    def test_single_line(self):
        assert parse_triples(io.StringIO("A\tr1\tB\n")) == [("A", "r1", "B")]

    def test_order_preserved(self):
        text = "A\tr\tB\nC\tr\tD\nA\tr\tE\n"
        assert parse_triples(io.StringIO(text)) == [("A", "r", "B"), ("C", "r", "D"), ("A", "r", "E")]

    def test_two_fields_is_error_with_line_number(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_triples(io.StringIO("A\tr1\n"))

    def test_four_fields_is_error(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_triples(io.StringIO("A\tr\tB\nA\tr\tB\tC\n"))

    def test_interior_whitespace_kept(self):
        [(h, r, t)] = parse_triples(io.StringIO("  New York \thas part\tStaten Island\n"))
        assert (h, r, t) == ("New York", "has part", "Staten Island")

    def test_blank_lines_skipped(self):
        assert parse_triples(io.StringIO("\nA\tr\tB\n\n")) == [("A", "r", "B")]

    def test_large_file_count(self, tmp_path):
        # same cardinality as the biggest benchmark file we target
        n = 310_116
        path = tmp_path / "triples.tsv"
        with open(path, "w") as fh:
            for i in range(n):
                fh.write(f"e{i % 14541}\tr{i % 237}\te{(i * 7 + 1) % 14541}\n")
        with open(path) as fh:
            assert len(parse_triples(fh)) == n


class TestParseMetadata:
    def test_types_and_description(self):
        meta = parse_metadata(io.StringIO("Q1\thuman,artist\tGerman painter\n"))
        assert meta["Q1"] == EntityMeta(("human", "artist"), "German painter")

    def test_empty_fields(self):
        meta = parse_metadata(io.StringIO("Q2\t\t\n"))
        assert meta["Q2"] == EntityMeta((), "")

    def test_later_lines_overwrite(self):
        meta = parse_metadata(io.StringIO("Q1\ta\tfirst\nQ1\tb\tsecond\n"))
        assert meta["Q1"] == EntityMeta(("b",), "second")

    def test_occupation_style_single_type(self):
        meta = parse_metadata(io.StringIO("Q5\tpolitician\tGerman chancellor\n"))
        assert meta["Q5"].types == ("politician",)
        assert meta["Q5"].primary_type == "politician"

    def test_malformed_line(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_metadata(io.StringIO("Q1\tonly-two-fields\n"))


class TestLoadDataset:
    def test_end_to_end(self, tmp_path):
        triples = tmp_path / "t.tsv"
        triples.write_text("a\tr\tb\nb\tr\tc\n")
        meta = tmp_path / "m.tsv"
        meta.write_text("a\ttype1\tsome text\n")
        graph = load_dataset(DatasetConfig((str(triples),), str(meta)))
        assert graph.n_triples == 2
        assert graph.entity_meta(graph.entities.id("a")).types == ("type1",)

    def test_bad_ratios_rejected(self):
        with pytest.raises(ValueError):
            DatasetConfig(("x",), split_ratios=(0.5, 0.2, 0.2))


def _typed_graph(counts: dict[str, int], relations=("r",)):
    """One triple per head entity, heads typed per the given strata sizes."""
    triples = []
    metadata = {}
    i = 0
    for type_label, n in counts.items():
        for _ in range(n):
            head = f"{type_label}_{i}"
            triples.append((head, relations[i % len(relations)], f"tail_{i}"))
            metadata[head] = EntityMeta((type_label,), "")
            i += 1
    return build_graph(triples, metadata)


class TestStratifiedSplit:
    def test_hand_counted_group_cuts(self):
        # X: 60 triples, Y: 40 triples, ratios (0.7, 0.15, 0.15)
        graph = _typed_graph({"X": 60, "Y": 40})
        split = stratified_split(graph, (0.7, 0.15, 0.15), seed=3)
        x_ids = {i for i, t in enumerate(graph.triples)
                 if graph.entity_meta(t.head).primary_type == "X"}
        # per-group rounding: valid = round(60*0.15) = 9, test = 9, train = 42
        assert len(x_ids & set(split.train.tolist())) == 42
        assert len(x_ids & set(split.valid.tolist())) == 9
        assert len(x_ids & set(split.test.tolist())) == 9
        y_ids = set(range(graph.n_triples)) - x_ids
        assert len(y_ids & set(split.train.tolist())) == 28
        assert len(y_ids & set(split.valid.tolist())) == 6
        assert len(y_ids & set(split.test.tolist())) == 6

    def test_single_triple_lands_in_train(self):
        graph = _typed_graph({"X": 1})
        split = stratified_split(graph, (0.7, 0.15, 0.15), seed=0)
        assert len(split.train) == 1
        assert len(split.valid) == len(split.test) == 0

    def test_small_groups_go_to_train(self):
        graph = _typed_graph({"X": 2, "Y": 2})
        split = stratified_split(graph, (0.34, 0.33, 0.33), seed=0)
        assert len(split.train) == 4

    def test_deterministic(self):
        graph = _typed_graph({"X": 50, "Y": 30, "Z": 20})
        a = stratified_split(graph, (0.7, 0.15, 0.15), seed=11)
        b = stratified_split(graph, (0.7, 0.15, 0.15), seed=11)
        assert np.array_equal(a.train, b.train)
        assert np.array_equal(a.valid, b.valid)
        assert np.array_equal(a.test, b.test)
        assert a.fingerprint() == b.fingerprint()

    def test_seed_changes_split(self):
        graph = _typed_graph({"X": 50, "Y": 30})
        a = stratified_split(graph, (0.7, 0.15, 0.15), seed=1)
        b = stratified_split(graph, (0.7, 0.15, 0.15), seed=2)
        assert not np.array_equal(a.train, b.train)

    def test_partition_exact(self):
        graph = _typed_graph({"X": 37, "Y": 11, "Z": 3})
        split = stratified_split(graph, (0.6, 0.2, 0.2), seed=5)
        split.assert_partition(graph.n_triples)

    def test_untyped_heads_use_reserved_class(self):
        triples = [(f"h{i}", "r", f"t{i}") for i in range(10)]
        graph = build_graph(triples)  # nobody has metadata
        split = stratified_split(graph, (0.7, 0.15, 0.15), seed=0)
        split.assert_partition(10)
        assert UNTYPED_CLASS == "⊥"

    def test_stratification_tolerance(self, rng):
        # every type with >= 50 triples stays within 2 percentage points
        counts = {"A": 200, "B": 120, "C": 57, "D": 9}
        graph = _typed_graph(counts)
        ratios = (0.7, 0.15, 0.15)
        split = stratified_split(graph, ratios, seed=9)
        type_of = {i: graph.entity_meta(t.head).primary_type for i, t in enumerate(graph.triples)}
        for type_label, total in counts.items():
            if total < 50:
                continue
            for part, ratio in zip((split.train, split.valid, split.test), ratios):
                share = sum(1 for i in part.tolist() if type_of[i] == type_label) / total
                assert abs(share - ratio) <= 0.02, (type_label, share, ratio)

    def test_bad_ratios(self, toy_graph):
        with pytest.raises(ValueError):
            stratified_split(toy_graph, (0.5, 0.2, 0.2), seed=0)


class TestLeakageCheck:
    def test_clean_split_passes(self):
        graph = _typed_graph({"X": 30})
        split = stratified_split(graph, (0.7, 0.15, 0.15), seed=0)
        assert leakage_check(split, graph.n_triples) == []

    def test_train_test_overlap_named(self):
        from kgic.graph import SplitSet

        split = SplitSet(np.array([0, 1, 2]), np.array([3]), np.array([2, 4]))
        violations = leakage_check(split, 5)
        assert any("triple 2" in v and "train" in v and "test" in v for v in violations)

    def test_unassigned_triple_reported(self):
        from kgic.graph import SplitSet

        split = SplitSet(np.array([0]), np.array([1]), np.array([2]))
        violations = leakage_check(split, 4)
        assert any("triple 3" in v for v in violations)

    def test_fingerprint_mismatch_detected(self):
        graph = _typed_graph({"X": 30})
        split_a = stratified_split(graph, (0.7, 0.15, 0.15), seed=1)
        split_b = stratified_split(graph, (0.7, 0.15, 0.15), seed=2)
        violations = leakage_check(
            split_a, graph.n_triples,
            {"stage-one": split_a.fingerprint(), "stage-two": split_b.fingerprint()},
        )
        assert len(violations) == 1
        assert "split fingerprint mismatch" in violations[0]
        assert "stage-two" in violations[0]

    def test_matching_fingerprints_pass(self):
        graph = _typed_graph({"X": 30})
        split = stratified_split(graph, (0.7, 0.15, 0.15), seed=1)
        fps = {"stage-one": split.fingerprint(), "stage-two": split.fingerprint_hex()}
        assert leakage_check(split, graph.n_triples, fps) == []
