import numpy as np
import pytest

from kgic.graph import EntityMeta, KnowledgeGraph, SplitSet, Triple, Vocab, build_graph, fnv1a64


class TestVocab:
    def test_interning_is_idempotent(self):
        v = Vocab()
        assert v.add("Q42") == v.add("Q42")

    def test_first_handle_is_zero(self):
        v = Vocab()
        assert v.add("first") == 0

    def test_handles_are_dense(self):
        v = Vocab()
        handles = {v.add(label) for label in ("x", "y", "z")}
        assert handles == {0, 1, 2}

    def test_bijection(self):
        v = Vocab(["a", "b", "c"])
        for h in range(len(v)):
            assert v.id(v.label(h)) == h

    def test_empty_label_rejected(self):
        with pytest.raises(ValueError):
            Vocab().add("")


class TestBuildGraph:
    def test_duplicates_dropped(self):
        g = build_graph([("a", "r", "b"), ("a", "r", "b"), ("a", "r", "c")])
        assert g.n_triples == 2
        assert g.duplicates_dropped == 1

    def test_tail_only_entities_get_handles(self):
        g = build_graph([("a", "r", "b")])
        assert "b" in g.entities
        assert g.entity_meta(g.entities.id("b")) == EntityMeta()

    def test_metadata_for_unknown_entities_ignored(self):
        g = build_graph([("a", "r", "b")], {"zzz": EntityMeta(("t",), "")})
        assert g.meta == {}

    def test_indexes_consistent(self, toy_graph):
        g = toy_graph
        for i, t in enumerate(g.triples):
            assert i in g.index_by_head[t.head]
            assert i in g.index_by_head_relation[(t.head, t.relation)]
        for head, ids in g.index_by_head.items():
            assert all(g.triples[i].head == head for i in ids)
        for (head, rel), ids in g.index_by_head_relation.items():
            assert all(g.triples[i].head == head and g.triples[i].relation == rel for i in ids)

    def test_invalid_handles_rejected(self):
        with pytest.raises(ValueError):
            KnowledgeGraph(Vocab(["a"]), Vocab(["r"]), [Triple(0, 0, 5)])


class TestPropertyVector:
    def test_direct_definition(self):
        g = build_graph([("A", "r1", "B"), ("A", "r2", "C"), ("X", "r3", "B")])
        vec = g.property_vector(g.entities.id("A"))
        assert vec.tolist() == [1, 1, 0]

    def test_no_outgoing_triples(self):
        g = build_graph([("A", "r1", "B")])
        assert g.property_vector(g.entities.id("B")).tolist() == [0]

    def test_subset_restriction(self):
        g = build_graph([("A", "r1", "B"), ("A", "r2", "C")])
        vec = g.property_vector(g.entities.id("A"), {0})
        assert vec.tolist() == [1, 0]

    def test_unknown_entity(self, toy_graph):
        with pytest.raises(KeyError):
            toy_graph.property_vector(999)

    def test_matrix_matches_per_entity_calls(self, toy_graph):
        g = toy_graph
        mat = g.property_matrix()
        for e in range(g.n_entities):
            assert np.array_equal(mat[e], g.property_vector(e))

    def test_empty_subset_gives_zero_matrix(self, toy_graph):
        assert not toy_graph.property_matrix([]).any()

    def test_row_sums_match_brute_force(self, rng):
        labels = [f"e{i}" for i in range(20)]
        triples = []
        for _ in range(80):
            h, t = rng.choice(20, size=2)
            r = rng.integers(5)
            triples.append((labels[h], f"r{r}", labels[t]))
        g = build_graph(triples)
        subset = set(rng.choice(g.n_triples, size=g.n_triples // 2, replace=False).tolist())
        mat = g.property_matrix(subset)
        for e in range(g.n_entities):
            relations = {g.triples[i].relation for i in subset if g.triples[i].head == e}
            assert mat[e].sum() == len(relations)


class TestSnapshot:
    def test_round_trip_exact(self, toy_graph, tmp_path):
        path = str(tmp_path / "graph.json.gz")
        toy_graph.save(path)
        loaded = KnowledgeGraph.load(path)
        assert loaded.entities == toy_graph.entities
        assert loaded.relations == toy_graph.relations
        assert loaded.triples == toy_graph.triples
        assert loaded.meta == toy_graph.meta
        assert loaded.duplicates_dropped == toy_graph.duplicates_dropped

    def test_wrong_format_rejected(self, tmp_path):
        import gzip
        import json

        path = tmp_path / "bogus.json.gz"
        with gzip.open(path, "wt") as fh:
            json.dump({"format": "something-else"}, fh)
        with pytest.raises(ValueError):
            KnowledgeGraph.load(str(path))


class TestSplitSet:
    def test_partition_check(self):
        split = SplitSet(np.array([0, 1]), np.array([2]), np.array([3]))
        split.assert_partition(4)
        with pytest.raises(ValueError):
            split.assert_partition(5)

    def test_overlap_detected(self):
        split = SplitSet(np.array([0, 1]), np.array([1]), np.array([2]))
        with pytest.raises(ValueError):
            split.assert_partition(3)

    def test_fingerprint_depends_only_on_train(self):
        a = SplitSet(np.array([3, 1]), np.array([0]), np.array([2]))
        b = SplitSet(np.array([1, 3]), np.array([2]), np.array([0]))
        assert a.fingerprint() == b.fingerprint()
        c = SplitSet(np.array([1, 2]), np.array([0]), np.array([3]))
        assert a.fingerprint() != c.fingerprint()

    def test_fingerprint_is_fnv1a_of_sorted_train(self):
        split = SplitSet(np.array([5, 2]), np.array([]), np.array([]))
        expected = fnv1a64(np.array([2, 5], dtype="<i8").tobytes())
        assert split.fingerprint() == expected

    def test_save_load_round_trip(self, tmp_path):
        split = SplitSet(np.array([0, 2]), np.array([1]), np.array([3]), seed=7, ratios=(0.5, 0.25, 0.25))
        path = str(tmp_path / "split.json")
        split.save(path)
        loaded = SplitSet.load(path)
        assert np.array_equal(loaded.train, split.train)
        assert np.array_equal(loaded.valid, split.valid)
        assert np.array_equal(loaded.test, split.test)
        assert loaded.seed == 7
        assert loaded.fingerprint_hex() == split.fingerprint_hex()
