import math

import numpy as np
import pytest

from vrdkit.embeddings import (
    EmbeddingFormatError,
    EmbeddingStore,
    cosine_similarity,
    load_embeddings,
)


def lines_for(entries, fmt="{:.6f}"):
    return [
        token + " " + " ".join(fmt.format(v) for v in vec)
        for token, vec in entries
    ]


class TestLoadEmbeddings:
    def test_empty_stream(self):
        store = load_embeddings([], 300)
        assert len(store) == 0

    def test_storage_round_trip(self):
        rng = np.random.default_rng(0)
        vec = rng.normal(size=300)
        store = load_embeddings(lines_for([("horse", vec)], "{:.10f}"), 300)
        np.testing.assert_allclose(store.lookup("horse"), vec, atol=1e-9)

    def test_wrong_component_count_names_line(self):
        good = "a " + " ".join(["0.1"] * 4)
        bad = "b " + " ".join(["0.1"] * 3)
        with pytest.raises(EmbeddingFormatError, match="line 2"):
            load_embeddings([good, bad], 4)

    def test_non_numeric_value_names_line(self):
        with pytest.raises(EmbeddingFormatError, match="line 1"):
            load_embeddings(["a 0.1 oops 0.3"], 3)

    def test_duplicate_token_last_wins(self):
        store = load_embeddings(["tok 1 2", "tok 3 4"], 2)
        np.testing.assert_array_equal(store.lookup("tok"), [3, 4])
        assert store.duplicate_count == 1

    def test_word2vec_count_header_skipped(self):
        store = load_embeddings(["2 3", "a 1 2 3", "b 4 5 6"], 3)
        assert len(store) == 2

    def test_vectors_are_read_only(self):
        store = load_embeddings(["a 1 2"], 2)
        with pytest.raises(ValueError):
            store.lookup("a")[0] = 9.0


class TestLookup:
    def test_single_token(self):
        store = EmbeddingStore(2, {"person": [1.0, 0.0]})
        np.testing.assert_array_equal(store.lookup("person"), [1.0, 0.0])

    def test_multi_word_mean(self):
        store = EmbeddingStore(2, {"traffic": [1.0, 0.0], "light": [0.0, 1.0]})
        np.testing.assert_allclose(store.lookup("traffic light"), [0.5, 0.5])

    def test_missing_token_listed(self):
        store = EmbeddingStore(2, {"traffic": [1.0, 0.0]})
        with pytest.raises(KeyError, match="light"):
            store.lookup("traffic light")
        with pytest.raises(KeyError, match="sphinx"):
            store.lookup("sphinx")


class TestPairVector:
    def test_concatenation_order(self):
        store = EmbeddingStore(3, {"s": [1, 2, 3], "o": [4, 5, 6]})
        pair = store.pair_vector("s", "o")
        assert pair.shape == (6,)
        np.testing.assert_array_equal(pair[:3], store.lookup("s"))
        np.testing.assert_array_equal(pair[3:], store.lookup("o"))

    def test_length_is_twice_dimension(self):
        rng = np.random.default_rng(1)
        store = EmbeddingStore(
            300, {"person": rng.normal(size=300), "horse": rng.normal(size=300)})
        assert store.pair_vector("person", "horse").shape == (600,)

    def test_order_sensitivity(self):
        store = EmbeddingStore(2, {"s": [1, 0], "o": [0, 1]})
        assert not np.array_equal(store.pair_vector("s", "o"),
                                  store.pair_vector("o", "s"))


class TestCosineSimilarity:
    def test_bounds_and_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            u = rng.normal(size=8)
            v = rng.normal(size=8)
            s = cosine_similarity(u, v)
            assert -1 - 1e-12 <= s <= 1 + 1e-12
            assert s == cosine_similarity(v, u)

    def test_zero_vector_convention(self):
        assert cosine_similarity(np.zeros(3), np.ones(3)) == 0.0

    def test_identical_vectors(self):
        v = np.array([0.3, -0.7, 2.0])
        assert cosine_similarity(v, v) == pytest.approx(1.0)


class TestNearestNeighbors:
    def place(self):
        # hand-placed points in the plane; angles from the x axis order
        # their cosine similarity to the query
        return EmbeddingStore(2, {
            "query": [1.0, 0.0],
            "close": [math.cos(0.1), math.sin(0.1)],
            "near": [math.cos(0.5), math.sin(0.5)],
            "far": [math.cos(1.2), math.sin(1.2)],
            "opposite": [-1.0, 0.0],
        })

    def brute_force(self, store, name, k):
        query = store.lookup(name)
        scored = sorted(
            ((t, cosine_similarity(query, store.lookup(t)))
             for t in store.tokens() if t != name),
            key=lambda item: (-item[1], item[0]))
        return scored[:k]

    def test_single_other_entry(self):
        store = EmbeddingStore(2, {"a": [1, 0], "b": [-1, 0]})
        assert store.nearest_neighbors("a", 3) == [("b", -1.0)]

    def test_identical_vector_scores_one(self):
        store = EmbeddingStore(2, {"a": [2, 0], "b": [4, 0]})
        name, sim = store.nearest_neighbors("a", 1)[0]
        assert name == "b"
        assert sim == pytest.approx(1.0)

    def test_ranking_matches_brute_force(self):
        store = self.place()
        for k in (1, 2, 4, 10):
            assert store.nearest_neighbors("query", k) == \
                self.brute_force(store, "query", k)
        assert [n for n, _ in store.nearest_neighbors("query", 4)] == \
            ["close", "near", "far", "opposite"]

    def test_non_positive_k(self):
        store = self.place()
        assert store.nearest_neighbors("query", 0) == []
        assert store.nearest_neighbors("query", -2) == []

    def test_large_k_returns_all_others(self):
        store = self.place()
        assert len(store.nearest_neighbors("query", 99)) == len(store) - 1

    def test_tie_breaks_by_name(self):
        store = EmbeddingStore(2, {"q": [1, 0], "bb": [2, 0], "aa": [3, 0]})
        assert [n for n, _ in store.nearest_neighbors("q", 2)] == ["aa", "bb"]

    def test_multi_word_query_resolves(self):
        store = EmbeddingStore(2, {
            "traffic": [1, 0], "light": [0, 1], "lamp": [0.5, 0.5]})
        names = [n for n, _ in store.nearest_neighbors("traffic light", 1)]
        assert names == ["lamp"]
