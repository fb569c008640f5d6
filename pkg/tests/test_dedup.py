from __future__ import annotations

import random

import numpy as np
import pytest

from mops.dedup import (
    CachedEmbedder,
    DedupPool,
    EmbeddingError,
    StubEmbedder,
    cosine_similarity,
)


class TableEmbedder:
    """Maps texts to fixed vectors; unknown text is an error."""

    name = "table"

    def __init__(self, table: dict[str, list[float]]):
        self.table = table
        self.calls = 0

    def embed(self, texts):
        self.calls += 1
        try:
            return np.asarray([self.table[t] for t in texts], dtype=np.float64)
        except KeyError as exc:
            raise EmbeddingError(f"no vector for {exc}") from None


# -- cosine ---------------------------------------------------------------------


def test_cosine_orthogonal_is_zero():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_cosine_is_scale_invariant():
    assert cosine_similarity(np.array([1.0, 1.0]), np.array([2.0, 2.0])) == pytest.approx(1.0)


def test_cosine_opposite_is_minus_one():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == pytest.approx(-1.0)


def test_cosine_rejects_zero_vector():
    with pytest.raises(ValueError):
        cosine_similarity(np.zeros(3), np.ones(3))


def test_cosine_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        cosine_similarity(np.ones(3), np.ones(4))


def test_cosine_symmetric_and_self_similar():
    rng = np.random.RandomState(0)
    for _ in range(20):
        a, b = rng.standard_normal(8), rng.standard_normal(8)
        assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a))
        assert cosine_similarity(a, a) == pytest.approx(1.0)


# -- providers -------------------------------------------------------------------


def test_stub_embedder_is_deterministic_per_text():
    stub = StubEmbedder(dim=16)
    vecs = stub.embed(["a", "a"])
    assert np.array_equal(vecs[0], vecs[1])
    again = stub.embed(["a"])
    assert np.array_equal(vecs[0], again[0])


def test_stub_embedder_preserves_batch_order():
    stub = StubEmbedder(dim=8)
    texts = [f"premise {i}" for i in range(1000)]
    vecs = stub.embed(texts)
    assert vecs.shape == (1000, 8)
    for i in (0, 17, 999):
        assert np.array_equal(vecs[i], stub.embed([texts[i]])[0])


def test_table_embedder_returns_table_values():
    table = TableEmbedder({"x": [1.0, 0.0], "y": [0.0, 1.0]})
    vecs = table.embed(["y", "x"])
    assert vecs.tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_embed_rejects_empty_batch_and_empty_text():
    with pytest.raises(EmbeddingError):
        StubEmbedder().embed([])
    with pytest.raises(EmbeddingError):
        StubEmbedder().embed([""])


def test_cached_embedder_hits_cache(tmp_path):
    inner = TableEmbedder({"a": [1.0, 0.0], "b": [0.0, 1.0]})
    cache_path = tmp_path / "cache.jsonl"
    cached = CachedEmbedder(inner, cache_path)
    first = cached.embed(["a", "b"])
    assert inner.calls == 1
    second = cached.embed(["a", "b"])
    assert inner.calls == 1  # served from memory
    assert np.array_equal(first, second)

    # a fresh instance reads the persisted file; provider is never consulted
    raising = TableEmbedder({})
    reloaded = CachedEmbedder(raising, cache_path)
    third = reloaded.embed(["b", "a"])
    assert raising.calls == 0
    assert np.array_equal(third[0], first[1])
    assert np.array_equal(third[1], first[0])


# -- dedup pool ---------------------------------------------------------------------


def test_exact_duplicate_rejected_at_default_epsilon():
    pool = DedupPool(StubEmbedder(dim=16))
    assert pool.epsilon == 0.85
    assert pool.insert("the same premise").accepted
    result = pool.insert("the same premise")
    assert not result.accepted
    assert result.similarity == pytest.approx(1.0)
    assert result.nearest == "the same premise"


def test_orthogonal_vectors_accepted():
    table = TableEmbedder({"x": [1.0, 0.0], "y": [0.0, 1.0]})
    pool = DedupPool(table, epsilon=0.85)
    assert pool.insert("x").accepted
    assert pool.insert("y").accepted
    assert pool.accepted_texts == ["x", "y"]


def test_near_duplicate_above_epsilon_rejected():
    table = TableEmbedder({"x": [1.0, 0.0], "near": [0.97, 0.1]})
    pool = DedupPool(table, epsilon=0.85)
    pool.insert("x")
    result = pool.insert("near")
    assert not result.accepted
    assert result.nearest == "x"
    assert result.similarity >= 0.85


def test_pool_invariant_after_random_insertions():
    # property: any insertion sequence leaves all accepted pairs below epsilon
    rng = random.Random(0)
    for trial in range(30):
        epsilon = rng.choice([0.5, 0.7, 0.85, 0.95])
        stub = StubEmbedder(dim=4)  # low dim makes collisions plausible
        pool = DedupPool(stub, epsilon=epsilon)
        texts = [f"t{trial}-{rng.randrange(40)}" for _ in range(60)]
        for text in texts:
            pool.insert(text)
        kept = pool.accepted_texts
        vecs = stub.embed(kept)
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                sim = cosine_similarity(vecs[i], vecs[j])
                assert sim < epsilon, (trial, kept[i], kept[j], sim)


def test_first_come_first_kept_replay_is_stable():
    rng = random.Random(1)
    texts = [f"premise {rng.randrange(25)}" for _ in range(80)]
    kept_runs = []
    for _ in range(2):
        pool = DedupPool(StubEmbedder(dim=4), epsilon=0.6)
        for text in texts:
            pool.insert(text)
        kept_runs.append(pool.accepted_texts)
    assert kept_runs[0] == kept_runs[1]


def test_pool_adopt_seeds_members_unchecked():
    table = TableEmbedder({"a": [1.0, 0.0], "a2": [0.99, 0.01], "b": [0.0, 1.0]})
    pool = DedupPool(table, epsilon=0.85)
    pool.adopt(["a", "a2"])  # near-duplicates, but pre-existing members stay
    assert pool.accepted_texts == ["a", "a2"]
    assert not pool.insert("a").accepted
    assert pool.insert("b").accepted


def test_pool_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        DedupPool(StubEmbedder(), epsilon=0.0)
    with pytest.raises(ValueError):
        DedupPool(StubEmbedder(), epsilon=1.5)
