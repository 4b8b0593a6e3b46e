import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retrocap.errors import ValidationError
from retrocap.store import EmbeddingStore, cosine_similarity, knn_retrieve

from oracles import brute_force_knn


def make_store(vectors, image_ids=None, ids=None):
    n = vectors.shape[0]
    ids = ids if ids is not None else list(range(n))
    image_ids = image_ids if image_ids is not None else list(range(n))
    return EmbeddingStore(vectors.astype(np.float32), ids, image_ids)


def test_cosine_self_similarity(rng):
    v = rng.normal(size=16)
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-6)
    assert cosine_similarity(v, -v) == pytest.approx(-1.0, abs=1e-6)


def test_cosine_analytic_case():
    assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(0.70710678, abs=1e-6)


def test_cosine_errors():
    with pytest.raises(ValueError, match="mismatch"):
        cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])
    with pytest.raises(ValueError, match="zero"):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_store_rejects_nan_with_row_index(rng):
    vectors = rng.normal(size=(4, 3)).astype(np.float32)
    vectors[2, 1] = np.nan
    with pytest.raises(ValidationError) as exc:
        make_store(vectors)
    assert exc.value.row == 2


def test_store_rejects_zero_row(rng):
    vectors = rng.normal(size=(4, 3)).astype(np.float32)
    vectors[1] = 0.0
    with pytest.raises(ValidationError) as exc:
        make_store(vectors)
    assert exc.value.row == 1


def test_store_rejects_duplicate_ids(rng):
    with pytest.raises(ValidationError, match="unique"):
        make_store(rng.normal(size=(2, 3)).astype(np.float32), ids=[7, 7])


def test_exact_match_ranks_first():
    vectors = np.eye(3, dtype=np.float32)
    store = make_store(vectors, ids=[0, 1, 2])
    hits = knn_retrieve(vectors[2], store, k=1)
    assert hits[0][0] == 2
    assert hits[0][1] == pytest.approx(1.0, abs=1e-6)


def assert_same_ranking(got, want):
    """Identical ids in identical order; scores equal to addition-order noise."""
    assert [rid for rid, _ in got] == [rid for rid, _ in want]
    np.testing.assert_allclose([s for _, s in got], [s for _, s in want], rtol=1e-12)


def test_matches_brute_force_oracle(rng):
    vectors = rng.normal(size=(1000, 16)).astype(np.float32)
    image_ids = [int(i) % 37 for i in range(1000)]
    store = make_store(vectors, image_ids=image_ids)
    query = rng.normal(size=16)
    got = knn_retrieve(query, store, k=25, exclude_image_id=5)
    want = brute_force_knn(vectors, list(range(1000)), image_ids, query, 25, 5)
    assert_same_ranking(got, want)


def test_exclusion_soundness(rng):
    vectors = rng.normal(size=(50, 8)).astype(np.float32)
    image_ids = [i % 5 for i in range(50)]
    store = make_store(vectors, image_ids=image_ids)
    hits = knn_retrieve(rng.normal(size=8), store, k=50, exclude_image_id=3)
    excluded_ids = {i for i in range(50) if image_ids[i] == 3}
    assert not excluded_ids & {rid for rid, _ in hits}


def test_ties_break_by_ascending_id(rng):
    v = rng.normal(size=4).astype(np.float32)
    vectors = np.stack([v, v * 2.0, v * 0.5])  # same direction: identical cosine
    store = make_store(vectors, ids=[30, 10, 20])
    hits = knn_retrieve(v, store, k=3)
    assert [rid for rid, _ in hits] == [10, 20, 30]


def test_parallel_equals_sequential(rng):
    vectors = rng.normal(size=(500, 12)).astype(np.float32)
    image_ids = [i % 11 for i in range(500)]
    store = make_store(vectors, image_ids=image_ids)
    query = rng.normal(size=12)
    seq = knn_retrieve(query, store, k=20, exclude_image_id=2, workers=1)
    for workers in (2, 3, 7):
        par = knn_retrieve(query, store, k=20, exclude_image_id=2, workers=workers)
        assert par == seq


def test_empty_after_exclusion_is_empty_result(rng):
    vectors = rng.normal(size=(4, 3)).astype(np.float32)
    store = make_store(vectors, image_ids=[9, 9, 9, 9])
    assert knn_retrieve(rng.normal(size=3), store, k=2, exclude_image_id=9) == []


def test_score_bounds(rng):
    vectors = rng.normal(size=(200, 6)).astype(np.float32)
    store = make_store(vectors)
    hits = knn_retrieve(rng.normal(size=6), store, k=200)
    assert all(-1.0 - 1e-6 <= s <= 1.0 + 1e-6 for _, s in hits)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=40), st.integers(min_value=0, max_value=99))
def test_knn_property_matches_oracle(k, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    vectors = rng.normal(size=(n, 5)).astype(np.float32)
    image_ids = [int(x) for x in rng.integers(0, 4, size=n)]
    store = make_store(vectors, image_ids=image_ids)
    query = rng.normal(size=5)
    exclude = int(rng.integers(0, 4))
    got = knn_retrieve(query, store, k=k, exclude_image_id=exclude)
    want = brute_force_knn(vectors, list(range(n)), image_ids, query, k, exclude)
    assert_same_ranking(got, want)


def test_count_mismatch_between_ids_and_vectors(rng):
    with pytest.raises(ValidationError, match="count"):
        EmbeddingStore(rng.normal(size=(3, 2)).astype(np.float32), [1, 2], [1, 2])
