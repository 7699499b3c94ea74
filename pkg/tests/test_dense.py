from __future__ import annotations

import numpy as np
import pytest

from qexkit.dense import (
    DenseIndex,
    build_dense_index,
    dense_retrieve,
    load_dense_index,
    normalize,
    save_dense_index,
)


def _random_index(n=50, d=16, seed=5) -> DenseIndex:
    rng = np.random.default_rng(seed)
    return build_dense_index([f"d{i:03d}" for i in range(n)], rng.normal(size=(n, d)))


def test_rows_must_be_unit_norm():
    with pytest.raises(ValueError, match="unit"):
        DenseIndex(doc_ids=["a"], matrix=np.array([[3.0, 4.0]]))


def test_self_similarity_ranks_first():
    index = _random_index()
    rows = dense_retrieve(index, index.matrix[7], 3)
    assert rows[0].doc_id == "d007"
    assert rows[0].score == pytest.approx(1.0, abs=1e-6)


def test_orthogonal_query_all_zero_doc_id_order():
    matrix = np.eye(4)[:3]  # 3 docs in 4-d, all orthogonal to e3
    index = build_dense_index(["b", "a", "c"], matrix)
    rows = dense_retrieve(index, np.array([0.0, 0.0, 0.0, 1.0]), 3)
    assert [r.doc_id for r in rows] == ["a", "b", "c"]
    assert all(r.score == pytest.approx(0.0, abs=1e-12) for r in rows)


def test_matches_brute_force_cosine():
    index = _random_index(n=50, d=16)
    rng = np.random.default_rng(99)
    for _ in range(5):
        q = normalize(rng.normal(size=16))
        expected = sorted(
            ((float(np.dot(index.matrix[i], q)), index.doc_ids[i]) for i in range(50)),
            key=lambda x: (-x[0], x[1]),
        )
        got = dense_retrieve(index, q, 50)
        assert [r.doc_id for r in got] == [doc for _, doc in expected]


def test_scores_bounded_for_unit_vectors():
    index = _random_index()
    q = normalize(np.random.default_rng(1).normal(size=16))
    for row in dense_retrieve(index, q, 50):
        assert -1.0 - 1e-6 <= row.score <= 1.0 + 1e-6


def test_dimension_mismatch():
    index = _random_index(d=16)
    with pytest.raises(ValueError, match="dim"):
        dense_retrieve(index, np.zeros(8), 5)


def test_normalize_zero_vector_passthrough():
    assert np.array_equal(normalize(np.zeros(4)), np.zeros(4))


def test_roundtrip(tmp_path):
    index = _random_index()
    save_dense_index(index, tmp_path / "dense")
    back = load_dense_index(tmp_path / "dense")
    assert back.doc_ids == index.doc_ids
    assert np.array_equal(back.matrix, index.matrix)
