from __future__ import annotations

import itertools

import numpy as np
import pytest

from qexkit.cluster import kmeans, medoid_indices, select_exemplars
from qexkit.corpus_io import ExemplarPair


def two_blobs(n_per=10, seed=0, spread=0.05):
    rng = np.random.default_rng(seed)
    a = rng.normal(loc=(0.0, 0.0), scale=spread, size=(n_per, 2))
    b = rng.normal(loc=(5.0, 5.0), scale=spread, size=(n_per, 2))
    return np.vstack([a, b])


def brute_force_two_clustering(points):
    """Optimal 2-partition by exhaustive enumeration (oracle)."""
    n = len(points)
    best, best_cost = None, np.inf
    for bits in itertools.product([0, 1], repeat=n):
        if len(set(bits)) < 2:
            continue
        cost = 0.0
        for label in (0, 1):
            members = points[[i for i in range(n) if bits[i] == label]]
            cost += float(((members - members.mean(axis=0)) ** 2).sum())
        if cost < best_cost:
            best, best_cost = bits, cost
    return best


class TestKmeans:
    def test_n_equals_k_singletons(self):
        points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
        model = kmeans(points, k=4, seed=0)
        assert sorted(model.assignments.tolist()) == [0, 1, 2, 3]
        assert model.inertia == pytest.approx(0.0, abs=1e-12)

    def test_two_blobs_match_bruteforce(self):
        points = two_blobs(n_per=5, seed=3)
        model = kmeans(points, k=2, seed=1)
        optimal = brute_force_two_clustering(points)
        got = model.assignments.tolist()
        # same partition up to label swap
        as_is = [int(x) for x in got]
        flipped = [1 - x for x in as_is]
        assert as_is == list(optimal) or flipped == list(optimal)

    def test_deterministic_per_seed(self):
        points = two_blobs(n_per=20, seed=9)
        a = kmeans(points, k=3, seed=7)
        b = kmeans(points, k=3, seed=7)
        assert np.array_equal(a.assignments, b.assignments)
        assert np.array_equal(a.centroids, b.centroids)

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="shrink k"):
            kmeans(np.zeros((2, 4)), k=3, seed=0)

    def test_inertia_non_increasing(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(60, 8))
        model = kmeans(points, k=5, seed=2)
        history = model.inertia_history
        assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_duplicate_points_still_fill_k_clusters(self):
        points = np.zeros((6, 3))
        model = kmeans(points, k=3, seed=0)
        assert set(model.assignments.tolist()) == {0, 1, 2}

    def test_restarts_keep_best(self):
        points = two_blobs(n_per=15, seed=5)
        single = kmeans(points, k=2, seed=0)
        multi = kmeans(points, k=2, seed=0, restarts=5)
        assert multi.inertia <= single.inertia + 1e-12


def _pool(n):
    return [ExemplarPair(f"query {i}", f"passage {i}") for i in range(n)]


class TestSelectExemplars:
    def test_pool_of_exactly_k(self):
        pool = _pool(4)
        emb = np.random.default_rng(0).normal(size=(4, 8))
        assert select_exemplars(pool, emb, k=4, seed=0) == pool

    def test_small_pool_returned_in_order(self):
        pool = _pool(3)
        emb = np.random.default_rng(0).normal(size=(3, 8))
        assert select_exemplars(pool, emb, k=5, seed=0) == pool

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            select_exemplars([], np.zeros((0, 4)), k=2, seed=0)

    def test_misaligned_embeddings_rejected(self):
        with pytest.raises(ValueError, match="align"):
            select_exemplars(_pool(3), np.zeros((2, 4)), k=2, seed=0)

    def test_identical_cluster_medoid_is_lowest_index(self):
        # two tight groups of identical points; medoid = first member
        points = np.array([[1.0, 0.0]] * 3 + [[0.0, 1.0]] * 3)
        pool = _pool(6)
        chosen = select_exemplars(pool, points, k=2, seed=0)
        assert set(chosen) == {pool[0], pool[3]}

    def test_medoids_match_bruteforce_argmin(self):
        rng = np.random.default_rng(12)
        points = rng.normal(size=(40, 6))
        model = kmeans(points, k=4, seed=3)
        got = medoid_indices(points, model)
        for cluster, idx in enumerate(got):
            members = np.flatnonzero(model.assignments == cluster)
            dists = [float(np.linalg.norm(points[m] - model.centroids[cluster])) for m in members]
            best = members[int(np.argmin(dists))]
            assert idx == best

    def test_medoids_are_pool_members_and_distinct(self):
        rng = np.random.default_rng(2)
        for trial in range(10):
            n = int(rng.integers(5, 60))
            pool = _pool(n)
            emb = rng.normal(size=(n, 16))
            chosen = select_exemplars(pool, emb, k=4, seed=trial)
            assert len(chosen) == min(4, n)
            assert len(set(id(c) for c in chosen)) == len(chosen)
            for pair in chosen:
                assert pair in pool

    def test_fixed_seed_reproducible(self):
        rng = np.random.default_rng(8)
        pool = _pool(30)
        emb = rng.normal(size=(30, 16))
        assert select_exemplars(pool, emb, 4, seed=13) == select_exemplars(pool, emb, 4, seed=13)

    def test_unit_norm_l2_equals_cosine_order(self):
        # on unit vectors, L2 distance and cosine similarity rank identically
        rng = np.random.default_rng(21)
        vecs = rng.normal(size=(20, 8))
        vecs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
        center = vecs[0]
        l2_order = np.argsort([np.linalg.norm(v - center) for v in vecs])
        cos_order = np.argsort([-(v @ center) for v in vecs])
        assert np.array_equal(l2_order, cos_order)
