"""K-means clustering and cluster-medoid exemplar selection.

Lloyd iterations with seeded k-means++ initialization. Medoids are
actual pool members (the point closest to each centroid), never
synthetic centroids, so selected exemplars are real demonstrations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus_io import ExemplarPair


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (k, d)
    assignments: np.ndarray  # (n,) cluster id per point
    k: int
    seed: int
    inertia: float
    inertia_history: list[float]


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining mass at distance 0: fall back to uniform choice
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return points[chosen].copy()


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ties go to the lowest cluster id (argmin behaviour)
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _fix_empty(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Re-seed each empty cluster with the point farthest from its centroid."""
    k = centroids.shape[0]
    labels = labels.copy()
    for cluster in range(k):
        if np.any(labels == cluster):
            continue
        dist = np.linalg.norm(points - centroids[labels], axis=1)
        counts = np.bincount(labels, minlength=k)
        eligible = counts[labels] > 1  # never empty another cluster
        if not np.any(eligible):
            continue
        dist = np.where(eligible, dist, -np.inf)
        labels[int(np.argmax(dist))] = cluster
    return labels


def kmeans(
    embeddings: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-4,
    restarts: int = 1,
) -> ClusterModel:
    """Cluster row vectors into k groups; deterministic for a given seed."""
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("embeddings must be a 2-D matrix")
    n = points.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}; shrink k")
    best: ClusterModel | None = None
    for restart in range(max(1, restarts)):
        model = _kmeans_once(points, k, seed + restart, max_iters, tol)
        if best is None or model.inertia < best.inertia:
            best = model
    assert best is not None
    best.seed = seed
    return best


def _kmeans_once(
    points: np.ndarray, k: int, seed: int, max_iters: int, tol: float
) -> ClusterModel:
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(points, k, rng)
    labels = np.zeros(points.shape[0], dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iters):
        labels = _assign(points, centroids)
        labels = _fix_empty(points, labels, centroids)
        new_centroids = centroids.copy()
        for cluster in range(k):
            members = points[labels == cluster]
            if members.shape[0] > 0:
                new_centroids[cluster] = members.mean(axis=0)
        movement = float(np.linalg.norm(new_centroids - centroids, axis=1).max())
        centroids = new_centroids
        history.append(float(((points - centroids[labels]) ** 2).sum()))
        if movement < tol:
            break
    return ClusterModel(
        centroids=centroids,
        assignments=labels,
        k=k,
        seed=seed,
        inertia=history[-1],
        inertia_history=history,
    )


def medoid_indices(embeddings: np.ndarray, model: ClusterModel) -> list[int]:
    """Per cluster, the member index closest (L2) to the centroid.

    Ordered by cluster id; ties go to the lowest member index. Clusters
    left empty by degenerate data are backfilled with the lowest unused
    indices so exactly k distinct members come back.
    """
    points = np.asarray(embeddings, dtype=np.float64)
    chosen: list[int] = []
    for cluster in range(model.k):
        members = np.flatnonzero(model.assignments == cluster)
        if members.size == 0:
            continue
        dist = np.linalg.norm(points[members] - model.centroids[cluster], axis=1)
        chosen.append(int(members[int(np.argmin(dist))]))
    if len(chosen) < model.k:
        used = set(chosen)
        for idx in range(points.shape[0]):
            if len(chosen) >= model.k:
                break
            if idx not in used:
                chosen.append(idx)
                used.add(idx)
    return chosen


def select_exemplars(
    pool: Sequence[ExemplarPair],
    embeddings: np.ndarray,
    k: int,
    seed: int,
) -> list[ExemplarPair]:
    """Pick min(k, |pool|) diverse demonstrations as cluster medoids."""
    if len(pool) == 0:
        raise ValueError("cannot select exemplars from an empty pool")
    points = np.asarray(embeddings, dtype=np.float64)
    if points.shape[0] != len(pool):
        raise ValueError(
            f"embeddings rows ({points.shape[0]}) must align with pool size ({len(pool)})"
        )
    if len(pool) <= k:
        return list(pool)
    model = kmeans(points, k, seed)
    return [pool[i] for i in medoid_indices(points, model)]
