"""Rocchio pseudo-relevance feedback over the BM25 index.

Feedback doc vectors are tf-idf weighted (tf times the index idf) to
damp stopword-like terms that survive tokenization. Pseudo-relevance
only: no negative (gamma) component.
"""
from __future__ import annotations

from dataclasses import dataclass

from .analysis import tokenize
from .bm25 import Bm25Params, InvertedIndex, retrieve, term_score
from .corpus_io import RunEntry


@dataclass(frozen=True)
class RocchioParams:
    alpha: float = 1.0
    beta: float = 0.75
    fb_docs: int = 10
    fb_terms: int = 10

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.fb_docs < 1 or self.fb_terms < 1:
            raise ValueError("fb_docs and fb_terms must be >= 1")


def _feedback_centroid(index: InvertedIndex, ordinals: set[int]) -> dict[str, float]:
    """Sum of tf-idf doc vectors over the feedback set, one postings pass."""
    centroid: dict[str, float] = {}
    for term, plist in index.postings.items():
        total = 0.0
        for doc_ord, tf in plist:
            if doc_ord in ordinals:
                total += tf
        if total > 0:
            centroid[term] = total * index.idf(term)
    return centroid


def rocchio_expand(
    index: InvertedIndex,
    bm25_params: Bm25Params,
    params: RocchioParams,
    query_text: str,
) -> dict[str, float]:
    """Weighted expansion vector, normalized so the max weight is 1.

    q' = alpha*q + (beta/|D_r|) * sum of tf-idf doc vectors over the
    pseudo-relevant set D_r (top fb_docs with positive BM25 score); only
    the fb_terms heaviest non-query terms are kept.
    """
    query_terms = tokenize(query_text)
    if not query_terms:
        raise ValueError("query is empty after tokenization")
    query_vec: dict[str, float] = {}
    for t in query_terms:
        query_vec[t] = query_vec.get(t, 0.0) + 1.0

    weights = {t: params.alpha * w for t, w in query_vec.items()}

    fb_docs = min(params.fb_docs, index.n_docs)
    feedback = [r for r in retrieve(index, bm25_params, query_text, fb_docs) if r.score > 0]
    if feedback:
        ordinals = {index.ordinal_of[row.doc_id] for row in feedback}
        centroid = _feedback_centroid(index, ordinals)
        scale = params.beta / len(feedback)
        candidates = {
            term: scale * w
            for term, w in centroid.items()
            if term not in query_vec and scale * w > 0
        }
        kept = sorted(candidates.items(), key=lambda kv: (-kv[1], kv[0]))[: params.fb_terms]
        for term, w in kept:
            weights[term] = w
        for term in query_vec:
            if term in centroid:
                weights[term] += scale * centroid[term]

    max_w = max(weights.values())
    if max_w > 0:
        weights = {t: w / max_w for t, w in weights.items()}
    return weights


def rocchio_retrieve(
    index: InvertedIndex,
    bm25_params: Bm25Params,
    params: RocchioParams,
    query_text: str,
    k: int,
) -> list[RunEntry]:
    """Top-k by weighted BM25 term scores under the expanded query."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    weights = rocchio_expand(index, bm25_params, params, query_text)
    scores = [0.0] * index.n_docs
    for term, weight in weights.items():
        plist = index.postings.get(term)
        if not plist:
            continue
        for ordinal, _tf in plist:
            scores[ordinal] += weight * term_score(index, bm25_params, term, ordinal)
    order = sorted(range(index.n_docs), key=lambda o: (-scores[o], index.doc_ids[o]))
    return [
        RunEntry(doc_id=index.doc_ids[o], score=scores[o], rank=rank)
        for rank, o in enumerate(order[:k], start=1)
    ]
