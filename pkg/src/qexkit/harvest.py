"""Exemplar-pool harvesting: first-pass retrieval plus reranker top-1.

Per seed query: take the BM25 top-N candidates, rerank them, keep the
best keep_per_query passages as (query, passage) demonstrations. No
relevance labels are involved; seed queries only retrieve content.
Duplicate passages across seeds are kept — redundancy is handled later
by clustering.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TypeVar

from .analysis import tokenize
from .backends import BackendError
from .bm25 import Bm25Params, InvertedIndex, retrieve
from .corpus_io import Document, ExemplarPair, Query
from .rerank import Reranker, RerankRequest, top_candidates

T = TypeVar("T")
U = TypeVar("U")


@dataclass(frozen=True)
class HarvestConfig:
    top_n: int = 100
    keep_per_query: int = 1
    max_workers: int = 4

    def __post_init__(self) -> None:
        if not 1 <= self.keep_per_query <= self.top_n:
            raise ValueError("need 1 <= keep_per_query <= top_n")


@dataclass
class HarvestReport:
    seed_count: int = 0
    pool_size: int = 0
    skipped_no_match: list[str] = field(default_factory=list)
    skipped_empty_query: list[str] = field(default_factory=list)
    failed_query_id: str | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed_count": self.seed_count,
                "pool_size": self.pool_size,
                "skipped_no_match": self.skipped_no_match,
                "skipped_empty_query": self.skipped_empty_query,
                "failed_query_id": self.failed_query_id,
            }
        )

    def write(self, path: Path | str) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


class HarvestAbortError(RuntimeError):
    """Reranker failed after retries; carries the partial pool and report."""

    def __init__(self, cause: Exception, partial_pool: list[ExemplarPair], report: HarvestReport):
        super().__init__(
            f"harvest aborted at query {report.failed_query_id!r} "
            f"after {report.pool_size} pairs: {cause}"
        )
        self.cause = cause
        self.partial_pool = partial_pool
        self.report = report


def bounded_map(fn: Callable[[T], U], items: Sequence[T], max_workers: int) -> list[U]:
    """Map with bounded parallelism, results in input order."""
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def harvest_pool(
    index: InvertedIndex,
    bm25_params: Bm25Params,
    reranker: Reranker,
    seed_queries: Sequence[Query],
    config: HarvestConfig,
    doc_texts: dict[str, str],
) -> tuple[list[ExemplarPair], HarvestReport]:
    """Build the exemplar pool in seed order.

    Seeds that match no document (or tokenize to nothing) are skipped
    and counted in the report. A reranker failure aborts the harvest
    with the pairs gathered so far attached, so nothing is silently
    dropped.
    """
    report = HarvestReport(seed_count=len(seed_queries))

    def one(seed: Query) -> list[ExemplarPair] | str | None | BackendError:
        # sentinels: None = empty after tokenization, str = qid with no match
        if not tokenize(seed.text):
            return None
        hits = [r for r in retrieve(index, bm25_params, seed.text, config.top_n) if r.score > 0]
        if not hits:
            return seed.query_id
        request = RerankRequest(
            query_text=seed.text,
            candidates=tuple((r.doc_id, doc_texts[r.doc_id]) for r in hits),
            query_id=seed.query_id,
        )
        try:
            response = reranker.rerank(request)
        except BackendError as exc:
            return exc
        return [
            ExemplarPair(
                query_text=seed.text,
                passage_text=text,
                source_query_id=seed.query_id,
                reranker_score=score,
            )
            for doc_id, text, score in top_candidates(request, response, config.keep_per_query)
        ]

    pool: list[ExemplarPair] = []
    for seed, result in zip(seed_queries, bounded_map(one, seed_queries, config.max_workers)):
        if result is None:
            report.skipped_empty_query.append(seed.query_id)
        elif isinstance(result, str):
            report.skipped_no_match.append(result)
        elif isinstance(result, BackendError):
            report.pool_size = len(pool)
            report.failed_query_id = seed.query_id
            raise HarvestAbortError(result, pool, report)
        else:
            pool.extend(result)
    report.pool_size = len(pool)
    return pool, report


def corpus_text_map(docs: Sequence[Document]) -> dict[str, str]:
    """doc_id → indexable passage text, as fed to the index."""
    return {doc.doc_id: doc.full_text() for doc in docs}
