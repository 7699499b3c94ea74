from __future__ import annotations

import pytest

from qexkit.backends import BackendError
from qexkit.bm25 import Bm25Params, build_index, retrieve
from qexkit.corpus_io import Document, Query
from qexkit.harvest import (
    HarvestAbortError,
    HarvestConfig,
    corpus_text_map,
    harvest_pool,
)
from qexkit.rerank import RerankResponse


class InvertingReranker:
    """Scores candidates by reversed input order (inverts BM25 ranking)."""

    def rerank(self, request):
        n = len(request.candidates)
        return RerankResponse(scores=tuple(float(i) for i in range(n)))


class ExplodingReranker:
    def __init__(self, fail_on_query):
        self.fail_on_query = fail_on_query

    def rerank(self, request):
        if request.query_text == self.fail_on_query:
            raise BackendError("backend down")
        return RerankResponse(scores=tuple(0.0 for _ in request.candidates))


@pytest.fixture
def corpus():
    return [
        Document("d1", "cat sat on the mat"),
        Document("d2", "cat cat cat climbing"),
        Document("d3", "dog ran fast through fields"),
        Document("d4", "zebra stripes in the savanna"),
        Document("d5", "river stone and cloud"),
    ]


def test_inverting_stub_picks_bm25_last(corpus):
    index = build_index(corpus)
    params = Bm25Params()
    seeds = [Query("s1", "cat"), Query("s2", "dog"), Query("s3", "zebra")]
    pool, report = harvest_pool(
        index, params, InvertingReranker(), seeds, HarvestConfig(top_n=10), corpus_text_map(corpus)
    )
    assert len(pool) == 3
    # hand-trace: the stub's top-1 is the last BM25 hit per query
    for seed, pair in zip(seeds, pool):
        hits = [r for r in retrieve(index, params, seed.text, 10) if r.score > 0]
        expected_doc = hits[-1].doc_id
        assert pair.passage_text == corpus_text_map(corpus)[expected_doc]
        assert pair.query_text == seed.text
        assert pair.source_query_id == seed.query_id


def test_unmatched_seed_skipped_and_counted(corpus):
    index = build_index(corpus)
    seeds = [Query("s1", "cat"), Query("s2", "xylophone")]
    pool, report = harvest_pool(
        index, Bm25Params(), InvertingReranker(), seeds, HarvestConfig(), corpus_text_map(corpus)
    )
    assert len(pool) == 1
    assert report.skipped_no_match == ["s2"]
    assert report.pool_size == 1


def test_token_free_seed_skipped(corpus):
    index = build_index(corpus)
    seeds = [Query("s1", "the of and")]
    pool, report = harvest_pool(
        index, Bm25Params(), InvertingReranker(), seeds, HarvestConfig(), corpus_text_map(corpus)
    )
    assert pool == []
    assert report.skipped_empty_query == ["s1"]


def test_pool_size_identity(corpus):
    index = build_index(corpus)
    seeds = [Query(f"s{i}", text) for i, text in enumerate(["cat", "dog", "stone", "cat sat"])]
    config = HarvestConfig(top_n=10, keep_per_query=2)
    pool, _ = harvest_pool(
        index, Bm25Params(), InvertingReranker(), seeds, config, corpus_text_map(corpus)
    )
    params = Bm25Params()
    expected = sum(
        min(config.keep_per_query, len([r for r in retrieve(index, params, s.text, 10) if r.score > 0]))
        for s in seeds
    )
    assert len(pool) == expected


def test_passages_verbatim_from_corpus(corpus):
    index = build_index(corpus)
    seeds = [Query("s1", "cat"), Query("s2", "river cloud")]
    pool, _ = harvest_pool(
        index, Bm25Params(), InvertingReranker(), seeds, HarvestConfig(), corpus_text_map(corpus)
    )
    surfaces = set(corpus_text_map(corpus).values())
    for pair in pool:
        assert pair.passage_text in surfaces


def test_reranker_failure_aborts_with_partial_pool(corpus):
    index = build_index(corpus)
    seeds = [Query("s1", "cat"), Query("s2", "dog"), Query("s3", "zebra")]
    reranker = ExplodingReranker(fail_on_query="dog")
    with pytest.raises(HarvestAbortError) as excinfo:
        harvest_pool(
            index, Bm25Params(), reranker, seeds, HarvestConfig(max_workers=1),
            corpus_text_map(corpus),
        )
    err = excinfo.value
    assert err.report.failed_query_id == "s2"
    assert len(err.partial_pool) == 1  # s1 completed before the failure


def test_deterministic_given_stub(corpus):
    index = build_index(corpus)
    seeds = [Query(f"s{i}", t) for i, t in enumerate(["cat", "dog", "zebra", "stone river"])]
    run = lambda: harvest_pool(
        index, Bm25Params(), InvertingReranker(), seeds, HarvestConfig(), corpus_text_map(corpus)
    )[0]
    assert run() == run()


def test_config_validation():
    with pytest.raises(ValueError):
        HarvestConfig(top_n=5, keep_per_query=6)
