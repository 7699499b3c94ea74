"""End-to-end expansion and retrieval orchestration.

Per query: generate an expansion for the configured mode, build the
augmented query (repeated original query plus expansion), retrieve, and
assemble one run in input query order. Failed generations degrade that
query to retrieval over the original text; the run always covers every
input query.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import bm25 as bm25_mod
from .backends import BackendError
from .bm25 import Bm25Params, InvertedIndex
from .corpus_io import ExemplarPair, Query, RunList
from .dense import DenseIndex, dense_retrieve, normalize
from .embeddings import Embedder
from .harvest import bounded_map
from .llm import ChatBackend, chat
from .prompts import (
    DEFAULT_TEMPLATES,
    GenerationConfig,
    PromptTemplates,
    REFINE_MAX_NEW_TOKENS,
    build_expansion_prompt,
    build_refine_prompt,
    estimate_messages,
)
from .rocchio import RocchioParams, rocchio_retrieve

MODES = ("none", "rocchio", "zeroshot", "fewshot-fixed", "cluster-icl", "concat", "refine")
LLM_MODES = ("zeroshot", "fewshot-fixed", "cluster-icl", "concat", "refine")
EXEMPLAR_MODES = ("fewshot-fixed", "cluster-icl", "concat", "refine")


@dataclass
class ExpansionRecord:
    query_id: str
    mode: str
    expansion_text: str
    models: list[str]
    prompt_tokens: int = 0
    elapsed_ms: float = 0.0
    degraded: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "query_id": self.query_id,
                "mode": self.mode,
                "expansion": self.expansion_text,
                "models": self.models,
                "prompt_tokens": self.prompt_tokens,
                "elapsed_ms": self.elapsed_ms,
                "degraded": self.degraded,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "ExpansionRecord":
        obj = json.loads(line)
        return cls(
            query_id=obj["query_id"],
            mode=obj["mode"],
            expansion_text=obj["expansion"],
            models=list(obj["models"]),
            prompt_tokens=int(obj.get("prompt_tokens", 0)),
            elapsed_ms=float(obj.get("elapsed_ms", 0.0)),
            degraded=bool(obj.get("degraded", False)),
        )


def write_expansions(records: Sequence[ExpansionRecord], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")


def read_expansions(path: Path | str) -> list[ExpansionRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return [ExpansionRecord.from_json(line) for line in fh if line.strip()]


@dataclass
class PipelineConfig:
    mode: str = "none"
    k_exemplars: int = 4
    query_copies: int = 5
    retriever: str = "bm25"
    top_k: int = 100
    tag: str = "qexkit"
    bm25_params: Bm25Params = field(default_factory=Bm25Params)
    rocchio_params: RocchioParams = field(default_factory=RocchioParams)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    refine_max_new_tokens: int = REFINE_MAX_NEW_TOKENS
    templates: PromptTemplates = DEFAULT_TEMPLATES
    llm1: ChatBackend | None = None
    llm2: ChatBackend | None = None
    refiner: ChatBackend | None = None
    embedder: Embedder | None = None
    max_workers: int = 4

    def validate(self, for_generation: bool = True) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.retriever not in ("bm25", "dense"):
            raise ValueError(f"unknown retriever {self.retriever!r}")
        if self.query_copies < 1:
            raise ValueError("query_copies must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.retriever == "dense" and self.embedder is None:
            raise ValueError("dense retrieval requires an embedder")
        if self.retriever == "dense" and self.mode == "rocchio":
            raise ValueError("rocchio is a lexical mode; use retriever=bm25")
        if not for_generation:
            return
        if self.mode in LLM_MODES and self.llm1 is None:
            raise ValueError(f"mode {self.mode!r} requires an llm1 backend")
        if self.mode in ("concat", "refine"):
            if self.llm2 is None:
                raise ValueError(f"mode {self.mode!r} requires two generator backends")
            assert self.llm1 is not None
            if self.llm1.tag == self.llm2.tag:
                raise ValueError("concat/refine need two distinct backend tags")
        if self.mode == "refine" and self.refiner is None:
            raise ValueError("mode 'refine' requires a refiner backend")


def augment_query(query_text: str, expansion: str, copies: int) -> str:
    """`copies` repetitions of the query, a space, then the expansion."""
    if not query_text:
        raise ValueError("query text must be non-empty")
    if copies < 1:
        raise ValueError("copies must be >= 1")
    repeated = " ".join([query_text] * copies)
    return f"{repeated} {expansion}" if expansion else repeated


def _generate(backend: ChatBackend, messages, config: GenerationConfig) -> str | None:
    try:
        return chat(backend, messages, config)
    except BackendError:
        return None


def expand_query(
    config: PipelineConfig,
    query: Query,
    exemplars: Sequence[ExemplarPair],
) -> ExpansionRecord:
    """Produce one expansion record for the configured LLM mode."""
    if config.mode not in LLM_MODES:
        raise ValueError(f"mode {config.mode!r} does not generate expansions")
    assert config.llm1 is not None
    started = time.perf_counter()
    gen = config.generation
    prompt = build_expansion_prompt(
        query.text,
        exemplars if config.mode != "zeroshot" else [],
        budget=gen.context_budget_tokens,
        templates=config.templates,
    )
    prompt_tokens = estimate_messages(prompt)

    if config.mode in ("zeroshot", "fewshot-fixed", "cluster-icl"):
        text = _generate(config.llm1, prompt, gen)
        record = ExpansionRecord(
            query_id=query.query_id,
            mode=config.mode,
            expansion_text=text or "",
            models=[config.llm1.tag],
            prompt_tokens=prompt_tokens,
            degraded=text is None,
        )
    else:
        assert config.llm2 is not None
        e1 = _generate(config.llm1, prompt, gen)
        e2 = _generate(config.llm2, prompt, gen)
        models = [config.llm1.tag, config.llm2.tag]
        degraded = e1 is None or e2 is None
        if e1 is None and e2 is None:
            expansion = ""
        elif e1 is None or e2 is None:
            expansion = e1 or e2 or ""
        elif config.mode == "concat":
            expansion = f"{e1} {e2}"
        else:
            assert config.refiner is not None
            refine_cfg = replace(gen, max_new_tokens=config.refine_max_new_tokens)
            refined = _generate(
                config.refiner,
                build_refine_prompt(query.text, e1, e2, config.templates),
                refine_cfg,
            )
            models.append(config.refiner.tag)
            if refined is None:
                # refiner down: keep both expansions rather than dropping one
                expansion = f"{e1} {e2}"
                degraded = True
            else:
                expansion = refined
        record = ExpansionRecord(
            query_id=query.query_id,
            mode=config.mode,
            expansion_text=expansion,
            models=models,
            prompt_tokens=prompt_tokens,
            degraded=degraded,
        )
    record.elapsed_ms = (time.perf_counter() - started) * 1000.0
    return record


def generate_expansions(
    config: PipelineConfig,
    queries: Sequence[Query],
    exemplars: Sequence[ExemplarPair] | None = None,
) -> list[ExpansionRecord]:
    """Expansion records for every query, in input order."""
    config.validate()
    if config.mode not in LLM_MODES:
        return []
    demos: Sequence[ExemplarPair] = exemplars or []
    if config.mode != "zeroshot" and not demos:
        raise ValueError(f"mode {config.mode!r} needs exemplars")
    return bounded_map(
        lambda q: expand_query(config, q, demos), queries, config.max_workers
    )


def _retrieve_text(
    config: PipelineConfig,
    text: str,
    index: InvertedIndex | None,
    dense: DenseIndex | None,
):
    if config.retriever == "bm25":
        assert index is not None
        return bm25_mod.retrieve(index, config.bm25_params, text, config.top_k)
    assert dense is not None and config.embedder is not None
    qvec = normalize(config.embedder.embed([text])[0])
    return dense_retrieve(dense, qvec, config.top_k)


def retrieve_with_expansions(
    config: PipelineConfig,
    queries: Sequence[Query],
    expansions: Sequence[ExpansionRecord] | None,
    index: InvertedIndex | None = None,
    dense: DenseIndex | None = None,
) -> RunList:
    """Retrieve every query under the configured mode; one merged run."""
    config.validate(for_generation=False)
    if config.retriever == "bm25" and index is None:
        raise ValueError("bm25 retrieval requires an inverted index")
    if config.retriever == "dense" and dense is None:
        raise ValueError("dense retrieval requires a dense index")
    by_qid = {r.query_id: r for r in expansions} if expansions else {}

    def one(query: Query):
        if config.mode == "none":
            return _retrieve_text(config, query.text, index, dense)
        if config.mode == "rocchio":
            assert index is not None
            return rocchio_retrieve(
                index, config.bm25_params, config.rocchio_params, query.text, config.top_k
            )
        record = by_qid.get(query.query_id)
        if record is None:
            raise ValueError(f"no expansion record for query {query.query_id!r}")
        if record.degraded and not record.expansion_text:
            # failed generation: continue with the original query
            return _retrieve_text(config, query.text, index, dense)
        augmented = augment_query(query.text, record.expansion_text, config.query_copies)
        return _retrieve_text(config, augmented, index, dense)

    run = RunList(tag=config.tag)
    for query, rows in zip(queries, bounded_map(one, queries, config.max_workers)):
        run.add_query(query.query_id, rows)
    return run


def run_pipeline(
    config: PipelineConfig,
    queries: Sequence[Query],
    index: InvertedIndex | None = None,
    dense: DenseIndex | None = None,
    exemplars: Sequence[ExemplarPair] | None = None,
) -> tuple[RunList, list[ExpansionRecord]]:
    """Generate expansions (if the mode calls for them) and retrieve."""
    records = generate_expansions(config, queries, exemplars)
    run = retrieve_with_expansions(config, queries, records, index=index, dense=dense)
    return run, records
