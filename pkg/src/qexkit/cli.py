"""Batch front-end wiring all stages into reproducible experiments.

Every artifact gets a `.meta.json` sidecar embedding the stage manifest
hash and the seed; `run-all` reuses a stage's output when its manifest
hash is unchanged. Endpoint URLs and API keys may come from environment
variables (QEXKIT_*); everything else comes from the config file and
flags so experiments stay reproducible.

Backend URL forms: `http(s)://…` for live endpoints, `stub:echo`,
`stub:canned:<file.json>` for chat, `stub:hash[:dim]` for embeddings,
`stub:hash` / `stub:scorefile:<file.jsonl>` for reranking.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .backends import Cassette
from .bm25 import Bm25Params, build_index, load_index, save_index
from .cluster import select_exemplars
from .corpus_io import (
    load_corpus,
    load_pool,
    load_qrels,
    load_queries,
    read_run,
    write_pool,
    write_run,
)
from .dense import build_dense_index, load_dense_index, save_dense_index
from .embeddings import CachedEmbedder, Embedder, HashEmbedder, HttpEmbedder, embed_pairs
from .evaluation import METRICS, evaluate, paired_t_test
from .harvest import HarvestConfig, corpus_text_map, harvest_pool
from .llm import CannedChatBackend, ChatBackend, EchoChatBackend, HttpChatBackend
from .pipeline import (
    EXEMPLAR_MODES,
    LLM_MODES,
    MODES,
    PipelineConfig,
    generate_expansions,
    read_expansions,
    retrieve_with_expansions,
    write_expansions,
)
from .prompts import GenerationConfig, PromptTemplates, DEFAULT_TEMPLATES, load_fixed_exemplars
from .rerank import HashReranker, HttpReranker, Reranker, ScoreFileReranker
from .rocchio import RocchioParams

ENV_URLS = {
    "llm1_url": "QEXKIT_LLM1_URL",
    "llm2_url": "QEXKIT_LLM2_URL",
    "refiner_url": "QEXKIT_REFINER_URL",
    "embed_url": "QEXKIT_EMBED_URL",
    "rerank_url": "QEXKIT_RERANK_URL",
}
ENV_API_KEY = "QEXKIT_API_KEY"


# ---------------------------------------------------------------- manifests


def _sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_hash(manifest: dict[str, Any]) -> str:
    canonical = json.dumps(manifest, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _meta_path(artifact: Path) -> Path:
    if artifact.is_dir() or artifact.suffix == "":
        return artifact / "artifact.meta.json"
    return artifact.with_name(artifact.name + ".meta.json")


def write_meta(artifact: Path, stage: str, manifest: dict[str, Any], seed: int) -> None:
    meta = {
        "stage": stage,
        "manifest_hash": manifest_hash(manifest),
        "seed": seed,
        "qexkit_version": __version__,
        "manifest": manifest,
    }
    path = _meta_path(artifact)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def is_cached(artifact: Path, manifest: dict[str, Any]) -> bool:
    meta_path = _meta_path(artifact)
    if not artifact.exists() or not meta_path.exists():
        return False
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return False
    return meta.get("manifest_hash") == manifest_hash(manifest)


# ---------------------------------------------------------------- backends


def _cassette(args: argparse.Namespace) -> Cassette | None:
    if not getattr(args, "cassette", None):
        return None
    return Cassette.open(args.cassette, getattr(args, "cassette_mode", None))


def make_chat_backend(
    url: str, role: str, cassette: Cassette | None, templates: PromptTemplates
) -> ChatBackend:
    tag = f"{role}@{url}"
    if url == "stub:echo":
        return EchoChatBackend(tag=tag, templates=templates)
    if url.startswith("stub:canned:"):
        mapping = json.loads(Path(url[len("stub:canned:") :]).read_text(encoding="utf-8"))
        return CannedChatBackend(responses=mapping, tag=tag, templates=templates)
    if url.startswith("stub:"):
        raise SystemExit(f"unknown chat stub {url!r}")
    return HttpChatBackend(url, tag=tag, cassette=cassette, api_key=os.environ.get(ENV_API_KEY))


def make_embedder(url: str, cassette: Cassette | None) -> Embedder:
    if url == "stub:hash":
        return HashEmbedder()
    if url.startswith("stub:hash:"):
        return HashEmbedder(dim=int(url.rsplit(":", 1)[1]))
    if url.startswith("stub:"):
        raise SystemExit(f"unknown embed stub {url!r}")
    return HttpEmbedder(url, cassette=cassette, api_key=os.environ.get(ENV_API_KEY))


def make_reranker(url: str, cassette: Cassette | None) -> Reranker:
    if url == "stub:hash":
        return HashReranker()
    if url.startswith("stub:scorefile:"):
        return ScoreFileReranker(url[len("stub:scorefile:") :])
    if url.startswith("stub:"):
        raise SystemExit(f"unknown rerank stub {url!r}")
    return HttpReranker(url, cassette=cassette, api_key=os.environ.get(ENV_API_KEY))


def _templates(args: argparse.Namespace) -> PromptTemplates:
    if getattr(args, "templates", None):
        return PromptTemplates.load(args.templates)
    return DEFAULT_TEMPLATES


def _require(args: argparse.Namespace, name: str) -> str:
    value = getattr(args, name, None)
    if not value:
        flag = "--" + name.replace("_", "-")
        raise SystemExit(f"error: {flag} is required for this command")
    return value


def _pipeline_config(
    args: argparse.Namespace, cassette: Cassette | None, need_llms: bool = True
) -> PipelineConfig:
    templates = _templates(args)
    config = PipelineConfig(
        mode=args.mode,
        k_exemplars=args.k_exemplars,
        query_copies=args.copies,
        retriever=args.retriever,
        top_k=args.top_k,
        tag=args.tag,
        bm25_params=Bm25Params(k1=args.k1, b=args.b),
        rocchio_params=RocchioParams(
            alpha=args.rocchio_alpha,
            beta=args.rocchio_beta,
            fb_docs=args.fb_docs,
            fb_terms=args.fb_terms,
        ),
        generation=GenerationConfig(
            max_new_tokens=args.max_new_tokens,
            num_beams=args.num_beams,
            repetition_penalty=args.repetition_penalty,
            no_repeat_ngram=args.no_repeat_ngram,
            context_budget_tokens=args.context_budget,
        ),
        templates=templates,
        max_workers=args.workers,
    )
    if need_llms:
        if args.mode in LLM_MODES:
            config.llm1 = make_chat_backend(
                _require(args, "llm1_url"), "llm1", cassette, templates
            )
        if args.mode in ("concat", "refine"):
            config.llm2 = make_chat_backend(
                _require(args, "llm2_url"), "llm2", cassette, templates
            )
        if args.mode == "refine":
            config.refiner = make_chat_backend(
                _require(args, "refiner_url"), "refiner", cassette, templates
            )
    if args.retriever == "dense":
        config.embedder = make_embedder(_require(args, "embed_url"), cassette)
    return config


# ---------------------------------------------------------------- stages


def cmd_index(args: argparse.Namespace) -> int:
    index_dir = Path(args.index_dir)
    manifest = {
        "stage": "index",
        "corpus": _sha256_file(args.corpus),
        "corpus_format": args.corpus_format,
    }
    if args.force_rebuild or not is_cached(index_dir, manifest):
        docs = load_corpus(args.corpus, args.corpus_format)
        index = build_index(docs)
        save_index(index, index_dir)
        write_meta(index_dir, "index", manifest, args.seed)
        print(f"indexed {index.n_docs} docs (avgdl {index.avgdl:.2f}) -> {index_dir}")
    else:
        print(f"index cached -> {index_dir}")

    if args.retriever == "dense":
        dense_dir = Path(args.dense_dir or index_dir.parent / "dense")
        cassette = _cassette(args)
        dense_manifest = dict(manifest, stage="index-dense", embed_url=args.embed_url)
        if not is_cached(dense_dir, dense_manifest):
            docs = load_corpus(args.corpus, args.corpus_format)
            embedder = make_embedder(_require(args, "embed_url"), cassette)
            vectors = embedder.embed([d.full_text() for d in docs])
            dense = build_dense_index([d.doc_id for d in docs], np.asarray(vectors))
            save_dense_index(dense, dense_dir)
            write_meta(dense_dir, "index-dense", dense_manifest, args.seed)
            print(f"dense index ({dense.dim}d) -> {dense_dir}")
        else:
            print(f"dense index cached -> {dense_dir}")
    return 0


def cmd_harvest(args: argparse.Namespace) -> int:
    pool_path = Path(args.pool)
    manifest = {
        "stage": "harvest",
        "corpus": _sha256_file(args.corpus),
        "seed_queries": _sha256_file(args.seed_queries),
        "rerank_url": args.rerank_url,
        "top_n": args.top_n,
        "keep_per_query": args.keep_per_query,
    }
    if is_cached(pool_path, manifest):
        print(f"pool cached -> {pool_path}")
        return 0
    index = load_index(args.index_dir)
    docs = load_corpus(args.corpus, args.corpus_format)
    seeds = load_queries(args.seed_queries)
    reranker = make_reranker(_require(args, "rerank_url"), _cassette(args))
    config = HarvestConfig(
        top_n=args.top_n, keep_per_query=args.keep_per_query, max_workers=args.workers
    )
    pool, report = harvest_pool(
        index, Bm25Params(k1=args.k1, b=args.b), reranker, seeds, config, corpus_text_map(docs)
    )
    write_pool(pool, pool_path)
    write_meta(pool_path, "harvest", manifest, args.seed)
    if args.report:
        report.write(args.report)
    print(
        f"harvested {report.pool_size} pairs from {report.seed_count} seeds "
        f"({len(report.skipped_no_match)} unmatched, "
        f"{len(report.skipped_empty_query)} empty) -> {pool_path}"
    )
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    out_path = Path(args.exemplars)
    manifest = {
        "stage": "select",
        "pool": _sha256_file(args.pool),
        "embed_url": args.embed_url,
        "k_exemplars": args.k_exemplars,
        "seed": args.seed,
    }
    if is_cached(out_path, manifest):
        print(f"exemplars cached -> {out_path}")
        return 0
    pool = load_pool(args.pool)
    embedder = make_embedder(_require(args, "embed_url"), _cassette(args))
    if args.embed_cache:
        embedder = CachedEmbedder(embedder, args.embed_cache)
    matrix = embed_pairs(embedder, pool)
    exemplars = select_exemplars(pool, matrix, args.k_exemplars, args.seed)
    write_pool(exemplars, out_path)
    write_meta(out_path, "select", manifest, args.seed)
    print(f"selected {len(exemplars)} exemplars -> {out_path}")
    return 0


def cmd_expand(args: argparse.Namespace) -> int:
    out_path = Path(args.out)
    manifest = {
        "stage": "expand",
        "queries": _sha256_file(args.queries),
        "mode": args.mode,
        "exemplars": _sha256_file(args.exemplars) if args.exemplars else None,
        "llm1_url": args.llm1_url,
        "llm2_url": args.llm2_url,
        "refiner_url": args.refiner_url,
        "max_new_tokens": args.max_new_tokens,
        "num_beams": args.num_beams,
        "repetition_penalty": args.repetition_penalty,
        "no_repeat_ngram": args.no_repeat_ngram,
        "context_budget": args.context_budget,
        "k_exemplars": args.k_exemplars,
        "fixed_exemplars": args.fixed_exemplars,
    }
    if is_cached(out_path, manifest):
        print(f"expansions cached -> {out_path}")
        return 0
    if args.mode not in LLM_MODES:
        raise SystemExit(f"error: mode {args.mode!r} generates no expansions")
    queries = load_queries(args.queries)
    config = _pipeline_config(args, _cassette(args))
    exemplars = None
    if args.mode == "fewshot-fixed":
        exemplars = load_fixed_exemplars(args.fixed_exemplars)
    elif args.mode in EXEMPLAR_MODES:
        exemplars = load_pool(_require(args, "exemplars"))
    records = []
    try:
        # chunked so an interrupt still flushes completed work
        chunk = max(1, args.workers * 4)
        for start in range(0, len(queries), chunk):
            records.extend(generate_expansions(config, queries[start : start + chunk], exemplars))
    except KeyboardInterrupt:
        write_expansions(records, out_path)
        print(f"interrupted: flushed {len(records)} partial expansions -> {out_path}")
        raise
    write_expansions(records, out_path)
    write_meta(out_path, "expand", manifest, args.seed)
    degraded = sum(1 for r in records if r.degraded)
    print(f"expanded {len(records)} queries ({degraded} degraded) -> {out_path}")
    return 0 if degraded <= args.max_degraded else 1


def cmd_retrieve(args: argparse.Namespace) -> int:
    run_path = Path(args.run)
    manifest = {
        "stage": "retrieve",
        "queries": _sha256_file(args.queries),
        "mode": args.mode,
        "expansions": _sha256_file(args.expansions) if args.expansions else None,
        "copies": args.copies,
        "top_k": args.top_k,
        "retriever": args.retriever,
        "k1": args.k1,
        "b": args.b,
        "rocchio": [args.rocchio_alpha, args.rocchio_beta, args.fb_docs, args.fb_terms],
        "tag": args.tag,
    }
    if is_cached(run_path, manifest):
        print(f"run cached -> {run_path}")
        return 0
    queries = load_queries(args.queries)
    cassette = _cassette(args)
    # retrieval replays persisted expansions; no chat backends needed
    config = _pipeline_config(args, cassette, need_llms=False)
    expansions = None
    if args.mode in LLM_MODES:
        expansions = read_expansions(_require(args, "expansions"))
    index = load_index(args.index_dir) if args.retriever == "bm25" or args.mode == "rocchio" else None
    dense = load_dense_index(_require(args, "dense_dir")) if args.retriever == "dense" else None
    run = retrieve_with_expansions(config, queries, expansions, index=index, dense=dense)
    write_run(run, run_path)
    write_meta(run_path, "retrieve", manifest, args.seed)
    print(f"retrieved {len(run.entries)} queries -> {run_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    run = read_run(args.run)
    qrels = load_qrels(args.qrels)
    report = evaluate(run, qrels, rel_threshold=args.rel_threshold)
    print(report.to_text())
    if args.per_query:
        report.write_jsonl(args.per_query)
    if args.json_out:
        Path(args.json_out).write_text(
            json.dumps({"run_tag": report.run_tag, "query_count": report.query_count,
                        "means": report.means}, indent=2) + "\n",
            encoding="utf-8",
        )
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    if args.metric not in METRICS:
        raise SystemExit(f"error: --metric must be one of {METRICS}")
    qrels = load_qrels(args.qrels)
    report_a = evaluate(read_run(args.run_a), qrels, rel_threshold=args.rel_threshold)
    report_b = evaluate(read_run(args.run_b), qrels, rel_threshold=args.rel_threshold)
    result = paired_t_test(
        report_a.per_query[args.metric], report_b.per_query[args.metric], metric=args.metric
    )
    print(f"A: {report_a.run_tag}  mean {report_a.means[args.metric]:.4f}")
    print(f"B: {report_b.run_tag}  mean {report_b.means[args.metric]:.4f}")
    print(result.to_text())
    return 0


def cmd_run_all(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    args.index_dir = str(out_dir / "index")
    args.dense_dir = str(out_dir / "dense")
    args.expansions = None
    if args.cassette and args.cassette_mode is None:
        # pin the mode once; otherwise the file the first stage records
        # would flip later stages into replay and miss
        args.cassette_mode = "replay" if Path(args.cassette).exists() else "record"
    rc = cmd_index(args)
    if rc != 0:
        return rc

    if args.mode in ("cluster-icl", "concat", "refine"):
        if not args.pool:
            _require(args, "seed_queries")
            args.pool = str(out_dir / "pool.jsonl")
            args.report = args.report or str(out_dir / "harvest_report.json")
            rc = cmd_harvest(args)
            if rc != 0:
                return rc
        if not args.exemplars:
            args.exemplars = str(out_dir / "exemplars.jsonl")
            rc = cmd_select(args)
            if rc != 0:
                return rc

    exit_code = 0
    if args.mode in LLM_MODES:
        args.out = str(out_dir / "expansions.jsonl")
        exit_code = cmd_expand(args)
        args.expansions = args.out

    args.run = str(out_dir / "run.trec")
    rc = cmd_retrieve(args)
    if rc != 0:
        return rc

    if args.qrels:
        args.per_query = str(out_dir / "eval_per_query.jsonl")
        args.json_out = str(out_dir / "eval.json")
        rc = cmd_eval(args)
        if rc != 0:
            return rc
    return exit_code


# ---------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--cassette", help="record/replay cassette path for HTTP backends")
    p.add_argument("--cassette-mode", choices=("record", "replay"), default=None)
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)


def _add_retrieval(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=MODES, default="none")
    p.add_argument("--retriever", choices=("bm25", "dense"), default="bm25")
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--copies", type=int, default=5)
    p.add_argument("--k-exemplars", type=int, default=4)
    p.add_argument("--tag", default="qexkit")
    p.add_argument("--rocchio-alpha", type=float, default=1.0)
    p.add_argument("--rocchio-beta", type=float, default=0.75)
    p.add_argument("--fb-docs", type=int, default=10)
    p.add_argument("--fb-terms", type=int, default=10)


def _add_generation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-new-tokens", type=int, default=64)
    p.add_argument("--num-beams", type=int, default=4)
    p.add_argument("--repetition-penalty", type=float, default=1.1)
    p.add_argument("--no-repeat-ngram", type=int, default=2)
    p.add_argument("--context-budget", type=int, default=1024)
    p.add_argument("--templates", help="override prompt templates (json file)")
    p.add_argument("--fixed-exemplars", help="override fixed few-shot exemplars (json file)")
    p.add_argument("--max-degraded", type=int, default=0)
    for flag, env in (("--llm1-url", "llm1_url"), ("--llm2-url", "llm2_url"),
                      ("--refiner-url", "refiner_url")):
        p.add_argument(flag, default=os.environ.get(ENV_URLS[env]))


def _add_embed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embed-url", default=os.environ.get(ENV_URLS["embed_url"]))
    p.add_argument("--embed-cache", help="jsonl embedding cache keyed by content hash")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="qexkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qexkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build the inverted (and optional dense) index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--corpus-format", choices=("jsonl", "tsv"), default="jsonl")
    p.add_argument("--index-dir", required=True)
    p.add_argument("--dense-dir")
    p.add_argument("--retriever", choices=("bm25", "dense"), default="bm25")
    p.add_argument("--force-rebuild", action="store_true")
    _add_embed(p)
    _add_common(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("harvest", help="build the exemplar pool from seed queries")
    p.add_argument("--index-dir", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--corpus-format", choices=("jsonl", "tsv"), default="jsonl")
    p.add_argument("--seed-queries", required=True)
    p.add_argument("--rerank-url", default=os.environ.get(ENV_URLS["rerank_url"]))
    p.add_argument("--pool", required=True)
    p.add_argument("--report")
    p.add_argument("--top-n", type=int, default=100)
    p.add_argument("--keep-per-query", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("select", help="pick diverse exemplars by cluster medoids")
    p.add_argument("--pool", required=True)
    p.add_argument("--exemplars", required=True)
    p.add_argument("--k-exemplars", type=int, default=4)
    _add_embed(p)
    _add_common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("expand", help="generate query expansions")
    p.add_argument("--queries", required=True)
    p.add_argument("--exemplars")
    p.add_argument("--out", required=True)
    _add_retrieval(p)
    _add_generation(p)
    _add_embed(p)
    _add_common(p)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("retrieve", help="retrieve with (or without) expansions")
    p.add_argument("--queries", required=True)
    p.add_argument("--index-dir", required=True)
    p.add_argument("--dense-dir")
    p.add_argument("--expansions")
    p.add_argument("--run", required=True)
    _add_retrieval(p)
    _add_generation(p)
    _add_embed(p)
    _add_common(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--rel-threshold", type=int, default=1)
    p.add_argument("--per-query", help="write per-query values as jsonl")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="paired t-test between two runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--qrels", required=True)
    p.add_argument("--metric", default="ndcg@10")
    p.add_argument("--rel-threshold", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("run-all", help="index → harvest → select → expand → retrieve → eval")
    p.add_argument("--corpus", required=True)
    p.add_argument("--corpus-format", choices=("jsonl", "tsv"), default="jsonl")
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels")
    p.add_argument("--seed-queries")
    p.add_argument("--pool", help="reuse an existing pool instead of harvesting")
    p.add_argument("--exemplars", help="reuse selected exemplars")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--rerank-url", default=os.environ.get(ENV_URLS["rerank_url"]))
    p.add_argument("--report")
    p.add_argument("--top-n", type=int, default=100)
    p.add_argument("--keep-per-query", type=int, default=1)
    p.add_argument("--rel-threshold", type=int, default=1)
    p.add_argument("--force-rebuild", action="store_true")
    _add_retrieval(p)
    _add_generation(p)
    _add_embed(p)
    _add_common(p)
    p.set_defaults(func=cmd_run_all)

    return parser, dict(sub.choices)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(argv) if argv is not None else sys.argv[1:]
    parser, subcommands = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        # two-phase parse: config supplies defaults, explicit flags win
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        sub = subcommands[args.command]
        valid = {action.dest for action in sub._actions}
        unknown = sorted(set(overrides) - valid)
        if unknown:
            raise SystemExit(f"error: config keys not recognised by {args.command}: {unknown}")
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
