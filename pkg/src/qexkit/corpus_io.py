"""Parsers and writers for corpora, queries, qrels, run files and exemplar pools.

All functions are pure over immutable inputs. Ids are opaque strings and
are never normalized. Parse errors carry the offending path/line so no
input line is ever silently dropped.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class DataFormatError(ValueError):
    """Malformed input file; message names path and 1-based line number."""


def _fail(path: Path | str, lineno: int, msg: str) -> DataFormatError:
    return DataFormatError(f"{path}:{lineno}: {msg}")


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    title: str | None = None

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.text and not self.title:
            raise ValueError(f"document {self.doc_id!r} has neither text nor title")

    def full_text(self) -> str:
        """Indexable surface: title prepended to text with one space."""
        if self.title:
            return f"{self.title} {self.text}" if self.text else self.title
        return self.text


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.query_id:
            raise ValueError("query_id must be non-empty")
        if not self.text:
            raise ValueError(f"query {self.query_id!r} has empty text")


@dataclass
class Qrels:
    """Graded relevance judgments keyed by (query_id, doc_id)."""

    entries: dict[tuple[str, str], int] = field(default_factory=dict)

    def add(self, query_id: str, doc_id: str, grade: int) -> None:
        if grade < 0:
            raise ValueError(f"negative grade for ({query_id},{doc_id})")
        key = (query_id, doc_id)
        existing = self.entries.get(key)
        if existing is not None and existing != grade:
            raise ValueError(
                f"duplicate qrels key ({query_id},{doc_id}) with differing grades "
                f"{existing} != {grade}"
            )
        self.entries[key] = grade

    def query_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for qid, _ in self.entries:
            seen.setdefault(qid)
        return list(seen)

    def grades_for(self, query_id: str) -> dict[str, int]:
        return {d: g for (q, d), g in self.entries.items() if q == query_id}


@dataclass(frozen=True)
class RunEntry:
    doc_id: str
    score: float
    rank: int


@dataclass
class RunList:
    """Ranked results per query in TREC run semantics."""

    tag: str
    entries: dict[str, list[RunEntry]] = field(default_factory=dict)

    def add_query(self, query_id: str, rows: list[RunEntry]) -> None:
        if query_id in self.entries:
            raise ValueError(f"query {query_id!r} already present in run")
        _validate_rows(query_id, rows)
        self.entries[query_id] = rows

    def query_ids(self) -> list[str]:
        return list(self.entries)


def _validate_rows(query_id: str, rows: list[RunEntry]) -> None:
    seen: set[str] = set()
    prev_rank = 0
    prev_score: float | None = None
    for row in rows:
        if row.rank < 1 or (prev_rank == 0 and row.rank != 1) or row.rank <= prev_rank:
            raise ValueError(
                f"query {query_id!r}: ranks must strictly increase from 1, got {row.rank}"
            )
        if prev_score is not None and row.score > prev_score:
            raise ValueError(
                f"query {query_id!r}: score {row.score} increases at rank {row.rank}"
            )
        if row.doc_id in seen:
            raise ValueError(f"query {query_id!r}: duplicate doc {row.doc_id!r}")
        seen.add(row.doc_id)
        prev_rank = row.rank
        prev_score = row.score


@dataclass(frozen=True)
class ExemplarPair:
    """One (query, passage) demonstration harvested from the corpus."""

    query_text: str
    passage_text: str
    source_query_id: str | None = None
    reranker_score: float | None = None

    def __post_init__(self) -> None:
        if not self.query_text or not self.passage_text:
            raise ValueError("exemplar query and passage must both be non-empty")


def _iter_lines(path: Path | str) -> Iterator[tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            yield lineno, line.rstrip("\n")


def load_corpus(path: Path | str, format: str = "jsonl") -> list[Document]:
    """Load documents; fails fast on missing ids, bad lines or duplicates."""
    if format not in ("jsonl", "tsv"):
        raise ValueError(f"unknown corpus format {format!r}")
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, line in _iter_lines(path):
        if format == "jsonl":
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise _fail(path, lineno, f"invalid json: {exc}") from exc
            doc_id = obj.get("_id", obj.get("id"))
            if doc_id is None or str(doc_id) == "":
                raise _fail(path, lineno, "missing document id field ('_id' or 'id')")
            doc_id = str(doc_id)
            title = obj.get("title") or None
            text = str(obj.get("text", ""))
        else:
            parts = line.split("\t")
            if len(parts) == 2:
                doc_id, title, text = parts[0], None, parts[1]
            elif len(parts) == 3:
                doc_id, title, text = parts[0], parts[1] or None, parts[2]
            else:
                raise _fail(path, lineno, f"expected 2 or 3 tab-separated fields, got {len(parts)}")
            if not doc_id:
                raise _fail(path, lineno, "empty doc_id")
        if doc_id in seen:
            raise _fail(path, lineno, f"duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        try:
            docs.append(Document(doc_id=doc_id, text=text, title=title))
        except ValueError as exc:
            raise _fail(path, lineno, str(exc)) from exc
    return docs


def load_queries(path: Path | str) -> list[Query]:
    """Load `qid<TAB>text` topics."""
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, line in _iter_lines(path):
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise _fail(path, lineno, "expected qid<TAB>text")
        qid, text = parts
        if qid in seen:
            raise _fail(path, lineno, f"duplicate query_id {qid!r}")
        seen.add(qid)
        try:
            queries.append(Query(query_id=qid, text=text))
        except ValueError as exc:
            raise _fail(path, lineno, str(exc)) from exc
    return queries


def load_qrels(path: Path | str) -> Qrels:
    """Parse whitespace-separated `qid iter doc_id rel` lines (iter ignored)."""
    qrels = Qrels()
    for lineno, line in _iter_lines(path):
        parts = line.split()
        if len(parts) != 4:
            raise _fail(path, lineno, f"expected 4 whitespace-separated fields, got {len(parts)}")
        qid, _iter_col, doc_id, grade_str = parts
        try:
            grade = int(grade_str)
        except ValueError as exc:
            raise _fail(path, lineno, f"non-integer grade {grade_str!r}") from exc
        try:
            qrels.add(qid, doc_id, grade)
        except ValueError as exc:
            raise _fail(path, lineno, str(exc)) from exc
    return qrels


def write_run(run: RunList, path: Path | str) -> None:
    """Write `qid Q0 docid rank score tag` lines, scores to 6 decimals."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid, rows in run.entries.items():
            for row in rows:
                fh.write(f"{qid} Q0 {row.doc_id} {row.rank} {row.score:.6f} {run.tag}\n")


def read_run(path: Path | str) -> RunList:
    """Read a TREC run file, enforcing rank/score ordering per query."""
    per_query: dict[str, list[RunEntry]] = {}
    tag = ""
    for lineno, line in _iter_lines(path):
        parts = line.split()
        if len(parts) != 6:
            raise _fail(path, lineno, f"expected 6 fields, got {len(parts)}")
        qid, _q0, doc_id, rank_str, score_str, tag = parts
        try:
            rank = int(rank_str)
            score = float(score_str)
        except ValueError as exc:
            raise _fail(path, lineno, f"bad rank/score: {exc}") from exc
        per_query.setdefault(qid, []).append(RunEntry(doc_id=doc_id, score=score, rank=rank))
    run = RunList(tag=tag)
    for qid, rows in per_query.items():
        try:
            run.add_query(qid, rows)
        except ValueError as exc:
            raise DataFormatError(f"{path}: {exc}") from exc
    return run


def load_pool(path: Path | str) -> list[ExemplarPair]:
    """Load a jsonl exemplar pool (`query`, `passage`, optional provenance)."""
    pairs: list[ExemplarPair] = []
    for lineno, line in _iter_lines(path):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise _fail(path, lineno, f"invalid json: {exc}") from exc
        if "query" not in obj:
            raise _fail(path, lineno, "missing 'query' field")
        if "passage" not in obj:
            raise _fail(path, lineno, "missing 'passage' field")
        try:
            pairs.append(
                ExemplarPair(
                    query_text=str(obj["query"]),
                    passage_text=str(obj["passage"]),
                    source_query_id=obj.get("source_query_id"),
                    reranker_score=obj.get("score"),
                )
            )
        except ValueError as exc:
            raise _fail(path, lineno, str(exc)) from exc
    return pairs


def write_pool(pairs: Iterable[ExemplarPair], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            obj: dict[str, object] = {"query": pair.query_text, "passage": pair.passage_text}
            if pair.source_query_id is not None:
                obj["source_query_id"] = pair.source_query_id
            if pair.reranker_score is not None:
                obj["score"] = pair.reranker_score
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
