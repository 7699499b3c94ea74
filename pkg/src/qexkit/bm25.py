"""Inverted index with BM25 scoring.

Robertson BM25 with the (k1+1) numerator and +1-shifted idf, so idf > 0
for every indexed term. Ties are broken by ascending doc_id to keep run
files deterministic across platforms. The index is immutable after
build; concurrent read-only queries are safe.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .analysis import tokenize
from .corpus_io import Document, RunEntry

INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0,1], got {self.b}")


@dataclass
class InvertedIndex:
    doc_ids: list[str]
    doc_lengths: list[int]
    postings: dict[str, list[tuple[int, int]]]  # term -> [(ordinal, tf)], ordinal-sorted
    n_docs: int
    avgdl: float
    ordinal_of: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self.ordinal_of:
            self.ordinal_of = {d: i for i, d in enumerate(self.doc_ids)}

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)

    def term_frequency(self, term: str, ordinal: int) -> int:
        for doc_ord, tf in self.postings.get(term, ()):
            if doc_ord == ordinal:
                return tf
        return 0


def build_index(docs: Sequence[Document]) -> InvertedIndex:
    """Index documents over their full (title + text) surface."""
    if not docs:
        raise ValueError("cannot build an index over zero documents")
    doc_ids: list[str] = []
    doc_lengths: list[int] = []
    postings: dict[str, list[tuple[int, int]]] = {}
    seen: set[str] = set()
    for ordinal, doc in enumerate(docs):
        if doc.doc_id in seen:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        terms = tokenize(doc.full_text())
        doc_ids.append(doc.doc_id)
        doc_lengths.append(len(terms))
        counts: dict[str, int] = {}
        for t in terms:
            counts[t] = counts.get(t, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((ordinal, tf))
    n = len(doc_ids)
    avgdl = sum(doc_lengths) / n
    return InvertedIndex(
        doc_ids=doc_ids,
        doc_lengths=doc_lengths,
        postings=postings,
        n_docs=n,
        avgdl=avgdl,
    )


def _length_norm(index: InvertedIndex, params: Bm25Params, ordinal: int) -> float:
    dl_ratio = index.doc_lengths[ordinal] / index.avgdl if index.avgdl > 0 else 0.0
    return params.k1 * (1.0 - params.b + params.b * dl_ratio)


def term_score(index: InvertedIndex, params: Bm25Params, term: str, ordinal: int) -> float:
    """BM25 contribution of a single query-term occurrence to one doc."""
    tf = index.term_frequency(term, ordinal)
    if tf == 0:
        return 0.0
    return index.idf(term) * tf * (params.k1 + 1.0) / (tf + _length_norm(index, params, ordinal))


def bm25_score(
    index: InvertedIndex,
    params: Bm25Params,
    query_terms: Sequence[str],
    ordinal: int,
) -> float:
    """Score one document; repeated query terms contribute per occurrence."""
    if not 0 <= ordinal < index.n_docs:
        raise IndexError(f"ordinal {ordinal} out of range for {index.n_docs} docs")
    return sum(term_score(index, params, t, ordinal) for t in query_terms)


def score_all(
    index: InvertedIndex, params: Bm25Params, query_terms: Sequence[str]
) -> list[float]:
    """Posting-list accumulation of BM25 scores for every document."""
    scores = [0.0] * index.n_docs
    for term in query_terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for ordinal, tf in plist:
            norm = _length_norm(index, params, ordinal)
            scores[ordinal] += idf * tf * (params.k1 + 1.0) / (tf + norm)
    return scores


def retrieve(
    index: InvertedIndex, params: Bm25Params, query_text: str, k: int
) -> list[RunEntry]:
    """Top-k documents for a query string; ties broken by ascending doc_id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = score_all(index, params, tokenize(query_text))
    order = sorted(range(index.n_docs), key=lambda o: (-scores[o], index.doc_ids[o]))
    return [
        RunEntry(doc_id=index.doc_ids[o], score=scores[o], rank=rank)
        for rank, o in enumerate(order[:k], start=1)
    ]


def save_index(index: InvertedIndex, directory: Path | str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": INDEX_FORMAT_VERSION,
        "kind": "bm25-inverted",
        "n_docs": index.n_docs,
        "avgdl": index.avgdl,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    with open(directory / "docs.jsonl", "w", encoding="utf-8") as fh:
        for doc_id, length in zip(index.doc_ids, index.doc_lengths):
            fh.write(json.dumps({"doc_id": doc_id, "length": length}) + "\n")
    with open(directory / "postings.jsonl", "w", encoding="utf-8") as fh:
        for term in sorted(index.postings):
            fh.write(
                json.dumps({"term": term, "postings": index.postings[term]}) + "\n"
            )


def load_index(directory: Path | str) -> InvertedIndex:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    if meta.get("format_version") != INDEX_FORMAT_VERSION or meta.get("kind") != "bm25-inverted":
        raise ValueError(f"unsupported index artifact in {directory}: {meta}")
    doc_ids: list[str] = []
    doc_lengths: list[int] = []
    with open(directory / "docs.jsonl", "r", encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            doc_ids.append(obj["doc_id"])
            doc_lengths.append(int(obj["length"]))
    postings: dict[str, list[tuple[int, int]]] = {}
    with open(directory / "postings.jsonl", "r", encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            postings[obj["term"]] = [(int(o), int(tf)) for o, tf in obj["postings"]]
    index = InvertedIndex(
        doc_ids=doc_ids,
        doc_lengths=doc_lengths,
        postings=postings,
        n_docs=int(meta["n_docs"]),
        avgdl=float(meta["avgdl"]),
    )
    _check_consistency(index)
    return index


def _check_consistency(index: InvertedIndex) -> None:
    if index.n_docs != len(index.doc_ids):
        raise ValueError("doc count mismatch in index artifact")
    expected = sum(index.doc_lengths) / index.n_docs if index.n_docs else 0.0
    if not math.isclose(index.avgdl, expected, rel_tol=0, abs_tol=1e-9):
        raise ValueError("avgdl inconsistent with stored doc lengths")
    for term, plist in index.postings.items():
        prev = -1
        for ordinal, tf in plist:
            if not 0 <= ordinal < index.n_docs:
                raise ValueError(f"posting ordinal out of range for term {term!r}")
            if ordinal <= prev:
                raise ValueError(f"postings not ordinal-sorted for term {term!r}")
            if tf > index.doc_lengths[ordinal]:
                raise ValueError(f"tf exceeds doc length for term {term!r}")
            prev = ordinal
