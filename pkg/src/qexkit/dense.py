"""Exact flat dense retrieval over unit-normalized embeddings."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus_io import RunEntry

DENSE_FORMAT_VERSION = 1
_NORM_TOL = 1e-6


@dataclass
class DenseIndex:
    doc_ids: list[str]
    matrix: np.ndarray  # (n_docs, dim), rows unit-norm

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise ValueError("dense matrix must be 2-D")
        if len(self.doc_ids) != self.matrix.shape[0]:
            raise ValueError("doc_ids and matrix row count differ")
        norms = np.linalg.norm(self.matrix, axis=1)
        if not np.all(np.abs(norms - 1.0) <= _NORM_TOL):
            raise ValueError("dense index rows must be unit-normalized")

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])


def normalize(vec: np.ndarray) -> np.ndarray:
    """L2-normalize; an all-zero vector is returned unchanged."""
    arr = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    return arr if norm == 0.0 else arr / norm


def build_dense_index(doc_ids: Sequence[str], vectors: np.ndarray) -> DenseIndex:
    matrix = np.asarray(vectors, dtype=np.float64)
    matrix = np.apply_along_axis(normalize, 1, matrix)
    return DenseIndex(doc_ids=list(doc_ids), matrix=matrix)


def dense_retrieve(dense: DenseIndex, query_vec: np.ndarray, k: int) -> list[RunEntry]:
    """Top-k by inner product (cosine on unit vectors); ties by ascending doc_id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    qvec = np.asarray(query_vec, dtype=np.float64)
    if qvec.shape != (dense.dim,):
        raise ValueError(f"query vector has shape {qvec.shape}, index dim is {dense.dim}")
    scores = dense.matrix @ qvec
    order = sorted(range(len(dense.doc_ids)), key=lambda i: (-scores[i], dense.doc_ids[i]))
    return [
        RunEntry(doc_id=dense.doc_ids[i], score=float(scores[i]), rank=rank)
        for rank, i in enumerate(order[:k], start=1)
    ]


def save_dense_index(dense: DenseIndex, directory: Path | str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": DENSE_FORMAT_VERSION,
        "kind": "dense-flat",
        "n_docs": len(dense.doc_ids),
        "dim": dense.dim,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    (directory / "doc_ids.json").write_text(
        json.dumps(dense.doc_ids, ensure_ascii=False), encoding="utf-8"
    )
    np.save(directory / "vectors.npy", dense.matrix)


def load_dense_index(directory: Path | str) -> DenseIndex:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    if meta.get("format_version") != DENSE_FORMAT_VERSION or meta.get("kind") != "dense-flat":
        raise ValueError(f"unsupported dense artifact in {directory}: {meta}")
    doc_ids = json.loads((directory / "doc_ids.json").read_text(encoding="utf-8"))
    matrix = np.load(directory / "vectors.npy")
    return DenseIndex(doc_ids=doc_ids, matrix=matrix)
