"""Deterministic dependency-free model backends.

These honor the full serving contract (unit-norm embeddings, pointwise
rerank scores, beam-search decoding with repetition controls) without
neural weights, so the server and its clients can be exercised on any
machine. Same request, same output, always.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np


class ToyEmbedder:
    """Hashed bag-of-tokens encoder with unit-normalized output."""

    def __init__(self, dim: int = 32, max_input_tokens: int = 512) -> None:
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.max_input_tokens = max_input_tokens

    def encode(self, texts: list[str]) -> tuple[np.ndarray, list[int]]:
        """Returns (matrix, indices of truncated inputs)."""
        matrix = np.zeros((len(texts), self.dim), dtype=np.float64)
        truncated: list[int] = []
        for i, text in enumerate(texts):
            tokens = text.lower().split()
            if len(tokens) > self.max_input_tokens:
                tokens = tokens[: self.max_input_tokens]
                truncated.append(i)
            for tok in tokens:
                digest = hashlib.sha1(tok.encode("utf-8")).digest()
                matrix[i, digest[0] % self.dim] += 1.0 if digest[2] % 2 else -1.0
                matrix[i, digest[1] % self.dim] += 0.5
            norm = float(np.linalg.norm(matrix[i]))
            if norm == 0.0:
                matrix[i, 0] = 1.0
            else:
                matrix[i] /= norm
        return matrix, truncated


class ToyReranker:
    """Lexical-overlap relevance: exact restatements of the query win."""

    def __init__(self, max_input_tokens: int = 512) -> None:
        self.max_input_tokens = max_input_tokens

    def score(self, query: str, texts: list[str]) -> tuple[list[float], list[int]]:
        q_tokens = set(query.lower().split())
        scores: list[float] = []
        truncated: list[int] = []
        for i, text in enumerate(texts):
            tokens = text.lower().split()
            if len(tokens) > self.max_input_tokens:
                tokens = tokens[: self.max_input_tokens]
                truncated.append(i)
            d_tokens = set(tokens)
            union = q_tokens | d_tokens
            jaccard = len(q_tokens & d_tokens) / len(union) if union else 0.0
            scores.append(jaccard)
        return scores, truncated


@dataclass(frozen=True)
class DecodingParams:
    max_new_tokens: int
    num_beams: int
    repetition_penalty: float
    no_repeat_ngram: int


class ToyGenerator:
    """Word-level beam search over a bigram model built from the prompt.

    Decoding honours the forwarded contract: at most max_new_tokens
    words come back, already-generated words are penalised, and any
    n-gram ban (no_repeat_ngram) is enforced over the generated text.
    Ties break on word order, so decoding is fully deterministic.
    """

    def __init__(self, max_input_tokens: int = 512) -> None:
        self.max_input_tokens = max_input_tokens

    def generate(self, prompt_texts: list[str], params: DecodingParams) -> tuple[str, int]:
        tokens: list[str] = []
        for text in prompt_texts:
            tokens.extend(text.split())
        tokens = tokens[-self.max_input_tokens :]
        if not tokens:
            return "", 0

        bigram: dict[str, dict[str, int]] = {}
        unigram: dict[str, int] = {}
        for i, tok in enumerate(tokens):
            unigram[tok] = unigram.get(tok, 0) + 1
            if i + 1 < len(tokens):
                bigram.setdefault(tok, {})
                nxt = tokens[i + 1]
                bigram[tok][nxt] = bigram[tok].get(nxt, 0) + 1
        total = len(tokens)
        uni_order = sorted(unigram, key=lambda w: (-unigram[w], tokens.index(w)))

        def candidates(last: str) -> list[tuple[str, float]]:
            table = bigram.get(last)
            if table:
                ordered = sorted(table, key=lambda w: (-table[w], tokens.index(w)))
                norm = sum(table.values())
                return [(w, math.log(table[w] / (norm + 1))) for w in ordered]
            return [(w, math.log(unigram[w] / (total + 1))) for w in uni_order]

        Beam = tuple[float, tuple[str, ...]]  # (score, generated words)
        beams: list[Beam] = [(0.0, ())]
        finished: list[Beam] = []
        width = max(1, params.num_beams)
        for _ in range(params.max_new_tokens):
            extended: list[Beam] = []
            for score, gen in beams:
                last = gen[-1] if gen else tokens[-1]
                banned: set[tuple[str, ...]] = set()
                n = params.no_repeat_ngram
                if n > 0 and len(gen) + 1 >= n:
                    banned = {
                        tuple(gen[i : i + n]) for i in range(len(gen) - n + 1)
                    }
                grew = False
                for word, logprob in candidates(last)[: width + 4]:
                    if n > 0 and len(gen) + 1 >= n:
                        ngram = tuple((*gen, word)[-n:])
                        if ngram in banned:
                            continue
                    if word in gen and params.repetition_penalty > 1.0:
                        logprob = logprob * params.repetition_penalty
                    extended.append((score + logprob, (*gen, word)))
                    grew = True
                if not grew:
                    finished.append((score, gen))
            if not extended:
                break
            extended.sort(key=lambda b: (-b[0], b[1]))
            beams = extended[:width]
        finished.extend(beams)
        finished.sort(key=lambda b: (-b[0] / max(1, len(b[1])), b[1]))
        best = finished[0][1]
        return " ".join(best), len(best)
