"""Text analysis pipeline shared by indexing and query processing.

Pinned deterministic chain: lowercase → split on non-alphanumeric →
drop stopwords → Porter stem. All corpora go through the same chain so
index statistics and fixtures are reproducible byte-for-byte.
"""
from __future__ import annotations

import re

from . import porter

# Lucene's default English stop set (33 words).
STOPWORDS = frozenset(
    """
    a an and are as at be but by for if in into is it no not of on or
    such that the their then there these they this to was will with
    """.split()
)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Analyze `text` into index terms. Empty output is allowed."""
    return [
        porter.stem(tok)
        for tok in _TOKEN_RE.findall(text.lower())
        if tok not in STOPWORDS
    ]
