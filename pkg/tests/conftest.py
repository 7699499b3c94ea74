from __future__ import annotations

import random

import pytest

from qexkit.corpus_io import Document, Query

# Vocabulary whose words survive the stopword list; stems may collide
# (that is fine — the oracles tokenize the same way).
_VOCAB = [
    "cat", "dog", "ran", "fast", "zebra", "lion", "tiger", "river", "stone",
    "cloud", "engine", "thermal", "energy", "heat", "plasma", "signal",
    "filter", "query", "vector", "matrix", "carbon", "oxygen", "neuron",
    "photon", "quark", "crystal", "magnet", "orbit", "fossil", "glacier",
]


def make_corpus(n_docs: int, seed: int, vocab: list[str] | None = None,
                min_len: int = 5, max_len: int = 15) -> list[Document]:
    rng = random.Random(seed)
    words = vocab or _VOCAB
    docs = []
    for i in range(n_docs):
        length = rng.randint(min_len, max_len)
        text = " ".join(rng.choice(words) for _ in range(length))
        docs.append(Document(doc_id=f"d{i:03d}", text=text))
    return docs


def make_queries(n: int, seed: int, vocab: list[str] | None = None) -> list[Query]:
    rng = random.Random(seed)
    words = vocab or _VOCAB
    queries = []
    for i in range(n):
        terms = rng.sample(words, rng.randint(1, 3))
        queries.append(Query(query_id=f"q{i:02d}", text=" ".join(terms)))
    return queries


@pytest.fixture
def hand_corpus() -> list[Document]:
    # the worked BM25 example: N=2, avgdl=2.5
    return [Document("d1", "cat sat"), Document("d2", "dog ran fast")]


@pytest.fixture
def corpus20() -> list[Document]:
    return make_corpus(20, seed=7)


@pytest.fixture
def queries10() -> list[Query]:
    return make_queries(10, seed=11)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    import re

    criterion_re = re.compile(r"^test_([ps]\d.*)")
    lines = []
    for outcome in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(outcome, []):
            name = getattr(report, "location", ("", "", ""))[2]
            match = criterion_re.match(name.split("[")[0])
            if match:
                lines.append((match.group(1).upper(), name, outcome.upper()))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for criterion, name, outcome in sorted(set(lines)):
            terminalreporter.write_line(f"{criterion:<4} {outcome:<6} ({name})")
