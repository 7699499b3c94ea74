"""Retrieval metrics with trec_eval ndcg_cut/P/recall semantics, plus a
paired t-test for comparing runs.

Gain is the raw grade with a log2(rank+1) discount (no exponential
gain). Queries present in the qrels but missing from a run score 0 so
method comparisons share a denominator. Only rank order matters; score
magnitudes never enter the metrics.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from scipy.special import betainc

from .corpus_io import Qrels, RunEntry, RunList

logger = logging.getLogger(__name__)

METRICS = ("ndcg@10", "p@10", "recall@100")


def ndcg_at_k(rows: Sequence[RunEntry], grades: dict[str, int], k: int = 10) -> float:
    """DCG over the top k divided by the ideal DCG; 0 when no grades."""
    dcg = 0.0
    for i, row in enumerate(rows[:k], start=1):
        rel = grades.get(row.doc_id, 0)
        if rel > 0:
            dcg += rel / math.log2(i + 1)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal[:k], start=1))
    return dcg / idcg if idcg > 0 else 0.0


def precision_at_k(
    rows: Sequence[RunEntry],
    grades: dict[str, int],
    k: int = 10,
    rel_threshold: int = 1,
) -> float:
    """Fraction of the top k that is relevant; k stays in the denominator."""
    hits = sum(1 for row in rows[:k] if grades.get(row.doc_id, 0) >= rel_threshold)
    return hits / k


def recall_at_k(
    rows: Sequence[RunEntry],
    grades: dict[str, int],
    k: int = 100,
    rel_threshold: int = 1,
) -> float:
    """Fraction of this query's relevant docs found in the top k."""
    relevant = {d for d, g in grades.items() if g >= rel_threshold}
    if not relevant:
        return 0.0
    found = sum(1 for row in rows[:k] if row.doc_id in relevant)
    return found / len(relevant)


@dataclass
class MetricReport:
    run_tag: str
    query_count: int
    per_query: dict[str, dict[str, float]]  # metric -> qid -> value
    means: dict[str, float]

    def to_text(self) -> str:
        width = max(len(m) for m in METRICS)
        lines = [f"run: {self.run_tag}  (n={self.query_count} queries)"]
        for metric in METRICS:
            lines.append(f"  {metric:<{width}}  {self.means[metric]:.4f}")
        return "\n".join(lines)

    def write_jsonl(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {"run_tag": self.run_tag, "query_count": self.query_count, "means": self.means}
                )
                + "\n"
            )
            for metric in METRICS:
                for qid, value in self.per_query[metric].items():
                    fh.write(json.dumps({"metric": metric, "query_id": qid, "value": value}) + "\n")


def evaluate(run: RunList, qrels: Qrels, rel_threshold: int = 1) -> MetricReport:
    """Score a run over every query in the qrels."""
    qids = qrels.query_ids()
    if qids and not set(qids) & set(run.query_ids()):
        logger.warning(
            "run %r and qrels share no query ids; report will be all zeros", run.tag
        )
    per_query: dict[str, dict[str, float]] = {m: {} for m in METRICS}
    for qid in qids:
        grades = qrels.grades_for(qid)
        rows = run.entries.get(qid, [])
        per_query["ndcg@10"][qid] = ndcg_at_k(rows, grades, 10)
        per_query["p@10"][qid] = precision_at_k(rows, grades, 10, rel_threshold)
        per_query["recall@100"][qid] = recall_at_k(rows, grades, 100, rel_threshold)
    n = len(qids)
    means = {
        m: (sum(per_query[m].values()) / n if n else 0.0) for m in METRICS
    }
    return MetricReport(run_tag=run.tag, query_count=n, per_query=per_query, means=means)


@dataclass(frozen=True)
class SignificanceResult:
    metric: str
    mean_diff: float
    t_statistic: float
    degrees_of_freedom: int
    p_value: float
    significant: bool  # two-tailed, alpha = 0.05

    def to_text(self) -> str:
        marker = "significant" if self.significant else "not significant"
        return (
            f"{self.metric}: mean diff {self.mean_diff:+.4f}, "
            f"t = {self.t_statistic:.4f} (df={self.degrees_of_freedom}), "
            f"p = {self.p_value:.4f} ({marker} at alpha=0.05)"
        )


def paired_t_test(
    values_a: dict[str, float], values_b: dict[str, float], metric: str = ""
) -> SignificanceResult:
    """Two-tailed paired t-test over per-query metric values.

    p comes from the Student t survival function expressed through the
    regularized incomplete beta function I_{df/(df+t^2)}(df/2, 1/2).
    """
    if set(values_a) != set(values_b):
        diff = sorted(set(values_a) ^ set(values_b))
        raise ValueError(f"query sets differ; symmetric difference: {diff}")
    qids = sorted(values_a)
    n = len(qids)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 paired values")
    diffs = [values_a[q] - values_b[q] for q in qids]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    sd = math.sqrt(var)
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            t, p = 0.0, 1.0
        else:
            t = math.inf if mean > 0 else -math.inf
            p = 0.0
    else:
        t = mean / (sd / math.sqrt(n))
        p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return SignificanceResult(
        metric=metric,
        mean_diff=mean,
        t_statistic=t,
        degrees_of_freedom=df,
        p_value=p,
        significant=p <= 0.05,
    )
