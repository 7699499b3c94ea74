"""qexkit: label-free query-expansion workbench.

Stages: harvest an in-domain exemplar pool from seed queries, select
diverse demonstrations by cluster medoids, generate multi-LLM query
expansions, retrieve (BM25 or flat dense), and evaluate with
trec_eval-compatible metrics and paired significance tests.
"""

__version__ = "0.1.0"

from .bm25 import Bm25Params, InvertedIndex, bm25_score, build_index, retrieve
from .cluster import ClusterModel, kmeans, select_exemplars
from .corpus_io import Document, ExemplarPair, Qrels, Query, RunEntry, RunList
from .dense import DenseIndex, dense_retrieve
from .evaluation import evaluate, paired_t_test
from .harvest import HarvestConfig, harvest_pool
from .pipeline import PipelineConfig, augment_query, run_pipeline
from .rocchio import RocchioParams, rocchio_expand, rocchio_retrieve

__all__ = [
    "Bm25Params",
    "ClusterModel",
    "DenseIndex",
    "Document",
    "ExemplarPair",
    "HarvestConfig",
    "InvertedIndex",
    "PipelineConfig",
    "Qrels",
    "Query",
    "RocchioParams",
    "RunEntry",
    "RunList",
    "augment_query",
    "bm25_score",
    "build_index",
    "dense_retrieve",
    "evaluate",
    "harvest_pool",
    "kmeans",
    "paired_t_test",
    "retrieve",
    "rocchio_expand",
    "rocchio_retrieve",
    "run_pipeline",
    "select_exemplars",
]
