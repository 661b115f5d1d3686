"""Learned sparse retrieval: contextual term matching precomputed into an inverted index."""

from sparta.bm25 import Bm25Index, bm25_build, bm25_score
from sparta.core import (
    AnswerCandidate,
    CorpusRecord,
    EvalRecord,
    Query,
    Vocabulary,
    build_vocabulary,
    make_candidate,
    make_query,
    tokenize,
)
from sparta.encoder import AnswerEncoding, ToyEncoderParams, encode
from sparta.evaluation import evaluate, mrr, recall_at_k
from sparta.index import InvertedIndex, build_index, query_index, top_k_terms
from sparta.model import SpartaModel, load_model, save_model
from sparta.scoring import QueryTermTable, rank_brute_force, score
from sparta.training import TrainConfig, train

__all__ = [
    "AnswerCandidate",
    "AnswerEncoding",
    "Bm25Index",
    "CorpusRecord",
    "EvalRecord",
    "InvertedIndex",
    "Query",
    "QueryTermTable",
    "SpartaModel",
    "ToyEncoderParams",
    "TrainConfig",
    "Vocabulary",
    "bm25_build",
    "bm25_score",
    "build_index",
    "build_vocabulary",
    "encode",
    "evaluate",
    "load_model",
    "make_candidate",
    "make_query",
    "mrr",
    "query_index",
    "rank_brute_force",
    "recall_at_k",
    "save_model",
    "score",
    "tokenize",
    "top_k_terms",
    "train",
]
