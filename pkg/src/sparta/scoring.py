"""Token-level matching score between a bag-of-words query and an answer.

For each query term ``t`` with (non-contextual) embedding ``e_t``::

    y_t   = max_j  e_t . s_j          # best-matching answer position
    phi_t = max(0, y_t + b)           # the bias thresholds weak matches
    f     = sum_t log(phi_t + 1)

Only terms with ``y_t + b > 0`` contribute, which is what makes the
per-answer term vectors sparse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from sparta.core import Query
from sparta.encoder import AnswerEncoding


@dataclass
class QueryTermTable:
    """Query term embeddings ``E`` (one row per vocabulary term) and bias ``b``."""

    embeddings: np.ndarray
    bias: float = 0.0
    trainable_embeddings: bool = False

    def __post_init__(self) -> None:
        if self.embeddings.ndim != 2:
            raise ValueError("embeddings must be a (V, d) matrix")
        if not np.all(np.isfinite(self.embeddings)):
            raise ValueError("embeddings have non-finite entries")
        if not math.isfinite(self.bias):
            raise ValueError("bias must be finite")

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class TermMatchResult:
    y: float
    argmax_position: int


def _candidate_vectors(encoding: AnswerEncoding, answer_only_max: bool) -> np.ndarray:
    if answer_only_max and encoding.answer_mask is not None:
        return encoding.vectors[encoding.answer_mask]
    return encoding.vectors


def term_match(
    e: np.ndarray, encoding: AnswerEncoding, answer_only_max: bool = False
) -> TermMatchResult:
    """Max-pooled dot product of ``e`` against the answer's token vectors.

    Ties go to the smallest position. With ``answer_only_max`` the max runs
    over answer positions only and the returned position indexes the full
    sequence.
    """
    if len(encoding) == 0:
        raise ValueError("empty answer")
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (encoding.dim,):
        raise ValueError(f"dimension mismatch: {e.shape} vs ({encoding.dim},)")
    dots = encoding.vectors @ e
    if answer_only_max and encoding.answer_mask is not None:
        dots = np.where(encoding.answer_mask, dots, -np.inf)
    j = int(np.argmax(dots))
    return TermMatchResult(float(dots[j]), j)


def term_match_many(
    term_ids: Sequence[int] | np.ndarray,
    encoding: AnswerEncoding,
    table: QueryTermTable,
    answer_only_max: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`term_match` for several terms: returns ``(y, argmax)``."""
    if len(encoding) == 0:
        raise ValueError("empty answer")
    ids = np.asarray(term_ids, dtype=np.int64)
    dots = table.embeddings[ids] @ encoding.vectors.T
    if answer_only_max and encoding.answer_mask is not None:
        dots = np.where(encoding.answer_mask[None, :], dots, -np.inf)
    arg = np.argmax(dots, axis=1)
    return dots[np.arange(len(ids)), arg], arg


def sparse_feature(y: float | np.ndarray, b: float) -> float | np.ndarray:
    """ReLU(y + b)."""
    return np.maximum(0.0, y + b)


def score(
    query: Query,
    encoding: AnswerEncoding,
    table: QueryTermTable,
    answer_only_max: bool = False,
) -> float:
    if not query.token_ids:
        return 0.0
    y, _ = term_match_many(query.token_ids, encoding, table, answer_only_max)
    return float(np.sum(np.log1p(sparse_feature(y, table.bias))))


def rank_brute_force(
    query: Query,
    encodings: Iterable[AnswerEncoding],
    table: QueryTermTable,
    k: int,
    answer_only_max: bool = False,
    drop_zero: bool = False,
) -> list[tuple[int, float]]:
    """Score every answer directly and return the top ``k``.

    Sorted by score descending, ties by ascending answer id. ``drop_zero``
    omits answers scoring exactly 0, mirroring what an inverted index sees.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = [(enc.answer_id, score(query, enc, table, answer_only_max)) for enc in encodings]
    if drop_zero:
        scored = [(a, s) for a, s in scored if s > 0.0]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def vocabulary_term_scores(
    encoding: AnswerEncoding, table: QueryTermTable, answer_only_max: bool = False
) -> np.ndarray:
    """``log(phi_t + 1)`` for every vocabulary term ``t`` against one answer."""
    if len(encoding) == 0:
        raise ValueError("empty answer")
    vectors = _candidate_vectors(encoding, answer_only_max)
    y = (table.embeddings @ vectors.T).max(axis=1)
    return np.log1p(sparse_feature(y, table.bias))
