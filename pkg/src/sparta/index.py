"""Precomputed per-answer term vectors and the inverted index over them.

At indexing time every vocabulary term is scored against every answer and
the positive values ``log(phi + 1)`` are cached, so a query is answered by
summing posting-list entries: no encoder runs at query time.

Index file layout (little-endian)::

    magic "SPIX" | version u32 | vocab_fingerprint u64
    num_answers u32 | top_k u32 | num_terms_with_postings u32
    per term:  term_id u32 | posting_count u32 | posting_count x (answer_id u32, score f32)
"""

from __future__ import annotations

import struct
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from sparta._binary import BinaryReader, FormatError
from sparta.core import Query, Vocabulary
from sparta.encoder import AnswerEncoding
from sparta.scoring import QueryTermTable, vocabulary_term_scores

INDEX_MAGIC = b"SPIX"
INDEX_VERSION = 1
DEFAULT_TOP_K = 2000

_HEADER = struct.Struct("<4sIQIII")
HEADER_SIZE = _HEADER.size


class IndexMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SparseTermVector:
    answer_id: int
    term_ids: np.ndarray  # uint32, strictly increasing
    scores: np.ndarray  # float32, all > 0

    def __len__(self) -> int:
        return len(self.term_ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseTermVector):
            return NotImplemented
        return (
            self.answer_id == other.answer_id
            and np.array_equal(self.term_ids, other.term_ids)
            and np.array_equal(self.scores, other.scores)
        )

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.term_ids.tolist(), self.scores.tolist()))


def build_answer_vector(
    encoding: AnswerEncoding,
    table: QueryTermTable,
    top_k: int = DEFAULT_TOP_K,
    answer_only_max: bool = False,
) -> SparseTermVector:
    """Score every vocabulary term against one answer and keep the positive ones.

    ``top_k > 0`` keeps only the ``top_k`` largest cached scores (ties to the
    smaller term id); ``top_k == 0`` keeps all.
    """
    if top_k < 0:
        raise ValueError("top_k must be >= 0")
    values = vocabulary_term_scores(encoding, table, answer_only_max).astype(np.float32)
    term_ids = np.flatnonzero(values > 0).astype(np.uint32)
    scores = values[term_ids]
    if top_k and len(term_ids) > top_k:
        # lexsort: last key is primary -> score descending, then term id ascending
        keep = np.lexsort((term_ids, -scores))[:top_k]
        keep.sort()
        term_ids, scores = term_ids[keep], scores[keep]
    return SparseTermVector(encoding.answer_id, term_ids, scores)


@dataclass
class InvertedIndex:
    """Term id -> (answer ids ascending, cached float32 scores)."""

    postings: dict[int, tuple[np.ndarray, np.ndarray]]
    num_answers: int
    vocab_fingerprint: int
    top_k: int = 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InvertedIndex):
            return NotImplemented
        if (self.num_answers, self.vocab_fingerprint, self.top_k) != (
            other.num_answers,
            other.vocab_fingerprint,
            other.top_k,
        ) or self.postings.keys() != other.postings.keys():
            return False
        return all(
            np.array_equal(a, other.postings[t][0])
            and np.array_equal(s.view(np.uint32), other.postings[t][1].view(np.uint32))
            for t, (a, s) in self.postings.items()
        )

    def answer_vector(self, answer_id: int) -> SparseTermVector:
        """Rebuild one answer's term vector from the postings."""
        if not 0 <= answer_id < self.num_answers:
            raise KeyError(f"unknown answer id {answer_id}")
        terms, scores = [], []
        for t in sorted(self.postings):
            ids, vals = self.postings[t]
            pos = np.searchsorted(ids, answer_id)
            if pos < len(ids) and ids[pos] == answer_id:
                terms.append(t)
                scores.append(vals[pos])
        return SparseTermVector(
            answer_id, np.array(terms, dtype=np.uint32), np.array(scores, dtype=np.float32)
        )

    @property
    def num_postings(self) -> int:
        return sum(len(a) for a, _ in self.postings.values())


def index_from_vectors(
    vectors: Iterable[SparseTermVector], num_answers: int, vocab_fingerprint: int, top_k: int
) -> InvertedIndex:
    lists: dict[int, tuple[list[int], list[np.float32]]] = defaultdict(lambda: ([], []))
    for vec in sorted(vectors, key=lambda v: v.answer_id):
        for t, s in zip(vec.term_ids.tolist(), vec.scores):
            ids, vals = lists[t]
            ids.append(vec.answer_id)
            vals.append(s)
    postings = {
        t: (np.array(ids, dtype=np.uint32), np.array(vals, dtype=np.float32))
        for t, (ids, vals) in sorted(lists.items())
    }
    return InvertedIndex(postings, num_answers, vocab_fingerprint, top_k)


def build_index(
    encodings: Sequence[AnswerEncoding],
    table: QueryTermTable,
    vocab: Vocabulary,
    top_k: int = DEFAULT_TOP_K,
    answer_only_max: bool = False,
    workers: int = 1,
) -> InvertedIndex:
    """Build the inverted index; answer ids must be exactly ``0..N-1``."""
    ids = sorted(e.answer_id for e in encodings)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate answer id")
    if ids != list(range(len(ids))):
        raise ValueError("answer ids must be dense 0..N-1")
    if table.vocab_size != len(vocab):
        raise ValueError("query table does not match the vocabulary")

    def one(enc: AnswerEncoding) -> SparseTermVector:
        return build_answer_vector(enc, table, top_k, answer_only_max)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            vectors = list(pool.map(one, encodings))
    else:
        vectors = [one(e) for e in encodings]
    return index_from_vectors(vectors, len(ids), vocab.fingerprint, top_k)


def query_index(index: InvertedIndex, query: Query, k: int) -> list[tuple[int, float]]:
    """Sum cached scores over the query terms (with multiplicity) and rank.

    Answers that accumulate nothing are left out. Ties break by ascending
    answer id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if query.vocab_fingerprint is not None and query.vocab_fingerprint != index.vocab_fingerprint:
        raise IndexMismatchError("index/vocabulary mismatch")
    acc = np.zeros(index.num_answers, dtype=np.float64)
    for t in query.token_ids:
        hit = index.postings.get(t)
        if hit is not None:
            acc[hit[0]] += hit[1]
    nz = np.flatnonzero(acc > 0.0)
    order = np.lexsort((nz, -acc[nz]))[:k]
    return [(int(nz[i]), float(acc[nz[i]])) for i in order]


def top_k_terms(
    source: InvertedIndex | SparseTermVector,
    vocab: Vocabulary,
    k: int,
    answer_id: int | None = None,
) -> list[tuple[str, float]]:
    """Highest-scoring terms of one answer vector, decoded to strings."""
    if isinstance(source, InvertedIndex):
        if answer_id is None:
            raise ValueError("answer_id is required when inspecting an index")
        vec = source.answer_vector(answer_id)
    else:
        if answer_id is not None and answer_id != source.answer_id:
            raise KeyError(f"unknown answer id {answer_id}")
        vec = source
    if k <= 0:
        return []
    order = np.lexsort((vec.term_ids, -vec.scores))[:k]
    return [(vocab.term(int(vec.term_ids[i])), float(vec.scores[i])) for i in order]


# --- persistence -------------------------------------------------------------


def index_to_bytes(index: InvertedIndex) -> bytes:
    parts = [
        _HEADER.pack(
            INDEX_MAGIC,
            INDEX_VERSION,
            index.vocab_fingerprint,
            index.num_answers,
            index.top_k,
            len(index.postings),
        )
    ]
    posting = np.dtype([("answer_id", "<u4"), ("score", "<f4")])
    for t in sorted(index.postings):
        ids, scores = index.postings[t]
        parts.append(struct.pack("<II", t, len(ids)))
        rec = np.empty(len(ids), dtype=posting)
        rec["answer_id"] = ids
        rec["score"] = scores
        parts.append(rec.tobytes())
    return b"".join(parts)


def index_from_bytes(data: bytes) -> InvertedIndex:
    r = BinaryReader(data, "index file")
    r.magic(INDEX_MAGIC)
    (version,) = r.unpack("<I", "version")
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported index version {version} at offset 4")
    fingerprint, num_answers, top_k, num_terms = r.unpack("<QIII", "header")
    posting = np.dtype([("answer_id", "<u4"), ("score", "<f4")])
    postings: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for i in range(num_terms):
        offset = r.pos
        term_id, count = r.unpack("<II", f"posting header {i}")
        rec = np.frombuffer(r.take(count * posting.itemsize, f"postings of term {term_id}"), posting)
        ids = rec["answer_id"].astype(np.uint32)
        if count and (np.any(np.diff(ids.astype(np.int64)) <= 0) or ids[-1] >= num_answers):
            raise FormatError(f"posting list of term {term_id} at offset {offset} is invalid")
        if term_id in postings:
            raise FormatError(f"duplicate term {term_id} at offset {offset}")
        postings[term_id] = (ids, rec["score"].astype(np.float32))
    r.finish()
    return InvertedIndex(postings, num_answers, fingerprint, top_k)


def save_index(index: InvertedIndex, path: str | Path) -> None:
    Path(path).write_bytes(index_to_bytes(index))


def load_index(path: str | Path) -> InvertedIndex:
    return index_from_bytes(Path(path).read_bytes())
