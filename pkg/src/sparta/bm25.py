"""Okapi BM25 baseline over the same candidates (answer + context tokens).

IDF uses the +1-smoothed form ``ln(1 + (N - df + 0.5) / (df + 0.5))`` so it
never goes negative.

Index file layout (little-endian)::

    magic "SPBM" | version u32 | k1 f64 | b f64
    term_count u32 | term_count x (byte_len u32, utf-8 bytes)
    num_docs u32 | num_docs x doc_length u32
    num_terms u32 | per term: term_id u32 | count u32 | count x (answer_id u32, tf u32)
"""

from __future__ import annotations

import math
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from sparta._binary import BinaryReader, FormatError, pack_terms, read_terms
from sparta.core import AnswerCandidate, Query, Vocabulary
from sparta.index import IndexMismatchError

BM25_MAGIC = b"SPBM"
BM25_VERSION = 1


@dataclass
class Bm25Index:
    postings: dict[int, tuple[np.ndarray, np.ndarray]]  # term -> (answer ids, tf)
    doc_lengths: np.ndarray
    vocab: Vocabulary
    k1: float = 1.2
    b: float = 0.75

    @property
    def num_docs(self) -> int:
        return len(self.doc_lengths)

    @property
    def avg_doc_length(self) -> float:
        return float(self.doc_lengths.mean())

    def idf(self, term_id: int) -> float:
        hit = self.postings.get(term_id)
        if hit is None:
            return 0.0
        df = len(hit[0])
        return math.log(1.0 + (self.num_docs - df + 0.5) / (df + 0.5))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Bm25Index):
            return NotImplemented
        return (
            self.vocab == other.vocab
            and (self.k1, self.b) == (other.k1, other.b)
            and np.array_equal(self.doc_lengths, other.doc_lengths)
            and self.postings.keys() == other.postings.keys()
            and all(
                np.array_equal(a, other.postings[t][0]) and np.array_equal(f, other.postings[t][1])
                for t, (a, f) in self.postings.items()
            )
        )


def bm25_build(
    candidates: Sequence[AnswerCandidate], vocab: Vocabulary, k1: float = 1.2, b: float = 0.75
) -> Bm25Index:
    if not candidates:
        raise ValueError("empty corpus")
    if sorted(c.id for c in candidates) != list(range(len(candidates))):
        raise ValueError("answer ids must be dense 0..N-1")
    lists: dict[int, list[tuple[int, int]]] = defaultdict(list)
    lengths = np.zeros(len(candidates), dtype=np.int64)
    for cand in sorted(candidates, key=lambda c: c.id):
        tokens = cand.tokens
        lengths[cand.id] = len(tokens)
        for t, tf in sorted(Counter(tokens).items()):
            lists[t].append((cand.id, tf))
    postings = {
        t: (
            np.array([a for a, _ in items], dtype=np.uint32),
            np.array([f for _, f in items], dtype=np.uint32),
        )
        for t, items in sorted(lists.items())
    }
    return Bm25Index(postings, lengths, vocab, k1, b)


def bm25_score(index: Bm25Index, query: Query, k: int) -> list[tuple[int, float]]:
    """Rank documents by BM25; query term repeats count, zero scores are dropped."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if query.vocab_fingerprint is not None and query.vocab_fingerprint != index.vocab.fingerprint:
        raise IndexMismatchError("index/vocabulary mismatch")
    norm = index.k1 * (1.0 - index.b + index.b * index.doc_lengths / index.avg_doc_length)
    acc = np.zeros(index.num_docs)
    for t in query.token_ids:
        hit = index.postings.get(t)
        if hit is None:
            continue
        ids, tf = hit[0], hit[1].astype(np.float64)
        acc[ids] += index.idf(t) * tf * (index.k1 + 1.0) / (tf + norm[ids])
    nz = np.flatnonzero(acc > 0.0)
    order = np.lexsort((nz, -acc[nz]))[:k]
    return [(int(nz[i]), float(acc[nz[i]])) for i in order]


def bm25_to_bytes(index: Bm25Index) -> bytes:
    parts = [BM25_MAGIC, struct.pack("<Idd", BM25_VERSION, index.k1, index.b)]
    parts.append(pack_terms(index.vocab))
    parts.append(struct.pack("<I", index.num_docs))
    parts.append(index.doc_lengths.astype("<u4").tobytes())
    parts.append(struct.pack("<I", len(index.postings)))
    for t in sorted(index.postings):
        ids, tf = index.postings[t]
        parts.append(struct.pack("<II", t, len(ids)))
        parts.append(np.column_stack([ids, tf]).astype("<u4").tobytes())
    return b"".join(parts)


def bm25_from_bytes(data: bytes) -> Bm25Index:
    r = BinaryReader(data, "bm25 index file")
    r.magic(BM25_MAGIC)
    version, k1, b = r.unpack("<Idd", "header")
    if version != BM25_VERSION:
        raise FormatError(f"unsupported bm25 index version {version} at offset 4")
    vocab = read_terms(r)
    (n,) = r.unpack("<I", "document count")
    lengths = np.frombuffer(r.take(4 * n, "document lengths"), "<u4").astype(np.int64)
    (num_terms,) = r.unpack("<I", "term count")
    postings = {}
    for i in range(num_terms):
        t, count = r.unpack("<II", f"posting header {i}")
        pairs = np.frombuffer(r.take(8 * count, f"postings of term {t}"), "<u4").reshape(count, 2)
        postings[t] = (pairs[:, 0].astype(np.uint32), pairs[:, 1].astype(np.uint32))
    r.finish()
    return Bm25Index(postings, lengths, vocab, k1, b)


def save_bm25(index: Bm25Index, path: str | Path) -> None:
    Path(path).write_bytes(bm25_to_bytes(index))


def load_bm25(path: str | Path) -> Bm25Index:
    return bm25_from_bytes(Path(path).read_bytes())
