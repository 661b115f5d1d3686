"""Vocabulary, tokenization and the answer-candidate data model.

Everything here is immutable once built and shared by the encoder, the
scoring functions, both indexes and the evaluation harness.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

Tokenizer = Callable[[str], list[str]]

DEFAULT_MAX_LEN = 512

_TOKEN_RE = re.compile(r"[^\W_]+")


class CorpusError(ValueError):
    """Raised for malformed corpus, query or vocabulary input."""


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into alphanumeric runs.

    Whitespace and punctuation (underscore included) both act as
    boundaries and are discarded.

    >>> tokenize("Bill Gates founded Microsoft.")
    ['bill', 'gates', 'founded', 'microsoft']
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Ordered set of lowercase terms with dense ids ``0..V-1``.

    Out-of-vocabulary lookups return ``None``; callers drop such tokens.
    """

    terms: tuple[str, ...]
    term_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        mapping: dict[str, int] = {}
        for i, term in enumerate(self.terms):
            if not term or any(ch.isspace() for ch in term):
                raise CorpusError(f"invalid vocabulary term {term!r}")
            if term != term.lower():
                raise CorpusError(f"vocabulary term {term!r} is not lowercase")
            if term in mapping:
                raise CorpusError(f"duplicate vocabulary term {term!r}")
            mapping[term] = i
        object.__setattr__(self, "term_to_id", mapping)

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: object) -> bool:
        return isinstance(term, str) and term.lower() in self.term_to_id

    def lookup(self, term: str) -> int | None:
        return self.term_to_id.get(term.lower())

    def term(self, term_id: int) -> str:
        return self.terms[term_id]

    def ids(self, tokens: Iterable[str]) -> tuple[list[int], int]:
        """Map tokens to ids, returning ``(ids, dropped_oov_count)``."""
        out: list[int] = []
        dropped = 0
        for tok in tokens:
            i = self.term_to_id.get(tok.lower())
            if i is None:
                dropped += 1
            else:
                out.append(i)
        return out, dropped

    @property
    def fingerprint(self) -> int:
        """64-bit checksum of the ordered term list."""
        h = hashlib.blake2b(digest_size=8)
        for term in self.terms:
            h.update(term.encode("utf-8"))
            h.update(b"\x00")
        return int.from_bytes(h.digest(), "little")


def build_vocabulary(
    texts: Iterable[str],
    min_count: int = 1,
    tokenizer: Tokenizer = tokenize,
) -> Vocabulary:
    """Build a vocabulary from raw texts.

    Terms occurring at least ``min_count`` times are kept, ordered by
    descending count and then lexicographically.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    n_texts = 0
    for text in texts:
        n_texts += 1
        counts.update(tok.lower() for tok in tokenizer(text))
    if n_texts == 0:
        raise CorpusError("empty corpus")
    kept = [t for t, c in counts.items() if c >= min_count]
    if not kept:
        raise CorpusError("no terms survive min_count")
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(tuple(kept))


@dataclass(frozen=True)
class CorpusRecord:
    """One line of the corpus file, before tokenization."""

    id: int
    answer: str
    context_left: str = ""
    context_right: str = ""
    doc_id: str | None = None

    @property
    def texts(self) -> tuple[str, str, str]:
        return (self.context_left, self.answer, self.context_right)


@dataclass(frozen=True)
class AnswerCandidate:
    """An answer sentence with its surrounding context, as token ids.

    ``doc_id`` names the source document; candidates with equal ``doc_id``
    (``None`` included) count as coming from the same document.
    """

    id: int
    answer_tokens: tuple[int, ...]
    context_left_tokens: tuple[int, ...] = ()
    context_right_tokens: tuple[int, ...] = ()
    doc_id: str | None = None

    def __post_init__(self) -> None:
        if self.id < 0:
            raise CorpusError(f"answer id must be non-negative, got {self.id}")
        if not self.answer_tokens:
            raise CorpusError(f"answer {self.id} has no in-vocabulary tokens")

    @property
    def tokens(self) -> tuple[int, ...]:
        return self.context_left_tokens + self.answer_tokens + self.context_right_tokens

    @property
    def segment_labels(self) -> tuple[int, ...]:
        return (
            (0,) * len(self.context_left_tokens)
            + (1,) * len(self.answer_tokens)
            + (0,) * len(self.context_right_tokens)
        )

    def __len__(self) -> int:
        return (
            len(self.context_left_tokens)
            + len(self.answer_tokens)
            + len(self.context_right_tokens)
        )


@dataclass(frozen=True)
class Query:
    raw_text: str
    token_ids: tuple[int, ...]
    dropped_oov_count: int = 0
    vocab_fingerprint: int | None = None

    def __len__(self) -> int:
        return len(self.token_ids)


def make_query(text: str, vocab: Vocabulary, tokenizer: Tokenizer = tokenize) -> Query:
    ids, dropped = vocab.ids(tokenizer(text))
    return Query(text, tuple(ids), dropped, vocab.fingerprint)


def make_candidate(
    record: CorpusRecord,
    vocab: Vocabulary,
    tokenizer: Tokenizer = tokenize,
    max_len: int | None = DEFAULT_MAX_LEN,
) -> AnswerCandidate:
    left, _ = vocab.ids(tokenizer(record.context_left))
    answer, _ = vocab.ids(tokenizer(record.answer))
    right, _ = vocab.ids(tokenizer(record.context_right))
    cand = AnswerCandidate(record.id, tuple(answer), tuple(left), tuple(right), record.doc_id)
    if max_len is not None:
        cand = truncate_to_window(cand, max_len)
    return cand


def truncate_to_window(candidate: AnswerCandidate, max_len: int) -> AnswerCandidate:
    """Trim the context evenly around the answer so the total fits ``max_len``.

    Each side gets ``(max_len - |answer|) // 2`` tokens, keeping the ones
    closest to the answer; budget a short side cannot use goes to the other.
    """
    n_answer = len(candidate.answer_tokens)
    if max_len < n_answer:
        raise CorpusError("answer longer than window")
    if len(candidate) <= max_len:
        return candidate
    left = candidate.context_left_tokens
    right = candidate.context_right_tokens
    w = (max_len - n_answer) // 2
    left_budget = w + max(0, w - len(right))
    right_budget = w + max(0, w - len(left))
    new_left = left[len(left) - min(len(left), left_budget):]
    new_right = right[: min(len(right), right_budget)]
    return AnswerCandidate(
        candidate.id, candidate.answer_tokens, new_left, new_right, candidate.doc_id
    )


# --- dense vector helpers -------------------------------------------------


def as_vector(values: Sequence[float] | np.ndarray, dim: int | None = None) -> np.ndarray:
    """Validate ``values`` as a finite float64 vector, optionally of length ``dim``."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError(f"expected a non-empty 1-d vector, got shape {vec.shape}")
    if dim is not None and vec.shape[0] != dim:
        raise ValueError(f"dimension mismatch: {vec.shape[0]} != {dim}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("vector has non-finite components")
    return vec


def dot(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


# --- file formats ----------------------------------------------------------


def _read_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def load_corpus(path: str | Path) -> list[CorpusRecord]:
    """Read a JSON-lines corpus; ids must be dense ``0..N-1`` in file order."""
    records: list[CorpusRecord] = []
    for lineno, obj in _read_jsonl(path):
        try:
            rec = CorpusRecord(
                id=int(obj["id"]),
                answer=str(obj["answer"]),
                context_left=str(obj.get("context_left", "") or ""),
                context_right=str(obj.get("context_right", "") or ""),
                doc_id=None if obj.get("doc_id") is None else str(obj["doc_id"]),
            )
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
        if rec.id != len(records):
            raise CorpusError(
                f"{path}:{lineno}: answer ids must be dense and in order, "
                f"expected {len(records)} got {rec.id}"
            )
        records.append(rec)
    return records


def save_corpus(records: Iterable[CorpusRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            obj = {
                "id": r.id,
                "answer": r.answer,
                "context_left": r.context_left,
                "context_right": r.context_right,
            }
            if r.doc_id is not None:
                obj["doc_id"] = r.doc_id
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class EvalRecord:
    qid: int
    question: str
    answer_id: int


def load_queries(path: str | Path) -> list[EvalRecord]:
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            out.append(EvalRecord(int(obj["qid"]), str(obj["question"]), int(obj["answer_id"])))
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
    return out


def save_queries(records: Iterable[EvalRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(
                json.dumps({"qid": r.qid, "question": r.question, "answer_id": r.answer_id})
                + "\n"
            )
