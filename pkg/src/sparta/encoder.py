"""Contextual answer encoder.

The built-in encoder is deliberately small: each position averages the
token embeddings in a ``±window`` neighbourhood, adds a segment embedding
(answer vs. context) and passes the result through ``tanh(proj @ h + bias)``.
It is differentiable everywhere, so its gradients can be written by hand.
Real transformer outputs can be plugged in through :func:`import_encodings`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sparta.core import AnswerCandidate, CorpusError, Vocabulary

DEFAULT_DIM = 64
DEFAULT_WINDOW = 2
INIT_STD = 0.02


@dataclass(frozen=True)
class AnswerEncoding:
    """Token-level vectors ``s_j`` for one candidate.

    ``answer_mask`` flags the positions that belong to the answer sentence;
    it is all-true for imported encodings that carry no segment info.
    """

    answer_id: int
    vectors: np.ndarray
    answer_mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-d, got shape {self.vectors.shape}")
        if self.answer_mask is not None and self.answer_mask.shape != (len(self.vectors),):
            raise ValueError("answer_mask length must equal the number of vectors")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass
class ToyEncoderParams:
    token_table: np.ndarray  # (V, d)
    segment_table: np.ndarray  # (2, d)
    proj: np.ndarray  # (d, d)
    proj_bias: np.ndarray  # (d,)
    window: int = DEFAULT_WINDOW

    def __post_init__(self) -> None:
        if self.window < 0:
            raise ValueError("window must be >= 0")
        d = self.token_table.shape[1]
        if self.segment_table.shape != (2, d):
            raise ValueError(f"segment_table must be (2, {d})")
        if self.proj.shape != (d, d) or self.proj_bias.shape != (d,):
            raise ValueError(f"proj must be ({d}, {d}) and proj_bias ({d},)")
        for name in ("token_table", "segment_table", "proj", "proj_bias"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def vocab_size(self) -> int:
        return self.token_table.shape[0]

    @property
    def dim(self) -> int:
        return self.token_table.shape[1]

    @classmethod
    def initialize(
        cls,
        vocab_size: int,
        dim: int = DEFAULT_DIM,
        window: int = DEFAULT_WINDOW,
        rng: np.random.Generator | None = None,
        pretrained: np.ndarray | None = None,
    ) -> ToyEncoderParams:
        """Transformer-style init: N(0, 0.02) tables, zero segments and bias.

        With ``pretrained`` term vectors (``vocab_size x d``) the token table
        starts from them and ``proj`` starts near the identity, so the
        pretrained geometry reaches the output instead of being scrambled by
        a random projection. ``dim`` is then taken from ``pretrained``.
        """
        rng = rng if rng is not None else np.random.default_rng(0)
        if pretrained is not None:
            pretrained = np.asarray(pretrained, dtype=np.float64)
            if pretrained.ndim != 2 or pretrained.shape[0] != vocab_size:
                raise ValueError("pretrained vectors must have one row per vocabulary term")
            if not np.all(np.isfinite(pretrained)):
                raise ValueError("pretrained vectors must be finite")
            dim = pretrained.shape[1]
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if pretrained is None:
            token_table = rng.normal(0.0, INIT_STD, size=(vocab_size, dim))
            proj = rng.normal(0.0, INIT_STD, size=(dim, dim))
        else:
            token_table = pretrained.copy()
            proj = np.eye(dim) + rng.normal(0.0, INIT_STD, size=(dim, dim))
        return cls(
            token_table=token_table,
            segment_table=np.zeros((2, dim)),
            proj=proj,
            proj_bias=np.zeros(dim),
            window=window,
        )

    def copy(self) -> ToyEncoderParams:
        return ToyEncoderParams(
            self.token_table.copy(),
            self.segment_table.copy(),
            self.proj.copy(),
            self.proj_bias.copy(),
            self.window,
        )


@dataclass
class EncoderCache:
    """Intermediates kept from the forward pass for :func:`encode_backward`."""

    token_ids: np.ndarray
    labels: np.ndarray
    averaging: np.ndarray  # (n, n) band matrix, row j averages the window of j
    hidden: np.ndarray  # h_j before projection
    output: np.ndarray  # s_j


def _window_matrix(n: int, window: int) -> np.ndarray:
    idx = np.arange(n)
    band = (np.abs(idx[:, None] - idx[None, :]) <= window).astype(np.float64)
    return band / band.sum(axis=1, keepdims=True)


def encode_with_cache(
    candidate: AnswerCandidate, params: ToyEncoderParams
) -> tuple[AnswerEncoding, EncoderCache]:
    ids = np.fromiter(candidate.tokens, dtype=np.int64)
    if ids.size and (ids.max() >= params.vocab_size or ids.min() < 0):
        raise CorpusError("token out of vocabulary range")
    labels = np.fromiter(candidate.segment_labels, dtype=np.int64)
    avg = _window_matrix(len(ids), params.window)
    hidden = avg @ params.token_table[ids] + params.segment_table[labels]
    out = np.tanh(hidden @ params.proj.T + params.proj_bias)
    enc = AnswerEncoding(candidate.id, out, labels == 1)
    return enc, EncoderCache(ids, labels, avg, hidden, out)


def encode(candidate: AnswerCandidate, params: ToyEncoderParams) -> AnswerEncoding:
    return encode_with_cache(candidate, params)[0]


def encode_backward(
    cache: EncoderCache,
    grad_output: np.ndarray,
    params: ToyEncoderParams,
    grads: dict[str, np.ndarray],
) -> None:
    """Accumulate parameter gradients given ``dL/ds`` into ``grads`` in place."""
    dz = grad_output * (1.0 - cache.output**2)
    grads["proj"] += dz.T @ cache.hidden
    grads["proj_bias"] += dz.sum(axis=0)
    dh = dz @ params.proj
    np.add.at(grads["segment_table"], cache.labels, dh)
    np.add.at(grads["token_table"], cache.token_ids, cache.averaging.T @ dh)


def import_encodings(path: str | Path) -> dict[int, AnswerEncoding]:
    """Load precomputed token vectors from JSON lines ``{"id", "vectors"}``."""
    out: dict[int, AnswerEncoding] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            aid = int(obj["id"])
            vectors = np.asarray(obj["vectors"], dtype=np.float64)
            if vectors.ndim != 2 or vectors.shape[0] == 0:
                raise CorpusError(f"{path}:{lineno}: vectors must be a non-empty 2-d array")
            if not np.all(np.isfinite(vectors)):
                raise CorpusError(f"{path}:{lineno}: non-finite embedding values")
            if dim is None:
                dim = vectors.shape[1]
            elif vectors.shape[1] != dim:
                raise CorpusError(f"{path}:{lineno}: inconsistent embedding dim")
            if aid in out:
                raise CorpusError(f"{path}:{lineno}: duplicate answer id {aid}")
            out[aid] = AnswerEncoding(aid, vectors)
    return out


def load_term_vectors(path: str | Path) -> tuple[Vocabulary, np.ndarray]:
    """Read pretrained term vectors from JSON lines ``{"term", "vector"}``.

    The vocabulary keeps file order, so row ``i`` belongs to term id ``i``.
    """
    terms: list[str] = []
    rows: list[np.ndarray] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            vec = np.asarray(obj["vector"], dtype=np.float64)
            if vec.ndim != 1 or (rows and len(vec) != len(rows[0])):
                raise CorpusError(f"{path}:{lineno}: inconsistent embedding dim")
            if not np.all(np.isfinite(vec)):
                raise CorpusError(f"{path}:{lineno}: non-finite embedding values")
            terms.append(str(obj["term"]))
            rows.append(vec)
    if not rows:
        raise CorpusError(f"{path}: no term vectors")
    try:
        vocab = Vocabulary(tuple(terms))
    except ValueError as exc:
        raise CorpusError(f"{path}: {exc}") from exc
    return vocab, np.stack(rows)


def save_term_vectors(vocab: Vocabulary, vectors: np.ndarray, path: str | Path) -> None:
    if vectors.shape[0] != len(vocab):
        raise ValueError("one vector per vocabulary term is required")
    with open(path, "w", encoding="utf-8") as f:
        for term, row in zip(vocab.terms, vectors):
            f.write(json.dumps({"term": term, "vector": [float(x) for x in row]}) + "\n")
