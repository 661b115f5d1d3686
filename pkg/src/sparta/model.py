"""The trainable model bundle and its binary file format.

Model file layout (little-endian)::

    magic "SPMD" | version u32
    term_count u32 | term_count x (byte_len u32, utf-8 bytes)
    d u32 | bias f64
    E            V*d f32, row-major
    token_table  V*d f32
    segment_table 2*d f32
    proj         d*d f32
    proj_bias    d f32
    window u32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sparta._binary import BinaryReader, FormatError, pack_terms, read_terms
from sparta.core import DEFAULT_MAX_LEN, Vocabulary
from sparta.encoder import DEFAULT_DIM, DEFAULT_WINDOW, ToyEncoderParams
from sparta.scoring import QueryTermTable

MODEL_MAGIC = b"SPMD"
MODEL_VERSION = 1

@dataclass
class SpartaModel:
    vocab: Vocabulary
    table: QueryTermTable
    encoder: ToyEncoderParams
    max_len: int = DEFAULT_MAX_LEN

    def __post_init__(self) -> None:
        v = len(self.vocab)
        if self.table.vocab_size != v or self.encoder.vocab_size != v:
            raise ValueError("query table / encoder rows must match the vocabulary size")
        if self.table.dim != self.encoder.dim:
            raise ValueError("query table and encoder dims differ")

    @classmethod
    def initialize(
        cls,
        vocab: Vocabulary,
        dim: int = DEFAULT_DIM,
        window: int = DEFAULT_WINDOW,
        seed: int = 42,
        freeze_query_embeddings: bool = True,
        max_len: int = DEFAULT_MAX_LEN,
        pretrained: np.ndarray | None = None,
    ) -> SpartaModel:
        """Fresh model whose query table starts as a copy of the token table.

        ``pretrained`` optionally supplies the starting term vectors, one
        row per vocabulary term (see :meth:`ToyEncoderParams.initialize`).
        """
        rng = np.random.default_rng(seed)
        enc = ToyEncoderParams.initialize(len(vocab), dim, window, rng, pretrained)
        table = QueryTermTable(
            enc.token_table.copy(), 0.0, trainable_embeddings=not freeze_query_embeddings
        )
        return cls(vocab, table, enc, max_len)

    @property
    def dim(self) -> int:
        return self.encoder.dim

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays keyed by name.

        Arrays are shared with the model, except ``bias`` which is a fresh
        one-element array; write it back with :meth:`set_bias_from`.
        """
        params = {
            "bias": np.array([self.table.bias]),
            "token_table": self.encoder.token_table,
            "segment_table": self.encoder.segment_table,
            "proj": self.encoder.proj,
            "proj_bias": self.encoder.proj_bias,
        }
        if self.table.trainable_embeddings:
            params["query_embeddings"] = self.table.embeddings
        return params

    def set_bias_from(self, params: dict[str, np.ndarray]) -> None:
        self.table.bias = float(params["bias"][0])

    def copy(self) -> SpartaModel:
        table = QueryTermTable(
            self.table.embeddings.copy(), self.table.bias, self.table.trainable_embeddings
        )
        return SpartaModel(self.vocab, table, self.encoder.copy(), self.max_len)

    def rounded_to_storage(self) -> SpartaModel:
        """Copy with every matrix rounded through float32, as the file stores it."""
        m = self.copy()
        for arr in (
            m.table.embeddings,
            m.encoder.token_table,
            m.encoder.segment_table,
            m.encoder.proj,
            m.encoder.proj_bias,
        ):
            arr[...] = arr.astype(np.float32)
        return m


def _pack_matrix(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def model_to_bytes(model: SpartaModel) -> bytes:
    parts = [MODEL_MAGIC, struct.pack("<I", MODEL_VERSION), pack_terms(model.vocab)]
    parts.append(struct.pack("<Id", model.dim, model.table.bias))
    enc = model.encoder
    for arr in (model.table.embeddings, enc.token_table, enc.segment_table, enc.proj, enc.proj_bias):
        parts.append(_pack_matrix(arr))
    parts.append(struct.pack("<I", enc.window))
    return b"".join(parts)


def model_from_bytes(data: bytes, max_len: int = DEFAULT_MAX_LEN) -> SpartaModel:
    r = BinaryReader(data, "model file")
    r.magic(MODEL_MAGIC)
    (version,) = r.unpack("<I", "version")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version} at offset 4")
    vocab = read_terms(r)
    v = len(vocab)
    d, bias = r.unpack("<Id", "dim/bias")
    emb = r.floats(v * d, "query embeddings").reshape(v, d)
    token_table = r.floats(v * d, "token table").reshape(v, d)
    segment_table = r.floats(2 * d, "segment table").reshape(2, d)
    proj = r.floats(d * d, "projection").reshape(d, d)
    proj_bias = r.floats(d, "projection bias")
    (window,) = r.unpack("<I", "window")
    r.finish()
    enc = ToyEncoderParams(token_table, segment_table, proj, proj_bias, window)
    return SpartaModel(vocab, QueryTermTable(emb, bias), enc, max_len)


def save_model(model: SpartaModel, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path: str | Path, max_len: int = DEFAULT_MAX_LEN) -> SpartaModel:
    return model_from_bytes(Path(path).read_bytes(), max_len)
