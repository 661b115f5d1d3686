"""Little-endian reading/writing helpers shared by the model and index files."""

from __future__ import annotations

import struct

import numpy as np

from sparta.core import Vocabulary


class FormatError(ValueError):
    """Raised when a binary model or index file cannot be decoded."""


class BinaryReader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated {self.what}: need {n} bytes for {field} at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, field: str) -> tuple:
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, field))

    def floats(self, count: int, field: str) -> np.ndarray:
        return np.frombuffer(self.take(4 * count, field), dtype="<f4").astype(np.float64)

    def magic(self, expected: bytes) -> None:
        got = self.take(len(expected), "magic")
        if got != expected:
            raise FormatError(f"bad magic at offset 0: expected {expected!r}, got {got!r}")

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"trailing data in {self.what} at offset {self.pos} "
                f"({len(self.data) - self.pos} bytes)"
            )


def pack_terms(vocab: Vocabulary) -> bytes:
    parts = [struct.pack("<I", len(vocab))]
    for term in vocab.terms:
        raw = term.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def read_terms(reader: BinaryReader) -> Vocabulary:
    (count,) = reader.unpack("<I", "term count")
    terms = []
    for i in range(count):
        (n,) = reader.unpack("<I", f"length of term {i}")
        offset = reader.pos
        try:
            terms.append(reader.take(n, f"term {i}").decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"term {i} at offset {offset} is not valid utf-8") from exc
    return Vocabulary(tuple(terms))
