from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sparta.core import AnswerCandidate, Vocabulary  # noqa: E402
from sparta.encoder import ToyEncoderParams  # noqa: E402
from sparta.model import SpartaModel  # noqa: E402
from sparta.scoring import QueryTermTable  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """``acceptance(n, passed, detail)`` logs one PASS/FAIL line for criterion ``n``."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def make_vocab(size: int) -> Vocabulary:
    return Vocabulary(tuple(f"w{i}" for i in range(size)))


def random_candidates(
    rng: np.random.Generator,
    n: int,
    vocab_size: int,
    max_answer: int = 5,
    max_context: int = 4,
    doc_size: int = 5,
) -> list[AnswerCandidate]:
    def span(lo: int, hi: int) -> tuple[int, ...]:
        return tuple(int(t) for t in rng.integers(0, vocab_size, size=rng.integers(lo, hi + 1)))

    return [
        AnswerCandidate(
            i,
            span(1, max_answer),
            span(0, max_context),
            span(0, max_context),
            doc_id=f"d{i // doc_size}",
        )
        for i in range(n)
    ]


def random_model(
    rng: np.random.Generator,
    vocab_size: int,
    dim: int,
    window: int = 1,
    bias: float | None = None,
    trainable: bool = False,
    scale: float = 1.0,
) -> SpartaModel:
    """Model with all parameter groups random, at a scale where scores are nontrivial."""
    enc = ToyEncoderParams(
        token_table=rng.normal(0, scale, (vocab_size, dim)),
        segment_table=rng.normal(0, 0.3 * scale, (2, dim)),
        proj=rng.normal(0, scale / np.sqrt(dim), (dim, dim)),
        proj_bias=rng.normal(0, 0.1, dim),
        window=window,
    )
    b = float(rng.normal(0, 0.3)) if bias is None else bias
    table = QueryTermTable(rng.normal(0, scale, (vocab_size, dim)), b, trainable)
    return SpartaModel(make_vocab(vocab_size), table, enc)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
