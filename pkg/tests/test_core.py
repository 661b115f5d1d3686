import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparta.core import (
    AnswerCandidate,
    CorpusError,
    CorpusRecord,
    EvalRecord,
    Vocabulary,
    as_vector,
    build_vocabulary,
    dot,
    load_corpus,
    load_queries,
    make_candidate,
    make_query,
    save_corpus,
    save_queries,
    tokenize,
    truncate_to_window,
)


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_case_folding(self):
        assert tokenize("Hello WORLD") == ["hello", "world"]

    def test_punctuation_dropped(self):
        assert tokenize("Bill Gates founded Microsoft.") == ["bill", "gates", "founded", "microsoft"]

    def test_splits_on_punctuation_inside_words(self):
        assert tokenize("state-of-the-art, e.g. x_y") == ["state", "of", "the", "art", "e", "g", "x", "y"]

    def test_keeps_digits_and_unicode_letters(self):
        assert tokenize("Café 1998!") == ["café", "1998"]

    @given(st.text(max_size=60))
    def test_idempotent_on_joined_output(self, text):
        tokens = tokenize(text)
        assert tokenize(" ".join(tokens)) == tokens


class TestVocabulary:
    def test_counts_then_lexicographic(self):
        vocab = build_vocabulary(["a b", "a c"])
        assert vocab.terms == ("a", "b", "c")

    def test_min_count(self):
        assert build_vocabulary(["a b", "a c"], min_count=2).terms == ("a",)

    def test_nothing_survives(self):
        with pytest.raises(CorpusError, match="no terms survive min_count"):
            build_vocabulary(["x"], min_count=2)

    def test_empty_corpus(self):
        with pytest.raises(CorpusError, match="empty corpus"):
            build_vocabulary([])

    def test_bijection_and_case_insensitive_lookup(self):
        vocab = build_vocabulary(["Red red BLUE green"])
        assert [vocab.lookup(t) for t in vocab.terms] == list(range(len(vocab)))
        assert vocab.lookup("RED") == vocab.lookup("red") == 0
        assert "Blue" in vocab
        assert vocab.lookup("purple") is None

    @pytest.mark.parametrize("bad", [("a", "a"), ("",), ("a b",), ("Upper",)])
    def test_rejects_bad_terms(self, bad):
        with pytest.raises(CorpusError):
            Vocabulary(bad)

    def test_fingerprint_depends_on_order(self):
        assert Vocabulary(("a", "b")).fingerprint != Vocabulary(("b", "a")).fingerprint
        assert Vocabulary(("a", "b")).fingerprint == Vocabulary(("a", "b")).fingerprint

    @given(st.lists(st.text(alphabet="abcde ", max_size=12), min_size=1, max_size=8))
    def test_min_count_one_covers_every_token(self, texts):
        if not any(tokenize(t) for t in texts):
            return
        vocab = build_vocabulary(texts)
        assert all(tok in vocab for t in texts for tok in tokenize(t))


class TestQuery:
    def test_oov_dropped_order_kept(self):
        vocab = Vocabulary(("who", "founded", "microsoft"))
        q = make_query("Who really founded Microsoft?", vocab)
        assert q.token_ids == (0, 1, 2)
        assert q.dropped_oov_count == 1
        assert q.vocab_fingerprint == vocab.fingerprint


class TestCandidate:
    def test_segments(self):
        c = AnswerCandidate(0, (5, 6), (1,), (2, 3))
        assert c.tokens == (1, 5, 6, 2, 3)
        assert c.segment_labels == (0, 1, 1, 0, 0)
        assert len(c) == 5

    def test_empty_answer_rejected(self):
        with pytest.raises(CorpusError):
            AnswerCandidate(0, ())

    def test_from_record(self):
        vocab = build_vocabulary(["left side", "the answer", "right"])
        rec = CorpusRecord(3, "The answer.", "Left side", "right", "doc")
        c = make_candidate(rec, vocab)
        assert [vocab.term(t) for t in c.answer_tokens] == ["the", "answer"]
        assert [vocab.term(t) for t in c.context_left_tokens] == ["left", "side"]
        assert c.id == 3 and c.doc_id == "doc"


class TestTruncate:
    def _cand(self, n_answer, n_left, n_right):
        return AnswerCandidate(
            0,
            tuple(range(100, 100 + n_answer)),
            tuple(range(n_left)),
            tuple(range(200, 200 + n_right)),
        )

    def test_equal_budgets(self):
        out = truncate_to_window(self._cand(4, 10, 10), 12)
        assert out.context_left_tokens == tuple(range(6, 10))
        assert out.context_right_tokens == tuple(range(200, 204))

    def test_surplus_moves_to_other_side(self):
        out = truncate_to_window(self._cand(4, 1, 10), 12)
        assert out.context_left_tokens == (0,)
        assert out.context_right_tokens == tuple(range(200, 207))

    def test_no_op_when_short(self):
        c = self._cand(3, 2, 2)
        assert truncate_to_window(c, 7) is c

    def test_answer_too_long(self):
        with pytest.raises(CorpusError, match="answer longer than window"):
            truncate_to_window(self._cand(5, 0, 0), 4)

    @given(
        st.integers(1, 8), st.integers(0, 20), st.integers(0, 20), st.integers(0, 30)
    )
    def test_properties(self, n_answer, n_left, n_right, extra):
        c = self._cand(n_answer, n_left, n_right)
        max_len = n_answer + extra
        out = truncate_to_window(c, max_len)
        assert len(out) <= max_len
        assert out.answer_tokens == c.answer_tokens
        # kept context is contiguous and adjacent to the answer
        assert out.context_left_tokens == c.context_left_tokens[len(c.context_left_tokens) - len(out.context_left_tokens):]
        assert out.context_right_tokens == c.context_right_tokens[: len(out.context_right_tokens)]


class TestDense:
    def test_as_vector_validation(self):
        np.testing.assert_array_equal(as_vector([1, 2], 2), [1.0, 2.0])
        with pytest.raises(ValueError):
            as_vector([1, 2], 3)
        with pytest.raises(ValueError):
            as_vector([1.0, np.nan])

    def test_dot(self):
        assert dot(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0
        with pytest.raises(ValueError):
            dot(np.ones(2), np.ones(3))


class TestFiles:
    def test_corpus_round_trip(self, tmp_path):
        recs = [CorpusRecord(0, "a", "", "b", "d0"), CorpusRecord(1, "c", "x", "")]
        save_corpus(recs, tmp_path / "c.jsonl")
        assert load_corpus(tmp_path / "c.jsonl") == recs

    def test_corpus_ids_must_be_dense(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps({"id": 1, "answer": "a"}) + "\n")
        with pytest.raises(CorpusError, match="dense"):
            load_corpus(path)

    def test_corpus_missing_field_names_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps({"id": 0}) + "\n")
        with pytest.raises(CorpusError, match="c.jsonl:1"):
            load_corpus(path)

    def test_queries_round_trip(self, tmp_path):
        recs = [EvalRecord(7, "who?", 0), EvalRecord(8, "what?", 1)]
        save_queries(recs, tmp_path / "q.jsonl")
        assert load_queries(tmp_path / "q.jsonl") == recs
