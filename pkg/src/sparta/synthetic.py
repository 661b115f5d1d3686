"""Synthetic paraphrase QA data for desk-scale experiments.

Answers are short sentences over a small pool of content words, grouped
into documents so each sentence has its neighbours as context. Questions
pick a few of the answer's content words and swap some of them for a fixed
synonym that never occurs in the corpus, so a purely lexical ranker only
sees part of the overlap.

:func:`correlated_term_vectors` supplies the "pretrained" side of this
world: random term vectors in which each synonym pair is correlated, the
way a pretrained embedding table already places related words near each
other.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from sparta.core import CorpusRecord, EvalRecord, Vocabulary

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z")
_VOWELS = ("a", "e", "i", "o", "u")
_FILLER = ("the", "of", "and", "was", "in", "a")
_QUESTION_WORDS = ("what", "which", "who", "where", "when")


@dataclass(frozen=True)
class SyntheticQA:
    corpus: list[CorpusRecord]
    train: list[EvalRecord]
    validation: list[EvalRecord]
    heldout: list[EvalRecord]
    synonyms: dict[str, str]
    lexicon: tuple[str, ...]  # every word the generator can emit

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(self.lexicon)


def _pseudo_words(n: int, rng: np.random.Generator) -> list[str]:
    syllables = ["".join(p) for p in itertools.product(_ONSETS, _VOWELS)]
    words: set[str] = set()
    while len(words) < n:
        words.add("".join(rng.choice(syllables, size=3)))
    return sorted(words)


def make_synthetic_qa(
    num_answers: int = 100,
    num_train: int = 100,
    num_validation: int = 50,
    num_heldout: int = 50,
    sentences_per_doc: int = 5,
    vocab_words: int = 60,
    words_per_answer: int = 5,
    words_per_query: int = 3,
    synonym_rate: float = 0.5,
    seed: int = 0,
) -> SyntheticQA:
    """Generate a corpus plus train / held-out question sets.

    Every question carries at least one synonym. Training questions cycle
    through the answers; validation and held-out questions target random
    answers and are drawn independently of each other.
    """
    rng = np.random.default_rng(seed)
    words = _pseudo_words(2 * vocab_words, rng)
    order = rng.permutation(len(words))
    base = [words[i] for i in order[:vocab_words]]
    synonyms = {b: words[i] for b, i in zip(base, order[vocab_words:])}

    seen: set[frozenset[str]] = set()
    content: list[list[str]] = []
    while len(content) < num_answers:
        pick = [base[i] for i in rng.choice(vocab_words, size=words_per_answer, replace=False)]
        key = frozenset(pick)
        if key not in seen:
            seen.add(key)
            content.append(pick)

    sentences = []
    for pick in content:
        tokens = []
        for w in pick:
            tokens.append(w)
            if rng.random() < 0.5:
                tokens.append(str(rng.choice(_FILLER)))
        sentences.append(" ".join(tokens).capitalize() + ".")

    corpus = []
    for i, sent in enumerate(sentences):
        doc = i // sentences_per_doc
        first, last = doc * sentences_per_doc, min(num_answers, (doc + 1) * sentences_per_doc) - 1
        corpus.append(
            CorpusRecord(
                id=i,
                answer=sent,
                context_left=sentences[i - 1] if i > first else "",
                context_right=sentences[i + 1] if i < last else "",
                doc_id=f"doc{doc}",
            )
        )

    def question(answer_id: int) -> str:
        chosen = [content[answer_id][i] for i in rng.choice(words_per_answer, words_per_query, replace=False)]
        swap = rng.random(words_per_query) < synonym_rate
        if not swap.any():
            swap[rng.integers(words_per_query)] = True
        terms = [synonyms[w] if s else w for w, s in zip(chosen, swap)]
        return f"{rng.choice(_QUESTION_WORDS)} {' '.join(terms)}?"

    train = [EvalRecord(q, question(q % num_answers), q % num_answers) for q in range(num_train)]

    def sample(first_qid: int, count: int) -> list[EvalRecord]:
        targets = rng.choice(num_answers, size=count, replace=count > num_answers)
        return [EvalRecord(first_qid + j, question(int(a)), int(a)) for j, a in enumerate(targets)]

    validation = sample(num_train, num_validation)
    heldout = sample(num_train + num_validation, num_heldout)
    lexicon = tuple(sorted(set(words) | set(_FILLER) | set(_QUESTION_WORDS)))
    return SyntheticQA(corpus, train, validation, heldout, synonyms, lexicon)


def correlated_term_vectors(
    vocab: Vocabulary,
    synonyms: dict[str, str],
    dim: int = 64,
    correlation: float = 0.5,
    seed: int = 0,
) -> np.ndarray:
    """Random ``N(0, 1/dim)`` rows where each synonym leans toward its base word.

    ``row[syn] = c * row[base] + sqrt(1 - c^2) * noise``, so the expected
    cosine between the pair is ``c`` and every row keeps unit expected norm.
    """
    if not 0.0 <= correlation <= 1.0:
        raise ValueError("correlation must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    vectors = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(len(vocab), dim))
    for base, syn in sorted(synonyms.items()):
        i, j = vocab.lookup(base), vocab.lookup(syn)
        if i is None or j is None:
            continue
        vectors[j] = correlation * vectors[i] + np.sqrt(1.0 - correlation**2) * vectors[j]
    return vectors
