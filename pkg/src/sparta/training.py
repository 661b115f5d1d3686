"""Learning-to-rank training with sampled negatives and hand-written gradients."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from sparta.core import AnswerCandidate, Query
from sparta.encoder import EncoderCache, encode, encode_backward, encode_with_cache
from sparta.model import SpartaModel
from sparta.scoring import QueryTermTable, sparse_feature, term_match_many, vocabulary_term_scores

logger = logging.getLogger(__name__)

DEFAULT_LR = 3e-5
DEFAULT_NEGATIVES = 8
DEFAULT_NEARBY = 3


@dataclass(frozen=True)
class TrainingExample:
    query: Query
    positive: AnswerCandidate
    negatives: tuple[AnswerCandidate, ...]

    def __post_init__(self) -> None:
        if not self.negatives:
            raise ValueError("negatives must be nonempty")
        ids = [n.id for n in self.negatives]
        if len(set(ids)) != len(ids):
            raise ValueError("negatives must be mutually distinct")
        if self.positive.id in ids:
            raise ValueError("positive answer appears among the negatives")

    @property
    def candidates(self) -> tuple[AnswerCandidate, ...]:
        return (self.positive, *self.negatives)


def sample_negatives(
    positive: AnswerCandidate,
    corpus: Sequence[AnswerCandidate],
    count: int,
    rng: np.random.Generator,
    nearby_window: int = DEFAULT_NEARBY,
) -> list[AnswerCandidate]:
    """Half "nearby" negatives, half uniform-random ones.

    ``corpus[i]`` must be the candidate with id ``i``. Nearby candidates
    have an id within ``±nearby_window`` of the positive and the same
    ``doc_id``; any shortfall there is filled with random answers.
    """
    if len(corpus) <= count:
        raise ValueError("corpus too small")
    pid = positive.id
    n_nearby = count // 2
    lo, hi = max(0, pid - nearby_window), min(len(corpus) - 1, pid + nearby_window)
    nearby = [
        i for i in range(lo, hi + 1) if i != pid and corpus[i].doc_id == positive.doc_id
    ]
    if len(nearby) > n_nearby:
        nearby = sorted(rng.choice(nearby, size=n_nearby, replace=False).tolist())
    taken = set(nearby)
    taken.add(pid)
    pool = np.array([i for i in range(len(corpus)) if i not in taken], dtype=np.int64)
    randoms = rng.choice(pool, size=count - len(nearby), replace=False).tolist()
    return [corpus[i] for i in randoms + nearby]


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + float(np.log(np.sum(np.exp(x - m))))


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - np.max(x))
    return z / z.sum()


@dataclass
class _Forward:
    cache: EncoderCache
    y: np.ndarray
    argmax: np.ndarray
    phi: np.ndarray
    score: float


def _forward(
    example: TrainingExample, model: SpartaModel, answer_only_max: bool
) -> list[_Forward]:
    q = np.asarray(example.query.token_ids, dtype=np.int64)
    out = []
    for cand in example.candidates:
        enc, cache = encode_with_cache(cand, model.encoder)
        if len(q):
            y, arg = term_match_many(q, enc, model.table, answer_only_max)
        else:
            y, arg = np.zeros(0), np.zeros(0, dtype=np.int64)
        phi = sparse_feature(y, model.table.bias)
        out.append(_Forward(cache, y, arg, phi, float(np.sum(np.log1p(phi)))))
    return out


def _loss_from_scores(scores: np.ndarray, include_positive: bool) -> tuple[float, np.ndarray]:
    """Return ``(loss, dloss/dscores)``; index 0 is the positive."""
    if include_positive:
        loss = _logsumexp(scores) - scores[0]
        grad = _softmax(scores)
        grad[0] -= 1.0
    else:
        loss = _logsumexp(scores[1:]) - scores[0]
        grad = np.concatenate(([-1.0], _softmax(scores[1:])))
    return loss, grad


def loss(
    example: TrainingExample,
    model: SpartaModel,
    include_positive_in_partition: bool = True,
    answer_only_max: bool = False,
) -> float:
    """Negated ranking objective, to be minimised.

    With ``include_positive_in_partition`` (the default) this is softmax
    cross-entropy over positive + negatives. Without it the positive is left
    out of the log-sum-exp, which is unbounded below as the positive's score
    grows.
    """
    scores = np.array([f.score for f in _forward(example, model, answer_only_max)])
    return _loss_from_scores(scores, include_positive_in_partition)[0]


def loss_and_gradients(
    example: TrainingExample,
    model: SpartaModel,
    include_positive_in_partition: bool = True,
    answer_only_max: bool = False,
) -> tuple[float, dict[str, np.ndarray]]:
    fwd = _forward(example, model, answer_only_max)
    scores = np.array([f.score for f in fwd])
    value, dscores = _loss_from_scores(scores, include_positive_in_partition)

    params = model.parameters()
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    table = model.table
    q = np.asarray(example.query.token_ids, dtype=np.int64)
    e_q = table.embeddings[q]
    for f, g in zip(fwd, dscores):
        if g == 0.0 or not len(q):
            continue
        # ReLU subgradient is 0 at the kink; max-pool routes to the first argmax.
        w = g * ((f.y + table.bias) > 0.0) / (f.phi + 1.0)
        grads["bias"][0] += w.sum()
        d_out = np.zeros_like(f.cache.output)
        np.add.at(d_out, f.argmax, w[:, None] * e_q)
        if "query_embeddings" in grads:
            np.add.at(grads["query_embeddings"], q, w[:, None] * f.cache.output[f.argmax])
        encode_backward(f.cache, d_out, model.encoder, grads)
    return value, grads


def gradients(
    example: TrainingExample,
    model: SpartaModel,
    include_positive_in_partition: bool = True,
    answer_only_max: bool = False,
) -> dict[str, np.ndarray]:
    return loss_and_gradients(example, model, include_positive_in_partition, answer_only_max)[1]


@dataclass
class AdamState:
    lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update, applied to ``params`` and ``state`` in place."""
    for name, g in grads.items():
        if name not in params:
            raise ValueError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"shape mismatch for {name!r}: {g.shape} vs {params[name].shape}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, g in grads.items():
        m = state.first_moment.setdefault(name, np.zeros_like(g))
        v = state.second_moment.setdefault(name, np.zeros_like(g))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state


@dataclass
class TrainConfig:
    lr: float = DEFAULT_LR
    epochs: int = 10
    negatives: int = DEFAULT_NEGATIVES
    nearby_window: int = DEFAULT_NEARBY
    batch_size: int = 1
    seed: int = 42
    literal_loss: bool = False
    answer_only_max: bool = False
    max_steps: int | None = None


@dataclass
class TrainResult:
    model: SpartaModel
    epoch_losses: list[float]
    validation_mrr: list[float]
    best_epoch: int  # 0 means the initial parameters were kept
    steps: int


def validation_mrr(
    model: SpartaModel,
    corpus: Sequence[AnswerCandidate],
    pairs: Sequence[tuple[Query, int]],
    answer_only_max: bool = False,
) -> float:
    """MRR of full brute-force rankings, ties broken by ascending id."""
    table: QueryTermTable = model.table
    term_scores = np.stack(
        [vocabulary_term_scores(encode(c, model.encoder), table, answer_only_max) for c in corpus]
    )
    total = 0.0
    for query, gold in pairs:
        s = term_scores[:, list(query.token_ids)].sum(axis=1)
        g = s[gold]
        if g <= 0.0:
            continue
        rank = 1 + int(np.sum(s > g)) + int(np.sum(s[:gold] == g))
        total += 1.0 / rank
    return total / len(pairs)


def train(
    model: SpartaModel,
    pairs: Sequence[tuple[Query, int]],
    corpus: Sequence[AnswerCandidate],
    config: TrainConfig,
    validation: Sequence[tuple[Query, int]] | None = None,
) -> TrainResult:
    """Train ``model`` in place on ``(query, positive_id)`` pairs.

    Negatives are redrawn every epoch. When ``validation`` is given, the
    returned model is the snapshot with the best validation MRR (earliest
    on ties); otherwise it is the final one.
    """
    if not pairs:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    state = AdamState(lr=config.lr)
    params = model.parameters()
    epoch_losses: list[float] = []
    val_curve: list[float] = []
    best = (-1.0, 0, model.copy())
    steps = 0

    for epoch in range(1, config.epochs + 1):
        if config.max_steps is not None and steps >= config.max_steps:
            break
        order = rng.permutation(len(pairs))
        losses = []
        batch: dict[str, np.ndarray] | None = None
        n_in_batch = 0
        for pos, idx in enumerate(order):
            query, pid = pairs[idx]
            negs = sample_negatives(corpus[pid], corpus, config.negatives, rng, config.nearby_window)
            example = TrainingExample(query, corpus[pid], tuple(negs))
            value, grads = loss_and_gradients(
                example, model, not config.literal_loss, config.answer_only_max
            )
            losses.append(value)
            if batch is None:
                batch = grads
            else:
                for name in batch:
                    batch[name] += grads[name]
            n_in_batch += 1
            if n_in_batch == config.batch_size or pos == len(order) - 1:
                for name in batch:
                    batch[name] /= n_in_batch
                adam_step(params, batch, state)
                model.set_bias_from(params)
                steps += 1
                batch, n_in_batch = None, 0
                if config.max_steps is not None and steps >= config.max_steps:
                    break
        epoch_losses.append(float(np.mean(losses)))
        if validation:
            mrr = validation_mrr(model, corpus, validation, config.answer_only_max)
            val_curve.append(mrr)
            if mrr > best[0]:
                best = (mrr, epoch, model.copy())
        logger.info(
            "epoch %d loss %.4f%s",
            epoch,
            epoch_losses[-1],
            f" val_mrr {val_curve[-1]:.4f}" if validation else "",
        )

    if validation and val_curve:
        final, best_epoch = best[2], best[1]
    else:
        final, best_epoch = model, len(epoch_losses)
    return TrainResult(final, epoch_losses, val_curve, best_epoch, steps)
