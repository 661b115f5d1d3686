"""Retrieval QA metrics: MRR and Recall@k with a single gold answer per query."""

from __future__ import annotations

import json
from typing import Callable, Collection, Sequence

from sparta.core import EvalRecord

Ranker = Callable[[str, int], Sequence[tuple[int, float]]]
"""``ranker(question, k)`` returns up to ``k`` ``(answer_id, score)`` pairs, best first."""

DEFAULT_K_LIST = (1, 5, 10)


def _gold_rank(ranking: Sequence[int], gold: int) -> int | None:
    for pos, aid in enumerate(ranking, 1):
        if aid == gold:
            return pos
    return None


def _check(rankings: Sequence[Sequence[int]], gold: Sequence[int]) -> None:
    if not gold:
        raise ValueError("empty query set")
    if len(rankings) != len(gold):
        raise ValueError(f"{len(rankings)} rankings for {len(gold)} queries")


def mrr(rankings: Sequence[Sequence[int]], gold: Sequence[int]) -> float:
    """Mean of 1/rank of the gold id; a query whose gold is missing adds 0."""
    _check(rankings, gold)
    total = 0.0
    for ranking, g in zip(rankings, gold):
        rank = _gold_rank(ranking, g)
        if rank is not None:
            total += 1.0 / rank
    return total / len(gold)


def recall_at_k(rankings: Sequence[Sequence[int]], gold: Sequence[int], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    _check(rankings, gold)
    hits = sum(1 for ranking, g in zip(rankings, gold) if g in list(ranking)[:k])
    return hits / len(gold)


def evaluate(
    ranker: Ranker,
    records: Sequence[EvalRecord],
    answer_ids: Collection[int],
    k_list: Sequence[int] = DEFAULT_K_LIST,
    depth: int | None = None,
) -> dict:
    """Run every question through ``ranker`` and build the metrics report.

    Rankings are requested ``depth`` deep, defaulting to ``max(k_list)``, so
    the reported MRR is cut off at the same depth as the largest recall.
    """
    if not records:
        raise ValueError("empty query set")
    if not k_list or min(k_list) < 1:
        raise ValueError("k_list must hold positive integers")
    for rec in records:
        if rec.answer_id not in answer_ids:
            raise ValueError(f"qid {rec.qid}: answer_id {rec.answer_id} is not in the corpus")
    depth = depth if depth is not None else max(k_list)

    rankings = [[aid for aid, _ in ranker(rec.question, depth)] for rec in records]
    gold = [rec.answer_id for rec in records]
    per_query = []
    for rec, ranking in zip(records, rankings):
        rank = _gold_rank(ranking, rec.answer_id)
        per_query.append(
            {"qid": rec.qid, "rank": rank, "reciprocal_rank": 0.0 if rank is None else 1.0 / rank}
        )
    return {
        "mrr": mrr(rankings, gold),
        "recall": {str(k): recall_at_k(rankings, gold, k) for k in sorted(set(k_list))},
        "per_query": per_query,
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"
