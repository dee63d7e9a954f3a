"""Graded-relevance ranking metrics (LETOR conventions).

Gain is 2^grade - 1, the discount of position i (from 1) is 1/log2(i + 1),
and a query without relevant documents scores 0.
"""
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from marlrank.errors import ShapeError


@dataclass(frozen=True)
class Ranking:
    order: np.ndarray
    source_scores: np.ndarray

    def __len__(self) -> int:
        return len(self.order)


def rank_by_score(scores: Sequence[float] | np.ndarray) -> Ranking:
    """Best-first order; equal scores keep ascending original index."""
    values = np.asarray(scores, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("scores must be a non-empty vector")
    if np.isnan(values).any():
        raise ValueError("cannot rank NaN scores")
    order = np.argsort(-values, kind="stable")
    return Ranking(order=order, source_scores=values)


def dcg_at_k(ordered_labels: Sequence[int] | np.ndarray, k: int | None = None) -> float:
    labels = np.asarray(ordered_labels, dtype=np.float64)
    if k is not None and k < 1:
        raise ValueError(f"cutoff must be positive, got {k}")
    top = labels[: len(labels) if k is None else k]
    if top.size == 0:
        return 0.0
    discounts = np.log2(np.arange(2, top.size + 2))
    return float(np.sum((2.0**top - 1.0) / discounts))


def ideal_dcg(labels: Sequence[int] | np.ndarray, k: int | None = None) -> float:
    return dcg_at_k(np.sort(np.asarray(labels))[::-1], k)


def ndcg_at_k(
    scores: Sequence[float] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    k: int | None = None,
) -> float:
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != labels.shape:
        raise ShapeError(f"{scores.size} scores for {labels.size} labels")
    best = ideal_dcg(labels, k)
    if best == 0.0:
        return 0.0
    ranking = rank_by_score(scores)
    return dcg_at_k(labels[ranking.order], k) / best


def ndcg_profile(
    scores: Sequence[float] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    cutoffs: Iterable[int] = (1, 3, 5, 10),
) -> dict[int, float]:
    return {k: ndcg_at_k(scores, labels, k) for k in cutoffs}


def mean_ndcg(
    per_query: Iterable[tuple[np.ndarray, np.ndarray]],
    cutoffs: Iterable[int] = (1, 3, 5, 10),
) -> dict[int, float]:
    """Average NDCG@k over queries, every query weighted equally."""
    cutoffs = tuple(cutoffs)
    totals = dict.fromkeys(cutoffs, 0.0)
    count = 0
    for scores, labels in per_query:
        for k, value in ndcg_profile(scores, labels, cutoffs).items():
            totals[k] += value
        count += 1
    if count == 0:
        raise ValueError("no queries to average over")
    return {k: total / count for k, total in totals.items()}
