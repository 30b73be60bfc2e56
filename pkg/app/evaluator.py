"""
Offline evaluation: NDCG@k of one ranking against three label sets
(engagement labels, relabeled targets, and 1 - p from the weak labeler),
plus score-distribution diagnostics of p per engagement type.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataValidationError
from .models import ENGAGEMENT_ORDER, Engagement, EvalReport, GainFunction, QueryDoc, QueryGroup, RankerModel
from . import ranker

logger = logging.getLogger(__name__)


def _gain(values: np.ndarray, gain_function: GainFunction) -> np.ndarray:
    if gain_function == GainFunction.EXPONENTIAL:
        return np.power(2.0, values) - 1.0
    return values


def ndcg_at_k(
    group: QueryGroup,
    scores: Sequence[float],
    gains: Sequence[float],
    k: int,
    gain_function: GainFunction = GainFunction.LINEAR,
) -> float:
    """
    Rank by descending score, ties broken by ascending record_id; discount 1/log2(rank + 1).
    Returns 0 when the ideal DCG is 0.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not (len(scores) == len(gains) == group.size):
        raise DataValidationError(
            f"query '{group.query_id}': {len(scores)} scores and {len(gains)} gains for {group.size} documents"
        )
    gains = np.asarray(gains, dtype=np.float64)
    if np.any(gains < 0):
        raise DataValidationError(f"query '{group.query_id}': gains must be non-negative")
    gains = _gain(gains, gain_function)

    order = sorted(range(group.size), key=lambda i: (-float(scores[i]), group.docs[i].record_id))
    depth = min(k, group.size)
    discounts = 1.0 / np.log2(np.arange(2, depth + 2))
    dcg = float(np.sum(gains[order[:depth]] * discounts))
    idcg = float(np.sum(np.sort(gains)[::-1][:depth] * discounts))
    if idcg == 0:
        return 0.0
    # float rounding can push a perfect ordering a hair above 1
    return min(dcg / idcg, 1.0)


def evaluate(
    groups: Sequence[QueryGroup],
    model: RankerModel,
    k: int = 10,
    gain_function: GainFunction = GainFunction.LINEAR,
) -> EvalReport:
    if not groups:
        raise DataValidationError("evaluation dataset is empty")
    sums = {"original": 0.0, "effective": 0.0, "weak": 0.0}
    for group in groups:
        scores = ranker.score_batch(model, group.feature_matrix())
        sums["original"] += ndcg_at_k(group, scores, [d.y_original for d in group.docs], k, gain_function)
        sums["effective"] += ndcg_at_k(group, scores, [d.y_effective for d in group.docs], k, gain_function)
        sums["weak"] += ndcg_at_k(group, scores, [1.0 - d.p for d in group.docs], k, gain_function)
    q = len(groups)
    report = EvalReport(
        k=k,
        n_queries=q,
        gain_function=gain_function,
        ndcg_original=sums["original"] / q,
        ndcg_effective=sums["effective"] / q,
        ndcg_weak=sums["weak"] / q,
    )
    logger.info(
        f"NDCG@{k} over {q} queries: original={report.ndcg_original:.4f} "
        f"effective={report.ndcg_effective:.4f} weak={report.ndcg_weak:.4f}"
    )
    return report


def _by_engagement(docs: Sequence[QueryDoc]) -> Dict[Engagement, np.ndarray]:
    buckets: Dict[Engagement, List[float]] = {}
    for doc in docs:
        if doc.engagement is not None:
            buckets.setdefault(doc.engagement, []).append(doc.p)
    return {e: np.sort(np.asarray(buckets[e])) for e in ENGAGEMENT_ORDER if e in buckets}


def nearest_rank_quantile(sorted_values: np.ndarray, q: float) -> float:
    n = len(sorted_values)
    rank = max(1, int(math.ceil(q * n)))
    return float(sorted_values[min(rank, n) - 1])


def score_quantiles(
    docs: Sequence[QueryDoc], quantile_grid: Sequence[float]
) -> Dict[Engagement, List[Tuple[float, float]]]:
    """Nearest-rank quantiles of p per engagement type; types with no documents are omitted."""
    out = {}
    for engagement, values in _by_engagement(docs).items():
        out[engagement] = [(float(q), nearest_rank_quantile(values, q)) for q in quantile_grid]
    absent = [e.value for e in ENGAGEMENT_ORDER if e not in out]
    if absent:
        logger.warning(f"No documents for engagement types {absent}; omitted from quantiles")
    return out


def fraction_above(docs: Sequence[QueryDoc], thresholds: Sequence[float]) -> Dict[Engagement, Dict[float, float]]:
    """Share of each engagement type's documents with p strictly above each threshold."""
    return {
        engagement: {float(t): float(np.mean(values > t)) for t in thresholds}
        for engagement, values in _by_engagement(docs).items()
    }


def find_anomalies(docs: Sequence[QueryDoc], low: float = 0.2, high: float = 0.8) -> Dict[str, List[str]]:
    """Record ids worth a manual look: dismissed yet p < low, applied yet p > high."""
    return {
        "dismissed_low_p": [d.record_id for d in docs if d.engagement == Engagement.DISMISS and d.p < low],
        "applied_high_p": [d.record_id for d in docs if d.engagement == Engagement.APPLY and d.p > high],
    }


def median_p(docs: Sequence[QueryDoc], engagement: Engagement) -> Optional[float]:
    values = [d.p for d in docs if d.engagement == engagement]
    return float(np.median(values)) if values else None
