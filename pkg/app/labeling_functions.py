"""
Declarative labeling functions.

Every LF answers "does this relevance condition hold for the record?" with
Vote.POSITIVE, Vote.NEGATIVE or Vote.ABSTAIN. No polarity flip is applied
here; the weak labeler learns how each vote relates to the irrelevance label.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import TypeAdapter, ValidationError

from .config import read_yaml
from .errors import DataValidationError
from .models import Direction, LFKind, LFStats, QueryDocRecord, Taxonomy, Vote
from .schemas import (
    FeatureThresholdParams,
    LFSpec,
    OrdinalDeltaParams,
    TokenContainmentParams,
)

logger = logging.getLogger(__name__)


def eval_token_containment(record: QueryDocRecord, params: TokenContainmentParams) -> Vote:
    if not record.query_tokens:
        return Vote.ABSTAIN
    span = record.title_span_tokens()
    if span is None:
        if params.span_required:
            return Vote.ABSTAIN
        span = record.query_tokens
    title = set(record.doc_title_tokens)
    return Vote.POSITIVE if all(token in title for token in span) else Vote.NEGATIVE


def eval_ordinal_delta(record: QueryDocRecord, params: OrdinalDeltaParams) -> Vote:
    if record.user_seniority is None or record.doc_seniority is None:
        return Vote.ABSTAIN
    delta = abs(record.user_seniority - record.doc_seniority)
    return Vote.POSITIVE if delta <= params.max_delta else Vote.NEGATIVE


def taxonomy_key(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


def eval_taxonomy_match(record: QueryDocRecord, taxonomy: Taxonomy) -> Vote:
    span = record.title_span_tokens()
    if span is None or record.doc_industry_id is None:
        return Vote.ABSTAIN
    industries = taxonomy.industries_for(taxonomy_key(span))
    if industries is None:
        return Vote.ABSTAIN
    return Vote.POSITIVE if record.doc_industry_id in industries else Vote.NEGATIVE


def eval_feature_threshold(record: QueryDocRecord, params: FeatureThresholdParams) -> Vote:
    if params.feature_index >= len(record.features):
        raise DataValidationError(
            f"feature_index {params.feature_index} out of range for {len(record.features)} features "
            f"(record '{record.record_id}')"
        )
    value = record.features[params.feature_index]
    if value is None:
        return Vote.ABSTAIN
    # Both directions are boundary-inclusive
    if params.direction == Direction.GE:
        holds = value >= params.threshold
    else:
        holds = value <= params.threshold
    return Vote.POSITIVE if holds else Vote.NEGATIVE


def build_lf(spec: LFSpec, taxonomy: Optional[Taxonomy] = None) -> Callable[[QueryDocRecord], Vote]:
    if spec.kind == LFKind.TOKEN_CONTAINMENT:
        return lambda record: eval_token_containment(record, spec.params)
    if spec.kind == LFKind.ORDINAL_DELTA:
        return lambda record: eval_ordinal_delta(record, spec.params)
    if spec.kind == LFKind.TAXONOMY_MATCH:
        if taxonomy is None:
            raise DataValidationError(f"LF '{spec.name}' needs a taxonomy but none was provided")
        return lambda record: eval_taxonomy_match(record, taxonomy)
    if spec.kind == LFKind.FEATURE_THRESHOLD:
        return lambda record: eval_feature_threshold(record, spec.params)
    raise DataValidationError(f"unknown LF kind {spec.kind}")


def check_specs(specs: Sequence[LFSpec], feature_dim: Optional[int] = None):
    if not specs:
        raise DataValidationError("at least one labeling function is required")
    names = [s.name for s in specs]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise DataValidationError(f"duplicate LF names: {', '.join(duplicates)}")
    if feature_dim is not None:
        for spec in specs:
            if spec.kind == LFKind.FEATURE_THRESHOLD and spec.params.feature_index >= feature_dim:
                raise DataValidationError(
                    f"LF '{spec.name}' feature_index {spec.params.feature_index} out of range for dimension {feature_dim}"
                )


def _eval_rows(records: Sequence[QueryDocRecord], lfs: List[Callable]) -> np.ndarray:
    out = np.empty((len(records), len(lfs)), dtype=np.int8)
    for i, record in enumerate(records):
        for j, lf in enumerate(lfs):
            out[i, j] = lf(record)
    return out


def eval_all(
    records: Sequence[QueryDocRecord],
    specs: Sequence[LFSpec],
    taxonomy: Optional[Taxonomy] = None,
    workers: int = 1,
    chunk_size: int = 2048,
) -> np.ndarray:
    """n x m vote matrix (Vote values). Row order follows records, column order follows specs."""
    check_specs(specs)
    lfs = [build_lf(spec, taxonomy) for spec in specs]
    if not records:
        return np.empty((0, len(specs)), dtype=np.int8)
    if workers <= 1 or len(records) <= chunk_size:
        return _eval_rows(records, lfs)

    chunks = [records[i:i + chunk_size] for i in range(0, len(records), chunk_size)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map() yields in submission order, whatever the completion order
        parts = list(pool.map(lambda chunk: _eval_rows(chunk, lfs), chunks))
    return np.concatenate(parts, axis=0)


def compute_stats(
    votes: np.ndarray,
    seed_labels: Optional[Sequence[int]] = None,
    names: Optional[Sequence[str]] = None,
    positive_label: int = 0,
) -> List[LFStats]:
    """
    Per-LF coverage and polarity counts. With seed labels, empirical accuracy is the share of
    non-abstaining votes that agree with the label, where a POSITIVE vote asserts positive_label
    (0 = not irrelevant, for relevance-condition LFs) and a NEGATIVE vote asserts the other one.
    """
    votes = np.asarray(votes)
    n = votes.shape[0]
    m = votes.shape[1] if votes.ndim == 2 else 0
    if seed_labels is not None and len(seed_labels) != n:
        raise DataValidationError(f"{len(seed_labels)} seed labels for {n} vote rows")
    labels = None if seed_labels is None else np.asarray(seed_labels)
    names = list(names) if names is not None else [f"lf_{j}" for j in range(m)]

    stats = []
    for j in range(m):
        column = votes[:, j]
        positive = int(np.sum(column == Vote.POSITIVE))
        negative = int(np.sum(column == Vote.NEGATIVE))
        abstain = n - positive - negative
        coverage = 1.0 - abstain / n if n else 0.0
        accuracy = None
        if labels is not None and positive + negative > 0:
            asserted = np.where(column == Vote.POSITIVE, positive_label, 1 - positive_label)
            voted = column != Vote.ABSTAIN
            accuracy = float(np.sum(asserted[voted] == labels[voted])) / (positive + negative)
        if n and positive + negative == 0:
            logger.warning(f"LF '{names[j]}' abstains on all {n} records")
        stats.append(LFStats(
            name=names[j], coverage=coverage, positive=positive, negative=negative,
            abstain=abstain, empirical_accuracy=accuracy,
        ))
    return stats


def load_lf_specs(path) -> List[LFSpec]:
    raw = read_yaml(path)
    if isinstance(raw, dict):
        raw = raw.get("labeling_functions")
    if not isinstance(raw, list):
        raise DataValidationError("expected a list of labeling functions", path=str(path))
    try:
        specs = TypeAdapter(List[LFSpec]).validate_python(raw)
    except ValidationError as e:
        raise DataValidationError(f"invalid LF config: {e}", path=str(path))
    check_specs(specs)
    logger.info(f"Loaded {len(specs)} labeling functions from {Path(path).name}")
    return specs


def lf_specs_to_yaml_obj(specs: Sequence[LFSpec]) -> list:
    return [spec.model_dump(mode="json") for spec in specs]


REFERENCE_THRESHOLDS = [0.5, 0.4, 0.6, 0.5, 0.3, 0.7, 0.5]


def reference_lf_specs(feature_offset: int = 0, n_thresholds: int = len(REFERENCE_THRESHOLDS)) -> List[LFSpec]:
    """The three named archetypes plus n_thresholds threshold rules (10 LFs by default)."""
    specs = [
        LFSpec(name="title_tokens_in_doc_title", kind=LFKind.TOKEN_CONTAINMENT,
               params=TokenContainmentParams(span_required=True), serveable=True),
        LFSpec(name="seniority_within_one_level", kind=LFKind.ORDINAL_DELTA,
               params=OrdinalDeltaParams(max_delta=1)),
        LFSpec(name="title_industry_matches_taxonomy", kind=LFKind.TAXONOMY_MATCH),
    ]
    for i in range(n_thresholds):
        threshold = REFERENCE_THRESHOLDS[i % len(REFERENCE_THRESHOLDS)]
        specs.append(LFSpec(
            name=f"score_{i}_above_{threshold}",
            kind=LFKind.FEATURE_THRESHOLD,
            params=FeatureThresholdParams(feature_index=feature_offset + i, threshold=threshold, direction=Direction.GE),
            serveable=i < 2,
        ))
    return specs
