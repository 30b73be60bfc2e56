"""
Synthetic corpora with planted relevance.

For every document the generator first plants a binary irrelevance label, then
draws the vote each configured LF should cast (abstain / correct / wrong, per
the LF's profile) and finally writes record fields that make the LF produce
exactly that vote. Engagement is drawn from the planted label with noise, so
every pipeline stage has a known ground truth to be checked against.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import datasets
from .errors import SynthesisError
from .labeling_functions import lf_specs_to_yaml_obj, reference_lf_specs, taxonomy_key
from .models import Direction, Engagement, LFKind, QueryDocRecord, Taxonomy, Vote
from .schemas import DatasetSchema, LFProfile, LFSpec, SynthConfig

logger = logging.getLogger(__name__)

SENIORITY_LEVELS = (0, 9)

TITLES = [
    ("software engineer", "technology"),
    ("data analyst", "technology"),
    ("product manager", "technology"),
    ("staff nurse", "healthcare"),
    ("registered nurse", "healthcare"),
    ("medical assistant", "healthcare"),
    ("financial analyst", "finance"),
    ("loan officer", "finance"),
    ("truck driver", "logistics"),
    ("warehouse associate", "logistics"),
    ("sales associate", "retail"),
    ("store manager", "retail"),
    ("math teacher", "education"),
    ("school counselor", "education"),
]
INDUSTRIES = sorted({industry for _, industry in TITLES})
TITLE_MODIFIERS = ["senior", "junior", "lead", "remote", "part", "time"]
QUERY_SUFFIXES = [[], ["jobs"], ["near", "me"], ["in", "austin"], ["in", "denver"]]
GENERIC_QUERIES = [["jobs", "near", "me"], ["remote", "work"], ["hiring", "now"], ["weekend", "jobs"], ["entry", "level"]]

POSITIVE_ENGAGEMENTS = [Engagement.APPLY, Engagement.SAVE, Engagement.VIEW]
POSITIVE_ENGAGEMENT_WEIGHTS = [0.25, 0.25, 0.5]
NEGATIVE_ENGAGEMENTS = [Engagement.SKIP, Engagement.DISMISS]
NEGATIVE_ENGAGEMENT_WEIGHTS = [0.5, 0.5]


class SynthCorpus:
    def __init__(
        self,
        schema: DatasetSchema,
        lf_specs: List[LFSpec],
        taxonomy: Taxonomy,
        splits: Dict[str, Tuple[List[QueryDocRecord], List[int]]],
    ):
        self.schema = schema
        self.lf_specs = lf_specs
        self.taxonomy = taxonomy
        # split name -> (records, planted labels, 1 = irrelevant)
        self.splits = splits

    def records(self, split: str) -> List[QueryDocRecord]:
        return self.splits[split][0]

    def truth(self, split: str) -> List[int]:
        return self.splits[split][1]


def synthetic_lf_specs(m: int) -> List[LFSpec]:
    """The reference LF set cut or extended to m rules."""
    if m < 1:
        raise SynthesisError("at least one LF profile is required")
    specs = reference_lf_specs()
    if m <= len(specs):
        return specs[:m]
    n_fixed = sum(1 for s in specs if s.kind != LFKind.FEATURE_THRESHOLD)
    return reference_lf_specs(n_thresholds=m - n_fixed)


def _taxonomy() -> Taxonomy:
    return Taxonomy(title_to_industry={taxonomy_key(title.split()): {industry} for title, industry in TITLES})


class _Plan:
    """Feasibility checks and feature layout for one (specs, profiles) pair."""

    def __init__(self, specs: Sequence[LFSpec], profiles: Sequence[LFProfile], n_signal_features: int):
        if len(specs) != len(profiles):
            raise SynthesisError(f"{len(profiles)} LF profiles for {len(specs)} labeling functions")
        self.specs = list(specs)
        self.profiles = list(profiles)
        by_kind: Dict[LFKind, List[int]] = {}
        for j, spec in enumerate(specs):
            by_kind.setdefault(spec.kind, []).append(j)
        for kind in (LFKind.TOKEN_CONTAINMENT, LFKind.ORDINAL_DELTA, LFKind.TAXONOMY_MATCH):
            if len(by_kind.get(kind, [])) > 1:
                raise SynthesisError(f"at most one {kind.value} LF can be planted independently")
        self.token = by_kind.get(LFKind.TOKEN_CONTAINMENT, [None])[0]
        self.ordinal = by_kind.get(LFKind.ORDINAL_DELTA, [None])[0]
        self.taxonomy = by_kind.get(LFKind.TAXONOMY_MATCH, [None])[0]
        self.thresholds = by_kind.get(LFKind.FEATURE_THRESHOLD, [])

        if self.token is not None and not self.specs[self.token].params.span_required:
            raise SynthesisError("token_containment LFs must require a title span to be planted")

        # Token abstention removes the title span, which also forces the taxonomy LF to abstain
        self.industry_null_rate = 0.0
        if self.taxonomy is not None:
            a_tax = self.profiles[self.taxonomy].abstain_rate
            a_tok = self.profiles[self.token].abstain_rate if self.token is not None else 0.0
            if a_tax < a_tok:
                raise SynthesisError(
                    f"taxonomy LF abstain_rate {a_tax} is below token LF abstain_rate {a_tok}; "
                    f"a query without a title span makes both abstain"
                )
            self.industry_null_rate = 0.0 if a_tok >= 1.0 else (a_tax - a_tok) / (1.0 - a_tok)

        if self.ordinal is not None and self._needs_negative(self.ordinal):
            max_delta = self.specs[self.ordinal].params.max_delta
            lo, hi = SENIORITY_LEVELS
            if max_delta >= (hi - lo + 1) // 2:
                raise SynthesisError(
                    f"ordinal_delta max_delta={max_delta} cannot produce a negative vote for every user level in {SENIORITY_LEVELS}"
                )

        used = {}
        for j in self.thresholds:
            params = self.specs[j].params
            if params.feature_index in used:
                raise SynthesisError(
                    f"LFs '{self.specs[used[params.feature_index]].name}' and '{self.specs[j].name}' "
                    f"share feature {params.feature_index}"
                )
            used[params.feature_index] = j
            needs_pos = self._needs_positive(j)
            needs_neg = self._needs_negative(j)
            t = params.threshold
            if (needs_pos or needs_neg) and not 0.0 < t < 1.0:
                raise SynthesisError(f"LF '{self.specs[j].name}' threshold {t} must lie in (0, 1) for uniform features")

        self.n_lf_features = max(used) + 1 if used else 0
        self.popularity_index = self.n_lf_features
        self.signal_indices = list(range(self.popularity_index + 1, self.popularity_index + 1 + n_signal_features))
        self.feature_dim = self.popularity_index + 1 + n_signal_features
        self.optional_features = sorted(
            self.specs[j].params.feature_index for j in self.thresholds if self.profiles[j].abstain_rate > 0
        )

    def _needs_positive(self, j: int) -> bool:
        p = self.profiles[j]
        return p.abstain_rate < 1.0 and (p.accuracy_relevant > 0 or p.accuracy_irrelevant < 1)

    def _needs_negative(self, j: int) -> bool:
        p = self.profiles[j]
        return p.abstain_rate < 1.0 and (p.accuracy_irrelevant > 0 or p.accuracy_relevant < 1)


class _Generator:
    def __init__(self, config: SynthConfig, plan: _Plan, rng: np.random.Generator):
        self.config = config
        self.plan = plan
        self.rng = rng
        self._negative_titles = {
            title: [other for other, _ in TITLES if not set(title.split()) <= set(other.split())]
            for title, _ in TITLES
        }
        self._industry = dict(TITLES)

    def _vote(self, j: int, irrelevant: bool) -> Vote:
        profile = self.plan.profiles[j]
        accuracy = profile.accuracy_irrelevant if irrelevant else profile.accuracy_relevant
        correct = Vote.NEGATIVE if irrelevant else Vote.POSITIVE
        wrong = Vote.POSITIVE if irrelevant else Vote.NEGATIVE
        return correct if self.rng.random() < accuracy else wrong

    def _abstains(self, j: int) -> bool:
        return self.rng.random() < self.plan.profiles[j].abstain_rate

    def query(self, query_id: str) -> dict:
        rng = self.rng
        plan = self.plan
        title, _ = TITLES[rng.integers(len(TITLES))]
        has_span = True
        if plan.token is not None:
            has_span = not self._abstains(plan.token)
        if has_span:
            suffix = QUERY_SUFFIXES[rng.integers(len(QUERY_SUFFIXES))]
            title_tokens = title.split()
            tokens = title_tokens + list(suffix)
            span = (0, len(title_tokens))
        else:
            tokens = list(GENERIC_QUERIES[rng.integers(len(GENERIC_QUERIES))])
            span = None
        lo, hi = SENIORITY_LEVELS
        return {
            "query_id": query_id,
            "title": title,
            "query_tokens": tokens,
            "span": span,
            "user_seniority": int(rng.integers(lo, hi + 1)),
        }

    def document(self, query: dict, record_id: str) -> Tuple[QueryDocRecord, int]:
        rng = self.rng
        plan = self.plan
        config = self.config
        irrelevant = bool(rng.random() < config.irrelevance_rate)
        title = query["title"]

        # Title: token containment vote
        if plan.token is not None and query["span"] is not None:
            token_vote = self._vote(plan.token, irrelevant)
        else:
            token_vote = Vote.POSITIVE if not irrelevant else Vote.NEGATIVE
        if token_vote == Vote.POSITIVE:
            doc_title = title
        else:
            candidates = self._negative_titles[title]
            doc_title = candidates[rng.integers(len(candidates))]
        doc_tokens = doc_title.split()
        if rng.random() < 0.5:
            doc_tokens = [TITLE_MODIFIERS[rng.integers(len(TITLE_MODIFIERS))]] + doc_tokens

        # Industry: taxonomy vote
        if plan.taxonomy is not None and query["span"] is not None:
            if rng.random() < plan.industry_null_rate:
                industry = None
            else:
                expected = self._industry[title]
                if self._vote(plan.taxonomy, irrelevant) == Vote.POSITIVE:
                    industry = expected
                else:
                    others = [i for i in INDUSTRIES if i != expected]
                    industry = others[rng.integers(len(others))]
        else:
            industry = INDUSTRIES[rng.integers(len(INDUSTRIES))]

        # Seniority: ordinal vote
        user_level = query["user_seniority"]
        lo, hi = SENIORITY_LEVELS
        if plan.ordinal is not None:
            if self._abstains(plan.ordinal):
                doc_level = None
            else:
                max_delta = plan.specs[plan.ordinal].params.max_delta
                near = [d for d in range(lo, hi + 1) if abs(d - user_level) <= max_delta]
                far = [d for d in range(lo, hi + 1) if abs(d - user_level) > max_delta]
                pool = near if self._vote(plan.ordinal, irrelevant) == Vote.POSITIVE else far
                doc_level = int(pool[rng.integers(len(pool))])
        else:
            doc_level = int(rng.integers(lo, hi + 1))

        # Threshold features
        features: List[Optional[float]] = [float(rng.random()) for _ in range(plan.feature_dim)]
        for j in plan.thresholds:
            params = plan.specs[j].params
            if self._abstains(j):
                features[params.feature_index] = None
                continue
            positive = self._vote(j, irrelevant) == Vote.POSITIVE
            features[params.feature_index] = self._threshold_value(params.threshold, params.direction, positive)

        # Engagement, contradicting planted relevance with probability engagement_noise
        engaged = (not irrelevant) != bool(rng.random() < config.engagement_noise)
        if engaged:
            engagement = POSITIVE_ENGAGEMENTS[rng.choice(len(POSITIVE_ENGAGEMENTS), p=POSITIVE_ENGAGEMENT_WEIGHTS)]
        else:
            engagement = NEGATIVE_ENGAGEMENTS[rng.choice(len(NEGATIVE_ENGAGEMENTS), p=NEGATIVE_ENGAGEMENT_WEIGHTS)]

        # Popularity tracks engagement, not relevance
        features[plan.popularity_index] = float(0.5 + (0.15 if engaged else -0.15) + rng.normal(0.0, 0.2))
        for index in plan.signal_indices:
            features[index] = float((0.0 if irrelevant else 0.5) + rng.normal(0.0, 1.0))

        record = QueryDocRecord(
            record_id=record_id,
            query_id=query["query_id"],
            query_tokens=query["query_tokens"],
            query_title_token_span=query["span"],
            doc_title_tokens=doc_tokens,
            user_seniority=user_level,
            doc_seniority=doc_level,
            doc_industry_id=industry,
            features=features,
            engagement=engagement,
            advertised=bool(rng.random() < config.advertised_rate),
        )
        return record, int(irrelevant)

    def _threshold_value(self, t: float, direction: Direction, positive: bool) -> float:
        u = float(self.rng.random())
        at_or_above = t + (1.0 - t) * u  # [t, 1)
        strictly_above = t + (1.0 - t) * (1.0 - u)  # (t, 1]
        strictly_below = t * u  # [0, t)
        if direction == Direction.GE:
            return at_or_above if positive else strictly_below
        return strictly_below if positive else strictly_above

    def corpus(self, prefix: str, n_queries: int, docs_per_query: int):
        records, labels = [], []
        for q in range(n_queries):
            query = self.query(f"{prefix}q{q:06d}")
            for d in range(docs_per_query):
                record, label = self.document(query, f"{prefix}q{q:06d}-d{d:03d}")
                records.append(record)
                labels.append(label)
        return records, labels


def generate(config: SynthConfig, lf_specs: Optional[Sequence[LFSpec]] = None) -> SynthCorpus:
    specs = list(lf_specs) if lf_specs is not None else synthetic_lf_specs(len(config.lf_profiles))
    plan = _Plan(specs, config.lf_profiles, config.n_signal_features)
    rng = np.random.default_rng(config.seed)
    gen = _Generator(config, plan, rng)

    records, labels = gen.corpus("", config.n_queries, config.docs_per_query)
    seed_records, seed_labels = gen.corpus("seed-", config.seed_queries, config.seed_docs_per_query)

    # Query-level train/eval split
    n_eval = int(round(config.n_queries * config.eval_fraction))
    eval_queries = set(rng.permutation(config.n_queries)[:n_eval].tolist())
    train_split: Tuple[list, list] = ([], [])
    eval_split: Tuple[list, list] = ([], [])
    for record, label in zip(records, labels):
        q = int(record.query_id[1:])
        target = eval_split if q in eval_queries else train_split
        target[0].append(record)
        target[1].append(label)

    schema = DatasetSchema(
        feature_dim=plan.feature_dim,
        optional_features=plan.optional_features,
        seniority_levels=SENIORITY_LEVELS,
        lf_count=len(specs),
    )
    logger.info(
        f"Generated {len(train_split[0])} train, {len(eval_split[0])} eval and {len(seed_records)} seed records "
        f"(d={plan.feature_dim}, m={len(specs)}, seed={config.seed})"
    )
    return SynthCorpus(
        schema=schema,
        lf_specs=specs,
        taxonomy=_taxonomy(),
        splits={"train": train_split, "eval": eval_split, "seed": (seed_records, seed_labels)},
    )


def truth_path(dataset_path) -> Path:
    """train.jsonl -> train.truth.jsonl"""
    dataset_path = Path(dataset_path)
    return dataset_path.with_name(f"{dataset_path.stem}.truth.jsonl")


def default_corpus_paths(directory) -> Dict[str, Path]:
    directory = Path(directory)
    paths = {
        "schema": directory / "schema.yaml",
        "lfs": directory / "lfs.yaml",
        "taxonomy": directory / "taxonomy.csv",
    }
    for split in ("seed", "train", "eval"):
        paths[split] = directory / f"{split}.jsonl"
    return paths


def write_corpus(corpus: SynthCorpus, paths) -> Dict[str, Path]:
    """
    Write schema, LF config, taxonomy and every split with its truth sidecar.
    paths is a directory or a mapping with keys schema, lfs, taxonomy, seed, train, eval.
    """
    if not isinstance(paths, dict):
        paths = default_corpus_paths(paths)
    paths = {key: Path(value) for key, value in paths.items()}
    datasets.write_schema(paths["schema"], corpus.schema)
    datasets.atomic_write(paths["lfs"], yaml.safe_dump(lf_specs_to_yaml_obj(corpus.lf_specs), sort_keys=False))
    datasets.write_taxonomy(paths["taxonomy"], corpus.taxonomy)
    for split, (records, labels) in corpus.splits.items():
        paths.setdefault(f"{split}_truth", truth_path(paths[split]))
        datasets.write_records(paths[split], records)
        datasets.write_truth(paths[f"{split}_truth"], [r.record_id for r in records], labels)
    return paths
