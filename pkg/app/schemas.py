from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .models import (
    Architecture,
    Direction,
    Engagement,
    EngagementLabelMap,
    DEFAULT_LABEL_MAP,
    GainFunction,
    LabelSource,
    LFKind,
    PolicyKind,
)


class DatasetSchema(BaseModel):
    """Sidecar declaring the shape every record of a dataset must have."""
    model_config = ConfigDict(extra="forbid")

    feature_dim: int = Field(ge=0)
    optional_features: List[int] = []
    seniority_levels: Tuple[int, int] = (0, 9)
    engagement_labels: Dict[Engagement, float] = dict(DEFAULT_LABEL_MAP.mapping)
    lf_count: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check(self):
        bad = [i for i in self.optional_features if not 0 <= i < self.feature_dim]
        if bad:
            raise ValueError(f"optional_features {bad} outside feature_dim {self.feature_dim}")
        lo, hi = self.seniority_levels
        if lo > hi:
            raise ValueError(f"seniority_levels {self.seniority_levels} is empty")
        # validates completeness and monotonicity
        EngagementLabelMap(mapping=self.engagement_labels)
        return self

    @property
    def label_map(self) -> EngagementLabelMap:
        return EngagementLabelMap(mapping=self.engagement_labels)


# --- Labeling function specs ---

class TokenContainmentParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    span_required: bool = True


class OrdinalDeltaParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    max_delta: int = Field(ge=0)


class TaxonomyMatchParams(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FeatureThresholdParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    feature_index: int = Field(ge=0)
    threshold: float
    direction: Direction = Direction.GE


LF_PARAMS = {
    LFKind.TOKEN_CONTAINMENT: TokenContainmentParams,
    LFKind.ORDINAL_DELTA: OrdinalDeltaParams,
    LFKind.TAXONOMY_MATCH: TaxonomyMatchParams,
    LFKind.FEATURE_THRESHOLD: FeatureThresholdParams,
}

LFParams = Union[TokenContainmentParams, OrdinalDeltaParams, TaxonomyMatchParams, FeatureThresholdParams]


class LFSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(min_length=1)
    kind: LFKind
    params: LFParams = Field(default_factory=TaxonomyMatchParams)
    serveable: bool = False

    @model_validator(mode="before")
    @classmethod
    def _params_for_kind(cls, data):
        # Parse params with the model that belongs to kind, not the first Union member that fits
        if isinstance(data, dict) and "kind" in data:
            kind = LFKind(data["kind"])
            params = data.get("params") or {}
            if isinstance(params, dict):
                data = {**data, "params": LF_PARAMS[kind](**params)}
        return data

    @model_validator(mode="after")
    def _params_match_kind(self):
        expected = LF_PARAMS[self.kind]
        if not isinstance(self.params, expected):
            raise ValueError(f"LF '{self.name}' of kind {self.kind.value} needs {expected.__name__}")
        return self


# --- Relabeling ---

class RelabelPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: PolicyKind = PolicyKind.R1
    y_dismiss: float

    @property
    def y_p(self) -> float:
        return 0.0 if self.kind == PolicyKind.R2 else self.y_dismiss


# --- Ranker training ---

class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=0.05, gt=0)
    epochs: int = Field(default=30, ge=0)
    batch_size_groups: int = Field(default=32, ge=1)
    seed: int = 0
    label_source: LabelSource = LabelSource.EFFECTIVE
    momentum: float = Field(default=0.0, ge=0.0, lt=1.0)
    architecture: Architecture = Architecture.LINEAR
    hidden_width: int = Field(default=32, ge=1)
    normalize_labels: bool = False


# --- Synthetic corpora ---

class LFProfile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # P(Positive | relevant, voted) and P(Negative | irrelevant, voted)
    accuracy_relevant: float = Field(ge=0.0, le=1.0)
    accuracy_irrelevant: float = Field(ge=0.0, le=1.0)
    abstain_rate: float = Field(ge=0.0, le=1.0)


def _default_profiles() -> List[LFProfile]:
    accuracies = [0.9, 0.85, 0.8, 0.88, 0.75, 0.82, 0.78, 0.86, 0.8, 0.9]
    abstains = [0.3, 0.1, 0.3, 0.2, 0.15, 0.25, 0.1, 0.2, 0.3, 0.15]
    return [
        LFProfile(accuracy_relevant=a, accuracy_irrelevant=a, abstain_rate=r)
        for a, r in zip(accuracies, abstains)
    ]


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_queries: int = Field(default=2000, ge=1)
    docs_per_query: int = Field(default=10, ge=1)
    eval_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    seed_queries: int = Field(default=1500, ge=0)
    seed_docs_per_query: int = Field(default=3, ge=1)
    lf_profiles: List[LFProfile] = Field(default_factory=_default_profiles)
    irrelevance_rate: float = Field(default=0.3, ge=0.0, le=1.0)
    engagement_noise: float = Field(default=0.2, ge=0.0, le=1.0)
    advertised_rate: float = Field(default=0.1, ge=0.0, le=1.0)
    n_signal_features: int = Field(default=3, ge=0)
    seed: int = 0


# --- Pipeline ---

class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    workdir: str = "."
    schema_file: str = "schema.yaml"
    lf_config: str = "lfs.yaml"
    taxonomy: Optional[str] = "taxonomy.csv"
    seed_dataset: str = "seed.jsonl"
    seed_truth: str = "seed.truth.jsonl"
    train_dataset: str = "train.jsonl"
    eval_dataset: str = "eval.jsonl"
    votes_dir: str = "votes"
    labeler_model: str = "models/labeler.json"
    relabeled_dir: str = "relabeled"
    ranker_model: str = "models/ranker.json"
    initial_ranker: Optional[str] = None
    train_log: str = "models/train_log.jsonl"
    report_dir: str = "reports"


class LabelerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    smoothing_alpha: float = Field(default=1.0, ge=0.0)
    test_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    split_seed: int = 0


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k: int = Field(default=10, ge=1)
    gain_function: GainFunction = GainFunction.LINEAR
    quantile_grid: List[float] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    thresholds: List[float] = [0.6, 0.7]
    excel: bool = False

    @field_validator("quantile_grid")
    @classmethod
    def _grid_in_unit_interval(cls, grid):
        if any(not 0.0 <= q <= 1.0 for q in grid):
            raise ValueError("quantile grid values must lie in [0, 1]")
        return grid


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    paths: PathsConfig = Field(default_factory=PathsConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    labeler: LabelerConfig = Field(default_factory=LabelerConfig)
    relabel_policy: PolicyKind = PolicyKind.R1
    train: TrainConfig = Field(default_factory=TrainConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)
    workers: int = Field(default=1, ge=1)
