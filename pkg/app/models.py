import enum
from typing import Dict, List, Literal, Optional, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Engagement(str, enum.Enum):
    APPLY = "apply"
    SAVE = "save"
    VIEW = "view"
    SKIP = "skip"
    DISMISS = "dismiss"


# Strongest to weakest interaction
ENGAGEMENT_ORDER = [Engagement.APPLY, Engagement.SAVE, Engagement.VIEW, Engagement.SKIP, Engagement.DISMISS]


class Vote(enum.IntEnum):
    """Tri-state LF output. The integer value doubles as the weight column index."""
    NEGATIVE = 0
    POSITIVE = 1
    ABSTAIN = 2

    def to_json(self) -> Optional[int]:
        return None if self is Vote.ABSTAIN else int(self)

    @classmethod
    def from_json(cls, value: Optional[int]) -> "Vote":
        if value is None:
            return cls.ABSTAIN
        if value in (0, 1) and not isinstance(value, (bool, float)):
            return cls(int(value))
        raise ValueError(f"vote must be 1, 0 or null, got {value!r}")


class LFKind(str, enum.Enum):
    TOKEN_CONTAINMENT = "token_containment"
    ORDINAL_DELTA = "ordinal_delta"
    TAXONOMY_MATCH = "taxonomy_match"
    FEATURE_THRESHOLD = "feature_threshold"


class Direction(str, enum.Enum):
    GE = ">="
    LE = "<="


class PolicyKind(str, enum.Enum):
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"


class Architecture(str, enum.Enum):
    LINEAR = "linear"
    ONE_HIDDEN_LAYER = "one_hidden_layer"


class LabelSource(str, enum.Enum):
    ORIGINAL = "original"
    EFFECTIVE = "effective"


class GainFunction(str, enum.Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exponential"


class QueryDocRecord(BaseModel):
    """One (user, query, document) triplet. Schema-level checks live in datasets.validate_record."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    record_id: str
    query_id: str
    query_tokens: List[str] = []
    # [start, end) into query_tokens
    query_title_token_span: Optional[Tuple[int, int]] = None
    doc_title_tokens: List[str] = []
    user_seniority: Optional[int] = None
    doc_seniority: Optional[int] = None
    doc_industry_id: Optional[str] = None
    features: List[Optional[float]]
    engagement: Engagement
    advertised: bool = False

    @model_validator(mode="after")
    def _check_span(self):
        span = self.query_title_token_span
        if span is not None:
            start, end = span
            if not (0 <= start < end <= len(self.query_tokens)):
                raise ValueError(f"title span {span} outside query of {len(self.query_tokens)} tokens")
        return self

    def title_span_tokens(self) -> Optional[List[str]]:
        if self.query_title_token_span is None:
            return None
        start, end = self.query_title_token_span
        return self.query_tokens[start:end]


class EngagementLabelMap(BaseModel):
    model_config = ConfigDict(frozen=True)

    mapping: Dict[Engagement, float]

    @field_validator("mapping")
    @classmethod
    def _complete_and_monotone(cls, mapping):
        missing = [e.value for e in ENGAGEMENT_ORDER if e not in mapping]
        if missing:
            raise ValueError(f"engagement label map missing {missing}")
        for stronger, weaker in zip(ENGAGEMENT_ORDER, ENGAGEMENT_ORDER[1:]):
            if mapping[stronger] < mapping[weaker]:
                raise ValueError(
                    f"label map must be weakly monotone: {stronger.value}={mapping[stronger]} "
                    f"< {weaker.value}={mapping[weaker]}"
                )
        return mapping

    def value(self, engagement: Engagement) -> float:
        return self.mapping[engagement]

    @property
    def y_dismiss(self) -> float:
        return self.mapping[Engagement.DISMISS]


DEFAULT_LABEL_MAP = EngagementLabelMap(mapping={
    Engagement.APPLY: 4.0,
    Engagement.SAVE: 3.0,
    Engagement.VIEW: 2.0,
    Engagement.SKIP: 1.0,
    Engagement.DISMISS: 0.5,
})


class Taxonomy(BaseModel):
    title_to_industry: Dict[str, Set[str]] = {}

    @field_validator("title_to_industry")
    @classmethod
    def _no_empty_sets(cls, value):
        for key, industries in value.items():
            if not industries:
                raise ValueError(f"taxonomy key '{key}' has no industries")
        return value

    def industries_for(self, key: str) -> Optional[Set[str]]:
        return self.title_to_industry.get(key)


class SeedExample(BaseModel):
    record_id: Optional[str] = None
    votes: List[Vote]
    # 1 = annotated as extremely irrelevant
    label: Literal[0, 1]


class LFStats(BaseModel):
    name: str
    coverage: float
    positive: int
    negative: int
    abstain: int
    empirical_accuracy: Optional[float] = None


class WeakLabelModel(BaseModel):
    """Naive-Bayes log-odds model. weights[i] is ordered by Vote value: [negative, positive, abstain]."""
    model_config = ConfigDict(frozen=True)

    lf_names: List[str] = []
    weights: List[Tuple[float, float, float]]
    bias: float
    smoothing_alpha: float = Field(ge=0)
    class_counts: Tuple[int, int]

    @property
    def m(self) -> int:
        return len(self.weights)

    def weight_matrix(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64).reshape(self.m, 3)


class RelabeledTarget(BaseModel):
    y_original: float
    p: float
    y_effective: float


class QueryDoc(BaseModel):
    record_id: str
    features: List[float]
    y_original: float
    y_effective: float
    p: float = Field(default=0.0, ge=0.0, le=1.0)
    engagement: Optional[Engagement] = None
    advertised: bool = False

    def label(self, source: LabelSource) -> float:
        return self.y_original if source == LabelSource.ORIGINAL else self.y_effective


class QueryGroup(BaseModel):
    query_id: str
    docs: List[QueryDoc] = Field(min_length=1)

    @property
    def size(self) -> int:
        return len(self.docs)

    def feature_matrix(self) -> np.ndarray:
        return np.asarray([d.features for d in self.docs], dtype=np.float64)

    def labels(self, source: LabelSource) -> np.ndarray:
        return np.asarray([d.label(source) for d in self.docs], dtype=np.float64)


class RankerModel(BaseModel):
    """
    Flat parameter layout:
      linear:            [w (feature_dim), b]
      one_hidden_layer:  [W1 (hidden_width x feature_dim, row-major), b1 (hidden_width), w2 (hidden_width), b2]
    """
    architecture: Architecture = Architecture.LINEAR
    hidden_width: Optional[int] = None
    feature_dim: int = Field(ge=1)
    parameters: List[float]

    @model_validator(mode="after")
    def _check_parameter_count(self):
        expected = parameter_count(self.architecture, self.feature_dim, self.hidden_width)
        if len(self.parameters) != expected:
            raise ValueError(
                f"{self.architecture.value} ranker with feature_dim={self.feature_dim} "
                f"needs {expected} parameters, got {len(self.parameters)}"
            )
        return self

    def parameter_vector(self) -> np.ndarray:
        return np.asarray(self.parameters, dtype=np.float64)


def parameter_count(architecture: Architecture, feature_dim: int, hidden_width: Optional[int]) -> int:
    if architecture == Architecture.LINEAR:
        return feature_dim + 1
    if not hidden_width or hidden_width < 1:
        raise ValueError("one_hidden_layer ranker requires hidden_width >= 1")
    return hidden_width * feature_dim + 2 * hidden_width + 1


class EvalReport(BaseModel):
    k: int
    n_queries: int
    gain_function: GainFunction = GainFunction.LINEAR
    ndcg_original: float = Field(ge=0.0, le=1.0)
    ndcg_effective: float = Field(ge=0.0, le=1.0)
    ndcg_weak: float = Field(ge=0.0, le=1.0)
    per_engagement_quantiles: Dict[Engagement, List[Tuple[float, float]]] = {}
    fraction_above: Dict[Engagement, Dict[float, float]] = {}
    feature_importance: List[float] = []
