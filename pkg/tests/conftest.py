import numpy as np
import pytest
import yaml

from app.models import Engagement, QueryDoc, QueryDocRecord, QueryGroup, Taxonomy
from app.schemas import DatasetSchema, LFProfile, SynthConfig


def make_record(**overrides) -> QueryDocRecord:
    fields = {
        "record_id": "r1",
        "query_id": "q1",
        "query_tokens": ["staff", "nurse", "jobs"],
        "query_title_token_span": (0, 2),
        "doc_title_tokens": ["senior", "staff", "nurse"],
        "user_seniority": 3,
        "doc_seniority": 4,
        "doc_industry_id": "healthcare",
        "features": [0.7, 0.2, None],
        "engagement": Engagement.APPLY,
        "advertised": False,
    }
    fields.update(overrides)
    return QueryDocRecord(**fields)


def make_group(query_id, features, y_original, y_effective=None, p=None, engagements=None, record_ids=None):
    n = len(features)
    y_effective = y_original if y_effective is None else y_effective
    p = [0.0] * n if p is None else p
    record_ids = record_ids or [f"{query_id}-d{i}" for i in range(n)]
    docs = [
        QueryDoc(
            record_id=record_ids[i],
            features=list(features[i]),
            y_original=float(y_original[i]),
            y_effective=float(y_effective[i]),
            p=float(p[i]),
            engagement=None if engagements is None else engagements[i],
        )
        for i in range(n)
    ]
    return QueryGroup(query_id=query_id, docs=docs)


def random_groups(rng, n_groups, feature_dim, min_size=1, max_size=6):
    groups = []
    for q in range(n_groups):
        size = int(rng.integers(min_size, max_size + 1))
        groups.append(make_group(
            f"q{q:03d}",
            rng.normal(size=(size, feature_dim)).tolist(),
            rng.uniform(0.0, 4.0, size=size).tolist(),
            p=rng.uniform(0.0, 1.0, size=size).tolist(),
        ))
    return groups


@pytest.fixture
def record_factory():
    return make_record


@pytest.fixture
def schema():
    return DatasetSchema(feature_dim=3, optional_features=[2], lf_count=4)


@pytest.fixture
def taxonomy():
    return Taxonomy(title_to_industry={"staff nurse": {"healthcare"}, "truck driver": {"logistics"}})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_synth_config():
    """A corpus small enough for the full pipeline to run in a couple of seconds."""
    return SynthConfig(
        n_queries=60,
        docs_per_query=5,
        eval_fraction=0.25,
        seed_queries=80,
        seed_docs_per_query=3,
        seed=7,
    )


@pytest.fixture
def pipeline_config_file(tmp_path, tiny_synth_config):
    """A config whose workdir is tmp_path/work, with a quick ranker schedule."""
    raw = {
        "paths": {"workdir": "work"},
        "synth": tiny_synth_config.model_dump(mode="json"),
        "train": {"epochs": 3, "learning_rate": 0.05, "batch_size_groups": 8, "seed": 3},
        "evaluation": {"k": 5},
    }
    path = tmp_path / "pipeline.yaml"
    path.write_text(yaml.safe_dump(raw, sort_keys=False), encoding="utf-8")
    return path


@pytest.fixture
def accurate_profiles():
    return [LFProfile(accuracy_relevant=0.9, accuracy_irrelevant=0.9, abstain_rate=0.2) for _ in range(10)]
