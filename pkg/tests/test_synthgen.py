import pytest

from app import datasets
from app.errors import SynthesisError
from app.labeling_functions import compute_stats, eval_all, reference_lf_specs
from app.models import LFKind, Engagement
from app.schemas import LFProfile, LFSpec, OrdinalDeltaParams, SynthConfig
from app.synthgen import generate, synthetic_lf_specs, write_corpus


def test_same_seed_same_corpus(tiny_synth_config):
    first = generate(tiny_synth_config)
    second = generate(tiny_synth_config)
    for split in ("seed", "train", "eval"):
        assert first.records(split) == second.records(split)
        assert first.truth(split) == second.truth(split)


def test_different_seed_different_corpus(tiny_synth_config):
    other = tiny_synth_config.model_copy(update={"seed": tiny_synth_config.seed + 1})
    assert generate(tiny_synth_config).records("train") != generate(other).records("train")


def test_split_sizes_and_disjoint_queries(tiny_synth_config):
    corpus = generate(tiny_synth_config)
    train_queries = {r.query_id for r in corpus.records("train")}
    eval_queries = {r.query_id for r in corpus.records("eval")}
    assert not train_queries & eval_queries
    assert len(eval_queries) == 15
    assert len(corpus.records("train")) + len(corpus.records("eval")) == 60 * 5
    assert len(corpus.records("seed")) == 80 * 3


def test_realized_lf_rates_match_profiles(accurate_profiles):
    config = SynthConfig(n_queries=10_000, docs_per_query=1, eval_fraction=0.0, seed_queries=0,
                         lf_profiles=accurate_profiles, seed=3)
    corpus = generate(config)
    records = corpus.records("train")
    votes = eval_all(records, corpus.lf_specs, corpus.taxonomy)
    stats = compute_stats(votes, corpus.truth("train"), [s.name for s in corpus.lf_specs])
    for s in stats:
        assert 0.77 <= s.coverage <= 0.83, s.name
        assert 0.87 <= s.empirical_accuracy <= 0.93, s.name


def test_engagement_follows_planted_relevance(tiny_synth_config):
    config = tiny_synth_config.model_copy(update={"n_queries": 400, "engagement_noise": 0.0})
    corpus = generate(config)
    positive = {Engagement.APPLY, Engagement.SAVE, Engagement.VIEW}
    for record, label in zip(corpus.records("train"), corpus.truth("train")):
        assert (record.engagement in positive) == (label == 0)


def test_zero_irrelevance_rate_plants_only_relevant_documents(tiny_synth_config):
    corpus = generate(tiny_synth_config.model_copy(update={"irrelevance_rate": 0.0}))
    assert set(corpus.truth("train")) == {0}
    assert set(corpus.truth("seed")) == {0}


def test_reference_lf_set_is_used_for_ten_profiles(tiny_synth_config):
    corpus = generate(tiny_synth_config)
    assert corpus.lf_specs == reference_lf_specs()
    assert corpus.schema.lf_count == 10
    assert corpus.schema.feature_dim == 7 + 1 + tiny_synth_config.n_signal_features


def test_lf_set_is_extended_for_more_profiles():
    specs = synthetic_lf_specs(12)
    assert len(specs) == 12
    assert sum(s.kind == LFKind.FEATURE_THRESHOLD for s in specs) == 9


def test_profile_count_must_match_lfs(tiny_synth_config):
    with pytest.raises(SynthesisError, match="LF profiles"):
        generate(tiny_synth_config, lf_specs=reference_lf_specs()[:4])


def test_unreachable_negative_seniority_votes(tiny_synth_config):
    specs = [LFSpec(name="any_level", kind=LFKind.ORDINAL_DELTA, params=OrdinalDeltaParams(max_delta=9))]
    config = tiny_synth_config.model_copy(update={
        "lf_profiles": [LFProfile(accuracy_relevant=0.9, accuracy_irrelevant=0.9, abstain_rate=0.1)],
    })
    with pytest.raises(SynthesisError, match="max_delta=9"):
        generate(config, lf_specs=specs)


def test_taxonomy_cannot_abstain_less_than_token_lf(tiny_synth_config):
    profiles = list(tiny_synth_config.lf_profiles)
    profiles[0] = LFProfile(accuracy_relevant=0.9, accuracy_irrelevant=0.9, abstain_rate=0.5)
    profiles[2] = LFProfile(accuracy_relevant=0.9, accuracy_irrelevant=0.9, abstain_rate=0.1)
    with pytest.raises(SynthesisError, match="abstain_rate"):
        generate(tiny_synth_config.model_copy(update={"lf_profiles": profiles}))


def test_written_corpus_loads_back(tmp_path, tiny_synth_config):
    corpus = generate(tiny_synth_config)
    paths = write_corpus(corpus, tmp_path)
    schema = datasets.load_schema(paths["schema"])
    assert schema == corpus.schema
    for split in ("seed", "train", "eval"):
        assert datasets.load_records(paths[split], schema) == corpus.records(split)
        truth = datasets.load_truth(paths[f"{split}_truth"])
        assert [truth[r.record_id] for r in corpus.records(split)] == corpus.truth(split)
    assert datasets.load_taxonomy(paths["taxonomy"]) == corpus.taxonomy


def test_planted_base_rate_matches_irrelevance_rate(tiny_synth_config):
    config = tiny_synth_config.model_copy(update={"n_queries": 2000, "irrelevance_rate": 0.3})
    corpus = generate(config)
    labels = corpus.truth("train") + corpus.truth("eval") + corpus.truth("seed")
    n = len(labels)
    sigma = (0.3 * 0.7 / n) ** 0.5
    assert abs(sum(labels) / n - 0.3) <= 3 * sigma
