import math

import numpy as np
import pytest

from app import evaluator, relabeler
from app.errors import DataValidationError
from app.models import DEFAULT_LABEL_MAP, Engagement, GainFunction, PolicyKind, QueryDoc, RankerModel

from conftest import make_group


def _group(n, engagements=None):
    return make_group("q", [[0.0]] * n, [0.0] * n, engagements=engagements)


def test_ndcg_hand_computed_example():
    group = _group(3)
    # ranked order: gains 1, 3, 0
    value = evaluator.ndcg_at_k(group, [3.0, 2.0, 1.0], [1.0, 3.0, 0.0], k=3)
    dcg = 1.0 + 3.0 / math.log2(3)
    idcg = 3.0 + 1.0 / math.log2(3)
    assert value == pytest.approx(dcg / idcg)


def test_ndcg_exponential_gain():
    group = _group(2)
    value = evaluator.ndcg_at_k(group, [0.0, 1.0], [2.0, 1.0], k=2, gain_function=GainFunction.EXPONENTIAL)
    assert value == pytest.approx((1.0 + 3.0 / math.log2(3)) / (3.0 + 1.0 / math.log2(3)))


def test_ndcg_properties_on_random_instances(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        k = int(rng.integers(1, 15))
        group = _group(n)
        gains = rng.integers(0, 4, size=n).astype(float)
        scores = rng.normal(size=n)
        value = evaluator.ndcg_at_k(group, scores, gains, k)
        assert 0.0 <= value <= 1.0

        # strictly increasing transform keeps the ordering and the value
        assert evaluator.ndcg_at_k(group, np.exp(scores) * 3.0 + 1.0, gains, k) == value

        ideal_scores = gains + rng.uniform(0, 0.5, size=n)
        if gains.sum() > 0:
            assert evaluator.ndcg_at_k(group, ideal_scores, gains, k) == 1.0


def test_all_zero_gains_give_zero():
    assert evaluator.ndcg_at_k(_group(4), [1.0, 2.0, 3.0, 4.0], [0.0] * 4, k=10) == 0.0


def test_ties_are_broken_by_record_id():
    group = _group(2)
    # equal scores: record q-d0 ranks first
    assert evaluator.ndcg_at_k(group, [1.0, 1.0], [1.0, 0.0], k=1) == 1.0
    assert evaluator.ndcg_at_k(group, [1.0, 1.0], [0.0, 1.0], k=1) == 0.0


def test_cutoff_beyond_group_size():
    group = _group(2)
    assert evaluator.ndcg_at_k(group, [2.0, 1.0], [1.0, 2.0], k=50) == pytest.approx(
        evaluator.ndcg_at_k(group, [2.0, 1.0], [1.0, 2.0], k=2)
    )


def test_negative_gain_rejected():
    with pytest.raises(DataValidationError, match="non-negative"):
        evaluator.ndcg_at_k(_group(2), [1.0, 0.0], [-1.0, 0.0], k=2)


def test_evaluate_perfect_ranking_scores_one_everywhere():
    # feature 0 equals the label, p = 0 so every label set agrees
    group = make_group("q", [[4.0], [2.0], [0.5]], [4.0, 2.0, 0.5], p=[0.0, 0.0, 0.0])
    model = RankerModel(feature_dim=1, parameters=[1.0, 0.0])
    report = evaluator.evaluate([group], model, k=3)
    assert report.ndcg_original == 1.0
    assert report.ndcg_effective == 1.0
    # weak gains are all 1, so any ordering is ideal
    assert report.ndcg_weak == 1.0


def test_zero_probabilities_make_original_and_effective_equal(rng):
    groups = [
        make_group(f"q{i}", rng.normal(size=(5, 2)).tolist(), rng.uniform(0, 4, size=5).tolist())
        for i in range(10)
    ]
    model = RankerModel(feature_dim=2, parameters=[0.3, -1.0, 0.0])
    report = evaluator.evaluate(groups, model, k=3)
    assert report.ndcg_original == report.ndcg_effective


def _docs(values):
    return [
        QueryDoc(record_id=f"r{i}", features=[0.0], y_original=0.0, y_effective=0.0, p=p, engagement=e)
        for i, (e, p) in enumerate(values)
    ]


def test_nearest_rank_quantiles():
    docs = _docs([(Engagement.DISMISS, p) for p in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]])
    quantiles = evaluator.score_quantiles(docs, [0.0, 0.1, 0.25, 0.5, 1.0])
    assert quantiles[Engagement.DISMISS] == [(0.0, 0.1), (0.1, 0.1), (0.25, 0.3), (0.5, 0.5), (1.0, 1.0)]


def test_empty_engagement_classes_are_omitted():
    docs = _docs([(Engagement.APPLY, 0.1), (Engagement.APPLY, 0.3)])
    quantiles = evaluator.score_quantiles(docs, [0.5])
    assert set(quantiles) == {Engagement.APPLY}


def test_fraction_above_thresholds():
    docs = _docs([(Engagement.DISMISS, p) for p in [0.5, 0.65, 0.7, 0.9]])
    fractions = evaluator.fraction_above(docs, [0.6, 0.7])
    assert fractions[Engagement.DISMISS] == {0.6: 0.75, 0.7: 0.25}


def test_find_anomalies():
    docs = _docs([(Engagement.DISMISS, 0.05), (Engagement.DISMISS, 0.9), (Engagement.APPLY, 0.95), (Engagement.APPLY, 0.1)])
    assert evaluator.find_anomalies(docs) == {"dismissed_low_p": ["r0"], "applied_high_p": ["r2"]}


def test_median_p_per_engagement():
    docs = _docs([(Engagement.SKIP, 0.2), (Engagement.SKIP, 0.4), (Engagement.SKIP, 0.9)])
    assert evaluator.median_p(docs, Engagement.SKIP) == 0.4
    assert evaluator.median_p(docs, Engagement.APPLY) is None


def test_evaluate_three_groups_by_hand():
    model = RankerModel(feature_dim=1, parameters=[1.0, 0.0])
    groups = [
        make_group("a", [[3.0], [2.0], [1.0]], [1.0, 3.0, 0.0], y_effective=[1.0, 2.0, 0.0], p=[0.0, 0.5, 1.0]),
        make_group("b", [[0.0], [1.0]], [2.0, 0.0], p=[0.0, 0.75]),
        make_group("c", [[5.0]], [0.0], p=[1.0]),
    ]
    report = evaluator.evaluate(groups, model, k=10)

    d = 1.0 / math.log2(3)
    original = [(1.0 + 3.0 * d) / (3.0 + 1.0 * d), (2.0 * d) / 2.0, 0.0]
    effective = [(1.0 + 2.0 * d) / (2.0 + 1.0 * d), (2.0 * d) / 2.0, 0.0]
    weak = [1.0, (0.25 + 1.0 * d) / (1.0 + 0.25 * d), 0.0]
    assert report.n_queries == 3
    assert report.ndcg_original == pytest.approx(sum(original) / 3, abs=1e-12)
    assert report.ndcg_effective == pytest.approx(sum(effective) / 3, abs=1e-12)
    assert report.ndcg_weak == pytest.approx(sum(weak) / 3, abs=1e-12)


def test_relabeling_demotes_engaged_irrelevant_documents(rng):
    # one irrelevant document per query carries a strong engagement label and a high p;
    # the ranking puts relevant documents first, best label on top
    groups, probabilities = [], []
    for q in range(40):
        n_relevant = int(rng.integers(2, 6))
        y = rng.choice([1.0, 2.0, 3.0, 4.0], size=n_relevant).tolist() + [float(rng.choice([3.0, 4.0]))]
        features = [[1.0 + v] for v in y[:-1]] + [[0.0]]
        groups.append(make_group(f"q{q:02d}", features, y))
        probabilities += [0.0] * n_relevant + [float(rng.uniform(0.9, 1.0))]

    policy = relabeler.policy_from_label_map(PolicyKind.R1, DEFAULT_LABEL_MAP)
    relabeled = relabeler.relabel_dataset(groups, probabilities, policy)
    report = evaluator.evaluate(relabeled, RankerModel(feature_dim=1, parameters=[1.0, 0.0]), k=10)
    assert report.ndcg_effective >= report.ndcg_original
    assert report.ndcg_original < 1.0
    assert report.ndcg_effective == pytest.approx(1.0, abs=1e-12)
