"""
Naive-Bayes weak labeler.

With LFs assumed independent given the label y, the log-odds of y=1 given the
vote vector z is a sum of per-LF log likelihood ratios plus the prior log-odds:

    logit(p) = sum_i w[i][z_i] + b
    w[i][a]  = log(P(z_i=a | y=1) / P(z_i=a | y=0))
    b        = log(P(y=1) / P(y=0))

which is the linear model w.x + b over one-hot indicators x[i][a] = [z_i == a].
"""
import json
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .datasets import atomic_write, read_json
from .errors import DataValidationError, LabelerError
from .models import SeedExample, Vote, WeakLabelModel

logger = logging.getLogger(__name__)

N_STATES = 3
STATE_NAMES = {Vote.NEGATIVE: "0", Vote.POSITIVE: "1", Vote.ABSTAIN: "abstain"}


def _as_matrix(votes, m: Optional[int] = None) -> np.ndarray:
    matrix = np.asarray(votes, dtype=np.int64)
    if matrix.ndim == 1:
        if matrix.size == 0:
            return np.empty((0, m or 0), dtype=np.int64)
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2:
        raise DataValidationError(f"vote matrix must be 2-dimensional, got {matrix.ndim} dimensions")
    if matrix.shape[0] == 0 and m is not None:
        return np.empty((0, m), dtype=np.int64)
    if m is not None and matrix.shape[1] != m:
        raise DataValidationError(f"vote matrix has {matrix.shape[1]} columns, model expects {m}")
    if matrix.size and (matrix.min() < 0 or matrix.max() >= N_STATES):
        raise DataValidationError("vote values must be Vote.NEGATIVE, Vote.POSITIVE or Vote.ABSTAIN")
    return matrix


def class_conditional_counts(votes: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """counts[c, i, a] = #{examples with y=c and z_i=a}."""
    m = votes.shape[1]
    counts = np.zeros((2, m, N_STATES), dtype=np.int64)
    for c in (0, 1):
        rows = votes[labels == c]
        for a in range(N_STATES):
            counts[c, :, a] = np.sum(rows == a, axis=0)
    return counts


def fit(
    seed: Sequence[SeedExample],
    smoothing_alpha: float = 1.0,
    lf_names: Optional[Sequence[str]] = None,
) -> WeakLabelModel:
    """Single counting pass over the seed set; Laplace smoothing over the three vote states."""
    if smoothing_alpha < 0:
        raise LabelerError(f"smoothing_alpha must be >= 0, got {smoothing_alpha}")
    if not seed:
        raise LabelerError("seed set is empty")
    m = len(seed[0].votes)
    if any(len(s.votes) != m for s in seed):
        raise LabelerError(f"seed examples must all carry {m} votes")
    votes = _as_matrix([[int(v) for v in s.votes] for s in seed], m)
    labels = np.asarray([s.label for s in seed], dtype=np.int64)
    return fit_arrays(votes, labels, smoothing_alpha, lf_names)


def fit_arrays(
    votes: np.ndarray,
    labels: np.ndarray,
    smoothing_alpha: float = 1.0,
    lf_names: Optional[Sequence[str]] = None,
) -> WeakLabelModel:
    votes = _as_matrix(votes)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(votes):
        raise LabelerError(f"{len(labels)} labels for {len(votes)} vote rows")
    n1 = int(np.sum(labels == 1))
    n0 = int(np.sum(labels == 0))
    if n0 + n1 != len(labels):
        raise LabelerError("seed labels must be 0 or 1")
    if n0 == 0 or n1 == 0:
        raise LabelerError(f"seed set needs both classes, got n0={n0}, n1={n1}; the bias is undefined")

    m = votes.shape[1]
    names = list(lf_names) if lf_names is not None else [f"lf_{i}" for i in range(m)]
    counts = class_conditional_counts(votes, labels)
    alpha = float(smoothing_alpha)

    if alpha == 0:
        zero = np.argwhere(counts == 0)
        if len(zero):
            c, i, a = zero[0]
            raise LabelerError(
                f"LF '{names[i]}' never voted {STATE_NAMES[Vote(int(a))]} for class y={c}; "
                f"with smoothing_alpha=0 its weight is infinite or undefined"
            )

    class_sizes = np.asarray([n0, n1], dtype=np.float64)
    conditionals = (counts + alpha) / (class_sizes[:, None, None] + N_STATES * alpha)
    weights = np.log(conditionals[1] / conditionals[0])
    bias = math.log((n1 / (n0 + n1)) / (n0 / (n0 + n1)))

    logger.info(f"Fitted weak labeler on {n0 + n1} seed examples (n0={n0}, n1={n1}, m={m}, alpha={alpha})")
    return WeakLabelModel(
        lf_names=names,
        weights=[tuple(float(w) for w in row) for row in weights],
        bias=bias,
        smoothing_alpha=alpha,
        class_counts=(n0, n1),
    )


def sigmoid(logits: np.ndarray) -> np.ndarray:
    """Overflow-free logistic function."""
    logits = np.asarray(logits, dtype=np.float64)
    out = np.empty_like(logits)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    e = np.exp(logits[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logits_batch(model: WeakLabelModel, votes) -> np.ndarray:
    """Table-lookup log-odds, accumulated LF by LF in column order, bias last."""
    matrix = _as_matrix(votes, model.m)
    weights = model.weight_matrix()
    acc = np.zeros(matrix.shape[0], dtype=np.float64)
    for i in range(model.m):
        acc = acc + weights[i, matrix[:, i]]
    return acc + model.bias


def predict_batch(model: WeakLabelModel, votes) -> np.ndarray:
    matrix = _as_matrix(votes, model.m)
    if matrix.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    return sigmoid(logits_batch(model, matrix))


def predict(model: WeakLabelModel, votes: Sequence[int]) -> float:
    if len(votes) != model.m:
        raise DataValidationError(f"expected {model.m} votes, got {len(votes)}")
    return float(predict_batch(model, [[int(v) for v in votes]])[0])


def indicator_features(votes: Sequence[int]) -> np.ndarray:
    """x[i][a] = 1 iff z_i == a, an m x 3 one-hot matrix."""
    votes = np.asarray([int(v) for v in votes], dtype=np.int64)
    x = np.zeros((len(votes), N_STATES), dtype=np.float64)
    x[np.arange(len(votes)), votes] = 1.0
    return x


def logit_linear(model: WeakLabelModel, x: np.ndarray) -> float:
    """w.x + b summed in the same LF order as logits_batch."""
    weights = model.weight_matrix()
    acc = 0.0
    for i in range(model.m):
        row = 0.0
        for a in range(N_STATES):
            if x[i, a]:
                row = row + weights[i, a] * x[i, a]
        acc = acc + row
    return acc + model.bias


def estimate_required_samples(max_error: float, z_alpha: float = 2.0) -> int:
    """
    Annotated examples needed so a Bernoulli LF rate estimate has error below max_error
    at the z_alpha normal quantile, taking the worst case p = 0.5.
    """
    if not 0.0 < max_error < 1.0:
        raise ValueError(f"max_error must lie in (0, 1), got {max_error}")
    if z_alpha <= 0:
        raise ValueError(f"z_alpha must be positive, got {z_alpha}")
    raw = z_alpha * z_alpha * 0.25 / (max_error * max_error)
    # drop float noise such as 399.99999999999994 before taking the ceiling
    return int(math.ceil(round(raw, 9)))


def auc_from_scores(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC: P(score of a y=1 example > score of a y=0 example), ties count 1/2."""
    scores = pd.Series(np.asarray(scores, dtype=np.float64))
    labels = np.asarray(labels)
    n1 = int(np.sum(labels == 1))
    n0 = int(np.sum(labels == 0))
    if n1 == 0 or n0 == 0:
        raise LabelerError(f"AUC needs both classes, got n0={n0}, n1={n1}")
    ranks = scores.rank(method="average").to_numpy()
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n1 * (n1 + 1) / 2.0) / (n1 * n0)


def evaluate_auc(model: WeakLabelModel, held_out: Sequence[SeedExample]) -> float:
    votes = [[int(v) for v in s.votes] for s in held_out]
    labels = [s.label for s in held_out]
    return auc_from_scores(predict_batch(model, votes), labels)


def split_seed(
    seed: Sequence[SeedExample], test_fraction: float = 0.2, split_seed: int = 0
) -> Tuple[List[SeedExample], List[SeedExample]]:
    """Deterministic shuffled train/test split."""
    order = np.random.default_rng(split_seed).permutation(len(seed))
    n_test = int(round(len(seed) * test_fraction))
    test = [seed[i] for i in sorted(order[:n_test])]
    train = [seed[i] for i in sorted(order[n_test:])]
    return train, test


def lf_correlations(votes: np.ndarray, names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    Pairwise Pearson correlation of the POSITIVE indicators over rows where both LFs vote.
    Diagnostic only, the fitted weights never depend on it.
    """
    matrix = _as_matrix(votes)
    m = matrix.shape[1]
    names = list(names) if names is not None else [f"lf_{i}" for i in range(m)]
    corr = np.full((m, m), np.nan)
    for i in range(m):
        for j in range(m):
            both = (matrix[:, i] != Vote.ABSTAIN) & (matrix[:, j] != Vote.ABSTAIN)
            if np.sum(both) < 2:
                continue
            a = (matrix[both, i] == Vote.POSITIVE).astype(np.float64)
            b = (matrix[both, j] == Vote.POSITIVE).astype(np.float64)
            if a.std() == 0 or b.std() == 0:
                continue
            corr[i, j] = float(np.corrcoef(a, b)[0, 1])
    return pd.DataFrame(corr, index=names, columns=names)


def save_model(path, model: WeakLabelModel):
    payload = {"m": model.m, **model.model_dump(mode="json")}
    atomic_write(path, json.dumps(payload, indent=2) + "\n")
    logger.info(f"Saved weak labeler to {path}")


def load_model(path) -> WeakLabelModel:
    payload = read_json(path)
    m = payload.pop("m", None)
    try:
        model = WeakLabelModel.model_validate(payload)
    except ValidationError as e:
        raise DataValidationError(f"invalid weak labeler model: {e}", path=str(path))
    if m is not None and m != model.m:
        raise DataValidationError(f"declares m={m} but has {model.m} weight rows", path=str(path))
    return model


def seed_examples(record_ids: Sequence[str], votes: np.ndarray, truth: dict) -> List[SeedExample]:
    missing = [r for r in record_ids if r not in truth]
    if missing:
        raise DataValidationError(f"{len(missing)} seed records lack a truth label, e.g. '{missing[0]}'")
    return [
        SeedExample(record_id=r, votes=[Vote(int(v)) for v in row], label=truth[r])
        for r, row in zip(record_ids, votes)
    ]
