"""
Listwise ranker trained on the softmax cross-entropy (ListNet top-one) loss

    L = -(1/q) * sum_i sum_j y_ij * log softmax(s_i)_j

where s_i are the scores of query group i. Scoring is linear or a single
rectifier hidden layer; gradients are analytic, and query groups are never
split across mini-batches because the softmax spans a whole group.
"""
import json
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .datasets import atomic_write, flatten_docs, read_json
from .errors import DataValidationError, TrainingError
from .models import Architecture, LabelSource, QueryGroup, RankerModel, Vote
from .schemas import LFSpec, TrainConfig

logger = logging.getLogger(__name__)

ABSTAIN_FEATURE_VALUE = 0.5
SERVEABLE_ENCODING = {Vote.POSITIVE: 1.0, Vote.NEGATIVE: 0.0, Vote.ABSTAIN: ABSTAIN_FEATURE_VALUE}


class PackedGroups:
    """Query groups flattened into contiguous arrays; group i owns rows offsets[i]:offsets[i+1]."""

    def __init__(self, features: np.ndarray, labels: np.ndarray, offsets: np.ndarray):
        self.features = features
        self.labels = labels
        self.offsets = offsets

    @property
    def n_groups(self) -> int:
        return len(self.offsets) - 1

    @classmethod
    def from_groups(
        cls,
        groups: Sequence[QueryGroup],
        label_source: LabelSource = LabelSource.EFFECTIVE,
        normalize_labels: bool = False,
    ) -> "PackedGroups":
        sizes = [g.size for g in groups]
        if any(s < 1 for s in sizes):
            raise DataValidationError("every query group needs at least one document")
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        docs = flatten_docs(groups)
        dims = {len(d.features) for d in docs}
        if len(dims) > 1:
            raise DataValidationError(f"mixed feature dimensions {sorted(dims)}")
        dim = dims.pop() if dims else 0
        features = np.asarray([d.features for d in docs], dtype=np.float64).reshape(len(docs), dim)
        labels = np.asarray([d.label(label_source) for d in docs], dtype=np.float64)
        if normalize_labels and len(labels):
            totals = np.add.reduceat(labels, offsets[:-1])
            per_doc = np.repeat(totals, sizes)
            labels = np.divide(labels, per_doc, out=np.zeros_like(labels), where=per_doc != 0)
        return cls(features, labels, offsets)

    def subset(self, group_indices: Sequence[int]) -> "PackedGroups":
        starts = self.offsets[:-1][group_indices]
        ends = self.offsets[1:][group_indices]
        rows = np.concatenate([np.arange(s, e) for s, e in zip(starts, ends)])
        offsets = np.concatenate([[0], np.cumsum(ends - starts)]).astype(np.int64)
        return PackedGroups(self.features[rows], self.labels[rows], offsets)


# --- Model construction ---

def init_model(
    feature_dim: int,
    architecture: Architecture = Architecture.LINEAR,
    hidden_width: Optional[int] = 32,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> RankerModel:
    """Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    if architecture == Architecture.LINEAR:
        s = 1.0 / math.sqrt(max(feature_dim, 1))
        params = np.concatenate([rng.uniform(-s, s, size=feature_dim), [0.0]])
        return RankerModel(architecture=architecture, feature_dim=feature_dim, parameters=params.tolist())

    h = int(hidden_width)
    s1 = 1.0 / math.sqrt(max(feature_dim, 1))
    s2 = 1.0 / math.sqrt(h)
    params = np.concatenate([
        rng.uniform(-s1, s1, size=h * feature_dim),
        np.zeros(h),
        rng.uniform(-s2, s2, size=h),
        [0.0],
    ])
    return RankerModel(architecture=architecture, hidden_width=h, feature_dim=feature_dim, parameters=params.tolist())


def _unpack_hidden(params: np.ndarray, feature_dim: int, h: int):
    W1 = params[: h * feature_dim].reshape(h, feature_dim)
    b1 = params[h * feature_dim: h * feature_dim + h]
    w2 = params[h * feature_dim + h: h * feature_dim + 2 * h]
    b2 = params[h * feature_dim + 2 * h]
    return W1, b1, w2, b2


def _forward(model: RankerModel, params: np.ndarray, X: np.ndarray):
    if model.architecture == Architecture.LINEAR:
        return X @ params[:-1] + params[-1], None
    W1, b1, w2, b2 = _unpack_hidden(params, model.feature_dim, model.hidden_width)
    A = X @ W1.T + b1
    H = np.maximum(A, 0.0)
    return H @ w2 + b2, (A, H)


def _check_dim(model: RankerModel, X: np.ndarray):
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise DataValidationError(f"ranker expects {model.feature_dim} features, got shape {X.shape}")


def score_batch(model: RankerModel, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    _check_dim(model, X)
    scores, _ = _forward(model, model.parameter_vector(), X)
    return scores


def score(model: RankerModel, features: Sequence[float]) -> float:
    return float(score_batch(model, [list(features)])[0])


# --- Loss and gradient ---

def segment_log_softmax(scores: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-group log-softmax with max subtraction."""
    starts = offsets[:-1]
    sizes = np.diff(offsets)
    maxima = np.repeat(np.maximum.reduceat(scores, starts), sizes)
    shifted = scores - maxima
    log_norm = np.log(np.add.reduceat(np.exp(shifted), starts))
    return shifted - np.repeat(log_norm, sizes)


def loss_from_scores(scores: np.ndarray, labels: np.ndarray, offsets: np.ndarray) -> float:
    q = len(offsets) - 1
    if q == 0:
        return 0.0
    log_p = segment_log_softmax(np.asarray(scores, dtype=np.float64), offsets)
    return float(-np.sum(labels * log_p) / q)


def _loss_and_gradient(model: RankerModel, params: np.ndarray, packed: PackedGroups) -> Tuple[float, np.ndarray]:
    q = packed.n_groups
    X, y, offsets = packed.features, packed.labels, packed.offsets
    scores, cache = _forward(model, params, X)
    log_p = segment_log_softmax(scores, offsets)
    loss = float(-np.sum(y * log_p) / q)

    # dL/ds_ij = -(1/q) * (y_ij - softmax_ij * sum_k y_ik)
    totals = np.repeat(np.add.reduceat(y, offsets[:-1]), np.diff(offsets))
    g = -(y - np.exp(log_p) * totals) / q

    if model.architecture == Architecture.LINEAR:
        return loss, np.concatenate([X.T @ g, [np.sum(g)]])

    A, H = cache
    _, _, w2, _ = _unpack_hidden(params, model.feature_dim, model.hidden_width)
    dA = np.outer(g, w2) * (A > 0)
    return loss, np.concatenate([
        (dA.T @ X).ravel(),
        dA.sum(axis=0),
        H.T @ g,
        [np.sum(g)],
    ])


def listnet_loss(
    groups: Sequence[QueryGroup],
    model: RankerModel,
    label_source: LabelSource = LabelSource.EFFECTIVE,
    normalize_labels: bool = False,
) -> float:
    packed = PackedGroups.from_groups(groups, label_source, normalize_labels)
    _check_dim(model, packed.features)
    scores, _ = _forward(model, model.parameter_vector(), packed.features)
    return loss_from_scores(scores, packed.labels, packed.offsets)


def loss_gradient(
    groups: Sequence[QueryGroup],
    model: RankerModel,
    label_source: LabelSource = LabelSource.EFFECTIVE,
    normalize_labels: bool = False,
) -> np.ndarray:
    packed = PackedGroups.from_groups(groups, label_source, normalize_labels)
    _check_dim(model, packed.features)
    _, grad = _loss_and_gradient(model, model.parameter_vector(), packed)
    return grad


# --- Training ---

def train_with_log(
    groups: Sequence[QueryGroup],
    config: TrainConfig,
    initial: Optional[RankerModel] = None,
) -> Tuple[RankerModel, List[dict]]:
    if not groups:
        raise TrainingError("training set is empty")
    packed = PackedGroups.from_groups(groups, config.label_source, config.normalize_labels)
    feature_dim = packed.features.shape[1]
    rng = np.random.default_rng(config.seed)

    if initial is None:
        initial = init_model(feature_dim, config.architecture, config.hidden_width, rng=rng)
    elif initial.feature_dim != feature_dim:
        raise TrainingError(f"initial ranker has feature_dim {initial.feature_dim}, data has {feature_dim}")

    template = initial
    params = initial.parameter_vector()
    velocity = np.zeros_like(params)

    def full_loss(p):
        scores, _ = _forward(template, p, packed.features)
        return loss_from_scores(scores, packed.labels, packed.offsets)

    loss = full_loss(params)
    if not math.isfinite(loss):
        raise TrainingError(f"initial loss is not finite ({loss})")
    log = [{"epoch": 0, "loss": loss}]
    logger.info(f"Training {template.architecture.value} ranker on {packed.n_groups} groups, initial loss {loss:.6f}")

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(packed.n_groups)
        for start in range(0, packed.n_groups, config.batch_size_groups):
            batch = packed.subset(order[start:start + config.batch_size_groups])
            batch_loss, grad = _loss_and_gradient(template, params, batch)
            if not math.isfinite(batch_loss) or not np.all(np.isfinite(grad)):
                raise TrainingError(
                    f"non-finite loss or gradient in epoch {epoch} at batch offset {start} "
                    f"(batch loss {batch_loss}); lower the learning rate"
                )
            velocity = config.momentum * velocity - config.learning_rate * grad
            params = params + velocity
        loss = full_loss(params)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite training loss after epoch {epoch}; lower the learning rate")
        log.append({"epoch": epoch, "loss": loss})
        logger.info(f"Epoch {epoch}/{config.epochs} loss {loss:.6f}")

    model = template.model_copy(update={"parameters": params.tolist()})
    return model, log


def train(groups: Sequence[QueryGroup], config: TrainConfig, initial: Optional[RankerModel] = None) -> RankerModel:
    model, _ = train_with_log(groups, config, initial)
    return model


# --- Serveable LF features ---

def augment_with_serveable_lfs(
    groups: Sequence[QueryGroup], votes: np.ndarray, specs: Sequence[LFSpec]
) -> List[QueryGroup]:
    """Append one feature per serveable LF: POSITIVE -> 1, NEGATIVE -> 0, ABSTAIN -> 0.5."""
    votes = np.asarray(votes)
    n_docs = sum(g.size for g in groups)
    if votes.ndim != 2 or votes.shape[0] != n_docs or votes.shape[1] != len(specs):
        raise DataValidationError(
            f"vote matrix shape {votes.shape} does not match {n_docs} documents x {len(specs)} LFs"
        )
    columns = [j for j, spec in enumerate(specs) if spec.serveable]
    if not columns:
        return list(groups)

    out = []
    k = 0
    for group in groups:
        docs = []
        for doc in group.docs:
            extra = [SERVEABLE_ENCODING[Vote(int(votes[k, j]))] for j in columns]
            docs.append(doc.model_copy(update={"features": list(doc.features) + extra}))
            k += 1
        out.append(group.model_copy(update={"docs": docs}))
    return out


# --- Diagnostics ---

def feature_importance(model: RankerModel, groups: Sequence[QueryGroup]) -> List[float]:
    """
    Share of scoring influence per input feature, summing to 1.
    linear: |w_j| * std(x_j); one_hidden_layer: mean |ds/dx_j| over the documents.
    """
    X = PackedGroups.from_groups(groups).features
    _check_dim(model, X)
    params = model.parameter_vector()
    if model.architecture == Architecture.LINEAR:
        raw = np.abs(params[:-1]) * X.std(axis=0)
    else:
        W1, b1, w2, _ = _unpack_hidden(params, model.feature_dim, model.hidden_width)
        active = (X @ W1.T + b1) > 0
        raw = np.abs((active * w2) @ W1).mean(axis=0)
    total = raw.sum()
    return (raw / total).tolist() if total > 0 else [0.0] * model.feature_dim


# --- Persistence ---

def save_model(path, model: RankerModel):
    atomic_write(path, json.dumps(model.model_dump(mode="json"), indent=2) + "\n")
    logger.info(f"Saved ranker to {path}")


def load_model(path) -> RankerModel:
    payload = read_json(path)
    try:
        return RankerModel.model_validate(payload)
    except ValidationError as e:
        raise DataValidationError(f"invalid ranker model: {e}", path=str(path))
