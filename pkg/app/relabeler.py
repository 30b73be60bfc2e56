"""
Target rewriting with weak-labeler probabilities.

Mixing the engagement label y with the false-positive label y_p under the
weak labeler's irrelevance probability p,

    y_eff = (1 - p) * y + p * y_p,

turns the weakly supervised listwise loss back into the plain listwise loss on
y_eff, so nothing downstream of the labels has to change.
"""
import logging
from typing import List, Sequence

from .errors import DataValidationError
from .models import EngagementLabelMap, PolicyKind, QueryGroup, RelabeledTarget
from .schemas import RelabelPolicy

logger = logging.getLogger(__name__)


def policy_from_label_map(kind: PolicyKind, label_map: EngagementLabelMap) -> RelabelPolicy:
    return RelabelPolicy(kind=PolicyKind(kind), y_dismiss=label_map.y_dismiss)


def effective_probability(p: float, advertised: bool, policy: RelabelPolicy) -> float:
    """Policy override applied before mixing: R3 never demotes advertised documents."""
    if policy.kind == PolicyKind.R3 and advertised:
        return 0.0
    return p


def mix(y: float, p: float, y_p: float) -> float:
    return (1.0 - p) * y + p * y_p


def relabel_target(y: float, p: float, advertised: bool, policy: RelabelPolicy) -> RelabeledTarget:
    if not 0.0 <= p <= 1.0:
        raise DataValidationError(f"probability must lie in [0, 1], got {p}")
    p_used = effective_probability(p, advertised, policy)
    return RelabeledTarget(y_original=y, p=p_used, y_effective=mix(y, p_used, policy.y_p))


def relabel(record, y: float, p: float, policy: RelabelPolicy) -> RelabeledTarget:
    """Relabel one QueryDocRecord (or QueryDoc; only .advertised is read)."""
    return relabel_target(y, p, record.advertised, policy)


def relabel_dataset(
    groups: Sequence[QueryGroup], probabilities: Sequence[float], policy: RelabelPolicy
) -> List[QueryGroup]:
    """
    Replace every document's y_effective, reading probabilities in flattened document order.
    Mixing starts from the current y_effective (equal to y_original on freshly grouped data), so
    relabeling twice mixes twice. Group order, document order and features are kept.
    p on each output document is the raw weak-labeler probability, before any policy override.
    """
    n_docs = sum(g.size for g in groups)
    if len(probabilities) != n_docs:
        raise DataValidationError(f"{len(probabilities)} probabilities for {n_docs} documents")

    out = []
    k = 0
    for group in groups:
        docs = []
        for doc in group.docs:
            p = float(probabilities[k])
            target = relabel_target(doc.y_effective, p, doc.advertised, policy)
            docs.append(doc.model_copy(update={"y_effective": target.y_effective, "p": p}))
            k += 1
        out.append(group.model_copy(update={"docs": docs}))
    logger.info(f"Relabeled {n_docs} documents in {len(groups)} groups with policy {policy.kind.value}")
    return out
