"""Entity detection for one utterance and precision/recall analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from biasasr.backend.base import LayerStack
from biasasr.entity_db import EntityDatabase, EntityWord
from biasasr.errors import CompatibilityError, InputError
from biasasr.kws.model import KwsClassifier
from biasasr.kws.similarity import similarity_map

DEFAULT_THRESHOLD = 10.0


@dataclass(frozen=True)
class KwsDecision:
    word: EntityWord
    logit: float
    threshold: float = DEFAULT_THRESHOLD

    @property
    def accepted(self) -> bool:
        return self.logit >= self.threshold


def detect(
    db: EntityDatabase,
    utterance: LayerStack,
    classifier: KwsClassifier,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[KwsDecision]:
    """Score every database entity against ``utterance``.

    Returns one decision per record, highest logit first; no entity is
    pruned before scoring.
    """
    if utterance.layers != db.layers:
        raise CompatibilityError(f"utterance layers {utterance.layers} != database layers {db.layers}")
    if utterance.dims != db.fingerprint["hidden_dim"]:
        raise CompatibilityError(f"utterance hidden size {utterance.dims} != database {db.fingerprint['hidden_dim']}")
    if utterance.frame_duration_s != db.fingerprint["frame_duration_s"]:
        raise CompatibilityError("utterance and database come from encoders with different frame rates")
    if not db.records:
        return []
    maps = [similarity_map(rec.hidden, utterance) for rec in db.records]
    logits = classifier.score(maps)
    decisions = [KwsDecision(rec.word, lg, threshold) for rec, lg in zip(db.records, logits)]
    return sorted(decisions, key=lambda d: -d.logit)


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    probability: float
    precision: float
    recall: float


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def pr_curve(scored: Iterable[tuple[float, bool]]) -> list[PrPoint]:
    """Operating points at every distinct logit, lowest threshold first.

    Each point accepts ``logit >= threshold``. ``probability`` is the same
    threshold on the softmax-probability axis (sigmoid of the logit
    difference), for curves drawn over probabilities instead of logits.
    """
    pairs = sorted(((float(s), bool(y)) for s, y in scored), key=lambda p: p[0])
    positives = sum(y for _, y in pairs)
    if positives == 0:
        raise InputError("no positive labels: recall is undefined")
    points = []
    tp_above = positives
    n_above = len(pairs)
    i = 0
    while i < len(pairs):
        t = pairs[i][0]
        points.append(PrPoint(t, sigmoid(t), tp_above / n_above, tp_above / positives))
        while i < len(pairs) and pairs[i][0] == t:
            tp_above -= pairs[i][1]
            n_above -= 1
            i += 1
    return points
