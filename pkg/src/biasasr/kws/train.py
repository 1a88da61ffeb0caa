"""Supervised training of the presence classifier."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from sklearn.metrics import roc_auc_score
from torch import nn

from biasasr.entity_db import EntityWord
from biasasr.errors import CompatibilityError, InputError
from biasasr.kws.model import ClassifierConfig, KwsClassifier, build_model
from biasasr.kws.similarity import SimilarityMap, batch_prepare

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class KwsSample:
    map: SimilarityMap
    positive: bool
    word: EntityWord
    utterance_id: str

    @property
    def label(self) -> str:
        return "positive" if self.positive else "negative"


@dataclass
class TrainingReport:
    epoch_losses: list[float] = field(default_factory=list)
    heldout_auc: list[float] = field(default_factory=list)
    n_train: int = 0
    n_heldout: int = 0
    seconds: float = 0.0

    @property
    def final_auc(self) -> float:
        return self.heldout_auc[-1] if self.heldout_auc else float("nan")


def auc(logits: Sequence[float], labels: Sequence[bool]) -> float:
    labels = np.asarray(labels, dtype=bool)
    if labels.all() or not labels.any():
        return float("nan")
    return float(roc_auc_score(labels, np.asarray(logits, dtype=np.float64)))


def evaluate(classifier: KwsClassifier, samples: Sequence[KwsSample]) -> float:
    """Held-out ROC AUC of ``classifier`` on ``samples``."""
    scores = classifier.score([s.map for s in samples])
    return auc(scores, [s.positive for s in samples])


def train(samples: Sequence[KwsSample], cfg: ClassifierConfig) -> tuple[KwsClassifier, TrainingReport]:
    """Train from scratch with Adam and cross-entropy.

    ``samples`` can be any indexable sequence (a list, or a lazily loaded
    dataset). A ``cfg.heldout_fraction`` slice, chosen with ``cfg.seed``, is
    kept out of training and scored after every epoch.
    """
    n = len(samples)
    labels = np.array([samples[i].positive for i in range(n)], dtype=bool)
    if n == 0 or labels.all() or not labels.any():
        raise InputError("training data must contain both positive and negative samples")

    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    order = rng.permutation(n)
    n_held = int(round(n * cfg.heldout_fraction))
    held_idx, train_idx = order[:n_held], order[n_held:]
    heldout = [samples[i] for i in held_idx]

    model = build_model(cfg)
    optim = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    report = TrainingReport(n_train=len(train_idx), n_heldout=n_held)
    started = time.perf_counter()

    for epoch in range(cfg.epochs):
        model.train()
        perm = train_idx[rng.permutation(len(train_idx))]
        total, seen = 0.0, 0
        for k in range(0, len(perm), cfg.batch_size):
            batch = [samples[i] for i in perm[k:k + cfg.batch_size]]
            if any(s.map.channels != cfg.channels for s in batch):
                raise CompatibilityError(f"sample channel count differs from config ({cfg.channels})")
            x, mask = batch_prepare([s.map for s in batch], cfg.entity_axis_target)
            y = torch.tensor([int(s.positive) for s in batch])
            optim.zero_grad()
            loss = loss_fn(model(x, mask), y)
            loss.backward()
            optim.step()
            total += loss.item() * len(batch)
            seen += len(batch)
        report.epoch_losses.append(total / max(seen, 1))
        classifier = KwsClassifier(model, cfg)
        report.heldout_auc.append(evaluate(classifier, heldout) if heldout else float("nan"))
        logger.info("epoch %d loss %.4f heldout AUC %.4f", epoch + 1, report.epoch_losses[-1], report.heldout_auc[-1])

    report.seconds = time.perf_counter() - started
    return KwsClassifier(model, cfg), report
