"""CNN classifiers over similarity maps and their checkpoint format."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import torch
from torch import nn

from biasasr.errors import CompatibilityError, ConfigError, InputError
from biasasr.kws.similarity import SimilarityMap, batch_prepare

ARCHITECTURES = ("resnet50", "small_cnn")


@dataclass(frozen=True)
class ClassifierConfig:
    architecture: str = "resnet50"
    epochs: int = 6
    batch_size: int = 64
    learning_rate: float = 5e-5
    optimizer: str = "adam"
    entity_axis_target: int = 32
    channels: int = 12
    heldout_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.optimizer != "adam":
            raise ConfigError(f"only the Adam optimizer is supported, got {self.optimizer!r}")
        for name in ("epochs", "batch_size", "entity_axis_target", "channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ConfigError("heldout_fraction must be in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class SmallCnn(nn.Module):
    """Four conv blocks, masked global max pooling, two-way linear head."""

    widths = (32, 64, 64, 128)

    def __init__(self, channels: int = 12):
        super().__init__()
        blocks = []
        prev = channels
        for w in self.widths:
            blocks += [
                nn.Conv2d(prev, w, kernel_size=3, padding=1, bias=False),
                nn.BatchNorm2d(w),
                nn.ReLU(inplace=True),
                nn.MaxPool2d(2, ceil_mode=True),
            ]
            prev = w
        self.features = nn.Sequential(*blocks)
        self.head = nn.Linear(prev, 2)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        h = self.features(x)
        if mask is not None:
            valid = mask.sum(dim=1)
            for _ in self.widths:
                valid = torch.div(valid + 1, 2, rounding_mode="floor")
            cols = torch.arange(h.shape[-1], device=h.device)
            pad = cols[None, :] >= valid[:, None]
            h = h.masked_fill(pad[:, None, None, :], float("-inf"))
        return self.head(h.amax(dim=(2, 3)))


class ResNet50(nn.Module):
    """torchvision ResNet-50 from scratch with a ``channels``-wide stem."""

    def __init__(self, channels: int = 12):
        super().__init__()
        from torchvision.models import resnet50

        self.net = resnet50(weights=None, num_classes=2)
        self.net.conv1 = nn.Conv2d(channels, 64, kernel_size=7, stride=2, padding=3, bias=False)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        return self.net(x)


def build_model(cfg: ClassifierConfig) -> nn.Module:
    if cfg.architecture == "small_cnn":
        return SmallCnn(cfg.channels)
    return ResNet50(cfg.channels)


class KwsClassifier:
    """A trained model plus the configuration it was trained with.

    Scores are ``positive logit - negative logit`` of the two-way head, so a
    threshold on them is unaffected by an offset shared by both logits.
    """

    def __init__(self, model: nn.Module, cfg: ClassifierConfig):
        self.model = model.eval()
        self.cfg = cfg

    @property
    def channels(self) -> int:
        return self.cfg.channels

    @torch.no_grad()
    def logits(self, batch: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        out = self.model(batch, mask)
        return out[:, 1] - out[:, 0]

    def score(self, maps: list[SimilarityMap], batch_size: int = 256) -> list[float]:
        """One logit per map, in input order.

        Maps are grouped by utterance length so no map is ever padded at
        inference; batch mates can only perturb a score at float rounding level.
        """
        bad = {m.channels for m in maps} - {self.channels}
        if bad:
            raise CompatibilityError(f"classifier expects {self.channels} channels, got {sorted(bad)}")
        groups: dict[int, list[int]] = defaultdict(list)
        for i, m in enumerate(maps):
            groups[m.utterance_frames].append(i)
        out = [0.0] * len(maps)
        for idx in groups.values():
            for k in range(0, len(idx), batch_size):
                chunk = idx[k:k + batch_size]
                x, _ = batch_prepare([maps[i] for i in chunk], self.cfg.entity_axis_target)
                for i, v in zip(chunk, self.logits(x).tolist()):
                    out[i] = v
        return out

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save({"config": json.dumps(asdict(self.cfg)), "state_dict": self.model.state_dict()}, path)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "KwsClassifier":
        blob = torch.load(Path(path), map_location="cpu", weights_only=True)
        if "config" not in blob or "state_dict" not in blob:
            raise InputError(f"{path} is not a KWS classifier checkpoint")
        cfg = ClassifierConfig.from_dict(json.loads(blob["config"]))
        model = build_model(cfg)
        model.load_state_dict(blob["state_dict"])
        return cls(model, cfg)
