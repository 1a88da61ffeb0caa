"""Multi-channel cosine-similarity maps between entity and utterance hidden states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from biasasr.backend.base import LayerStack
from biasasr.errors import CompatibilityError, InputError


@dataclass(frozen=True, eq=False)
class SimilarityMap:
    """``data[channel, entity_frame, utterance_frame]``, every cell a cosine."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3 or 0 in data.shape:
            raise InputError(f"similarity map must be a non-empty 3-D tensor, got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def entity_frames(self) -> int:
        return self.data.shape[1]

    @property
    def utterance_frames(self) -> int:
        return self.data.shape[2]


def _unit(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    # zero vectors stay zero, so their cosine with anything is 0 rather than NaN
    return np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)


def similarity_map(entity: LayerStack, utterance: LayerStack) -> SimilarityMap:
    """Cosine of every (entity frame, utterance frame) pair, one channel per layer."""
    if entity.layers != utterance.layers:
        raise CompatibilityError(f"layer mismatch: entity {entity.layers} vs utterance {utterance.layers}")
    if entity.dims != utterance.dims:
        raise CompatibilityError(f"hidden size mismatch: {entity.dims} vs {utterance.dims}")
    e = _unit(entity.data.astype(np.float64))
    u = _unit(utterance.data.astype(np.float64))
    sims = np.einsum("lid,ljd->lij", e, u)
    return SimilarityMap(np.clip(sims, -1.0, 1.0))


def batch_prepare(maps: list[SimilarityMap], entity_axis_target: int = 32) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack maps into one ``(N, C, target, U_max)`` tensor.

    The entity axis is linearly interpolated to ``entity_axis_target`` rows
    (bilinear resize with the utterance axis held fixed); the utterance axis
    is zero-padded on the right to the longest map. ``mask[n, j]`` is True
    for real utterance frames.
    """
    if not maps:
        raise InputError("cannot batch an empty list of similarity maps")
    channels = {m.channels for m in maps}
    if len(channels) != 1:
        raise CompatibilityError(f"mixed channel counts in batch: {sorted(channels)}")
    if entity_axis_target < 1:
        raise InputError("entity_axis_target must be positive")
    width = max(m.utterance_frames for m in maps)
    out = torch.zeros(len(maps), channels.pop(), entity_axis_target, width)
    mask = torch.zeros(len(maps), width, dtype=torch.bool)
    for n, m in enumerate(maps):
        x = torch.from_numpy(m.data)[None]
        if m.entity_frames != entity_axis_target:
            x = F.interpolate(x, size=(entity_axis_target, m.utterance_frames), mode="bilinear", align_corners=True)
        out[n, :, :, : m.utterance_frames] = x[0]
        mask[n, : m.utterance_frames] = True
    return out, mask
