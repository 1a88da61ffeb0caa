"""Backend-neutral types for encoder hidden states and prompted decoding."""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np

from biasasr.audio import AudioBuffer
from biasasr.errors import ConfigError, InputError

DEFAULT_LAYERS: tuple[int, ...] = tuple(range(10, 22))
LANGUAGES = ("zh", "en", "auto")


def parse_layer_range(spec: str | tuple | list) -> tuple[int, ...]:
    """``"10:21"`` (1-based, inclusive) or an explicit list -> tuple of layer indices."""
    if isinstance(spec, str):
        try:
            lo, hi = (int(x) for x in spec.split(":"))
        except ValueError:
            raise ConfigError(f"layer range must look like 'lo:hi', got {spec!r}") from None
        if hi < lo:
            raise ConfigError(f"empty layer range {spec!r}")
        return tuple(range(lo, hi + 1))
    layers = tuple(int(x) for x in spec)
    if not layers:
        raise ConfigError("empty layer range")
    return layers


def format_layer_range(layers: tuple[int, ...]) -> str:
    if list(layers) == list(range(layers[0], layers[-1] + 1)):
        return f"{layers[0]}:{layers[-1]}"
    return ",".join(str(x) for x in layers)


@dataclass(frozen=True, eq=False)
class LayerStack:
    """Hidden states of several encoder layers: ``data[layer, frame, dim]``."""

    layers: tuple[int, ...]
    data: np.ndarray
    frame_duration_s: float

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        object.__setattr__(self, "layers", tuple(int(x) for x in self.layers))
        object.__setattr__(self, "data", data)
        if data.ndim != 3:
            raise InputError(f"LayerStack data must be 3-D, got shape {data.shape}")
        if data.shape[0] != len(self.layers):
            raise InputError(f"{len(self.layers)} layers but tensor has {data.shape[0]}")
        if data.shape[1] == 0:
            raise InputError("LayerStack has no frames")
        if not np.isfinite(data).all():
            raise InputError("LayerStack contains non-finite values")

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def dims(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LayerStack):
            return NotImplemented
        return (
            self.layers == other.layers
            and self.frame_duration_s == other.frame_duration_s
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class DecodeParams:
    beam_size: int = 5
    language: str = "auto"
    prompt: str | None = None

    def __post_init__(self):
        if self.beam_size < 1:
            raise ConfigError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.language not in LANGUAGES:
            raise ConfigError(f"language must be one of {LANGUAGES}, got {self.language!r}")


@dataclass(frozen=True)
class Transcript:
    text: str
    avg_logprob: float = 0.0


@dataclass(frozen=True)
class BackendInfo:
    model_id: str
    num_encoder_layers: int
    hidden_dim: int
    frame_duration_s: float

    def fingerprint(self) -> dict:
        return {
            "model_id": self.model_id,
            "hidden_dim": self.hidden_dim,
            "frame_duration_s": self.frame_duration_s,
        }


class AsrBackend(abc.ABC):
    """Encoder-decoder ASR model seen through two calls: ``encode`` and ``decode``.

    Instances are immutable once loaded and may be shared between threads.
    """

    _info: BackendInfo | None = None

    def info(self) -> BackendInfo:
        if self._info is None:
            raise ConfigError(f"{type(self).__name__} is not loaded")
        return self._info

    def check_layers(self, layers) -> tuple[int, ...]:
        layers = tuple(int(x) for x in layers)
        n = self.info().num_encoder_layers
        bad = [x for x in layers if not 1 <= x <= n]
        if not layers or bad:
            raise ConfigError(f"layer indices {bad or '[]'} outside backend range 1..{n}")
        return layers

    def num_frames(self, audio: AudioBuffer) -> int:
        """Frames covering the real audio; padding frames are never returned."""
        # round first so 0.3 / 0.1 does not become 4 frames
        return max(1, math.ceil(round(audio.duration_s / self.info().frame_duration_s, 6)))

    @abc.abstractmethod
    def encode(self, audio: AudioBuffer, layers=DEFAULT_LAYERS) -> LayerStack:
        ...

    @abc.abstractmethod
    def decode(self, audio: AudioBuffer, params: DecodeParams | None = None) -> Transcript:
        ...
