"""PCM audio container and WAV I/O."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from biasasr.errors import InputError

SAMPLE_RATE = 16000


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono float32 PCM in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}")
        arr = np.asarray(self.samples, dtype=np.float32)
        if arr.ndim != 1:
            raise InputError(f"expected mono samples, got shape {arr.shape}")
        object.__setattr__(self, "samples", arr)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    def require_nonempty(self) -> "AudioBuffer":
        if len(self.samples) == 0:
            raise InputError("audio buffer is empty")
        return self

    def to_wav_bytes(self) -> bytes:
        buf = io.BytesIO()
        wavfile.write(buf, self.sample_rate, self.samples)
        return buf.getvalue()


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float32) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float32) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float32) - 128.0) / 128.0
    return data.astype(np.float32)


def _from_wav(rate: int, data: np.ndarray, target_rate: int) -> AudioBuffer:
    samples = _to_float(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if rate != target_rate:
        g = math.gcd(rate, target_rate)
        samples = resample_poly(samples, target_rate // g, rate // g).astype(np.float32)
    return AudioBuffer(samples, target_rate)


def read_wav(path: str | Path, target_rate: int = SAMPLE_RATE) -> AudioBuffer:
    """Load a 16-bit or float WAV, downmix to mono and resample to ``target_rate``."""
    rate, data = wavfile.read(str(path))
    return _from_wav(rate, data, target_rate)


def wav_from_bytes(payload: bytes, target_rate: int = SAMPLE_RATE) -> AudioBuffer:
    rate, data = wavfile.read(io.BytesIO(payload))
    return _from_wav(rate, data, target_rate)


def write_wav(path: str | Path, audio: AudioBuffer) -> None:
    """Write float32 WAV; reading it back is bit-exact."""
    wavfile.write(str(path), audio.sample_rate, audio.samples)
