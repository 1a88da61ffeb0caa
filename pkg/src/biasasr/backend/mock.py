"""Deterministic stand-ins for TTS, encoder and decoder.

Every character becomes one 0.1 s frame. The waveform of a frame carries the
character's codepoint as 21 amplitude-coded bit cells, so the mock encoder and
decoder can read the text back out of any audio the mock TTS produced:

* encoder: each frame -> unit basis vector ``e[codepoint % 16]``, the same in
  every layer;
* decoder: echoes the characters, replacing those listed in a confusion table
  unless the prompt contains a segment that spells the true text around them.
"""

from __future__ import annotations

import re
import threading

import numpy as np

from biasasr.audio import SAMPLE_RATE, AudioBuffer
from biasasr.backend.base import (
    DEFAULT_LAYERS,
    AsrBackend,
    BackendInfo,
    DecodeParams,
    LayerStack,
    Transcript,
)
from biasasr.errors import ConfigError, InputError

FRAME_S = 0.1
SAMPLES_PER_CHAR = int(FRAME_S * SAMPLE_RATE)
HIDDEN_DIM = 16
NUM_LAYERS = 24

_BITS = 21
_CELL = 64
_LOW, _HIGH, _MARK = 0.25, 0.75, 0.5
_SILENCE = 0.1

# prompt segments are split on punctuation only; English entities keep their spaces
_PROMPT_SPLIT = re.compile(r"[,.;:!?、，。；：！？…]+")


def hash_dim(ch: str) -> int:
    return ord(ch) % HIDDEN_DIM


def _char_wave(ch: str) -> np.ndarray:
    cp = ord(ch)
    amps = np.full(SAMPLES_PER_CHAR, _MARK, dtype=np.float32)
    for bit in range(_BITS):
        amps[bit * _CELL:(bit + 1) * _CELL] = _HIGH if (cp >> bit) & 1 else _LOW
    carrier = np.where(np.arange(SAMPLES_PER_CHAR) % 2 == 0, 1.0, -1.0).astype(np.float32)
    return amps * carrier


def mock_tts(text: str) -> AudioBuffer:
    """0.1 s of codepoint-keyed waveform per character."""
    if not text:
        raise InputError("cannot synthesize empty text")
    return AudioBuffer(np.concatenate([_char_wave(ch) for ch in text]), SAMPLE_RATE)


def read_chars(audio: AudioBuffer) -> list[str | None]:
    """Invert :func:`mock_tts` frame by frame; ``None`` marks a silent frame."""
    if audio.sample_rate != SAMPLE_RATE:
        raise InputError(f"mock backend expects {SAMPLE_RATE} Hz audio")
    x = np.abs(audio.samples)
    n = -(-len(x) // SAMPLES_PER_CHAR)
    padded = np.zeros(n * SAMPLES_PER_CHAR, dtype=np.float32)
    padded[: len(x)] = x
    out: list[str | None] = []
    for frame in padded.reshape(n, SAMPLES_PER_CHAR):
        if frame.mean() < _SILENCE:
            out.append(None)
            continue
        cells = frame[: _BITS * _CELL].reshape(_BITS, _CELL).mean(axis=1)
        cp = sum(1 << b for b in range(_BITS) if cells[b] > _MARK)
        try:
            out.append(chr(cp))
        except ValueError:
            out.append(None)
    return out


def protected_positions(text: str, prompt: str | None) -> set[int]:
    """Positions of ``text`` spelled out, in context, by some prompt segment."""
    keep: set[int] = set()
    if not prompt:
        return keep
    for seg in _PROMPT_SPLIT.split(prompt):
        seg = seg.strip()
        if not seg:
            continue
        start = text.find(seg)
        while start != -1:
            keep.update(range(start, start + len(seg)))
            start = text.find(seg, start + 1)
    return keep


class MockBackend(AsrBackend):
    """Exact, fast backend used by every unit and integration test.

    Args:
        confusion: character substitutions the "acoustic model" makes,
            e.g. ``{"郁": "玉"}``.
        repeat_when_prompted: if > 0, a prompted decode returns the text
            repeated this many times (a rigged hallucination for the
            compression-ratio fallback).
    """

    def __init__(self, confusion: dict[str, str] | None = None, repeat_when_prompted: int = 0):
        for src, dst in (confusion or {}).items():
            if len(src) != 1 or len(dst) != 1:
                raise ConfigError(f"confusion entries map one character to one character: {src!r}->{dst!r}")
        self.confusion = dict(confusion or {})
        self.repeat_when_prompted = int(repeat_when_prompted)
        self._info = BackendInfo("mock", NUM_LAYERS, HIDDEN_DIM, FRAME_S)
        self._lock = threading.Lock()
        self.encode_calls = 0
        self.decode_calls = 0

    def encode(self, audio: AudioBuffer, layers=DEFAULT_LAYERS) -> LayerStack:
        layers = self.check_layers(layers)
        audio.require_nonempty()
        with self._lock:
            self.encode_calls += 1
        chars = read_chars(audio)[: self.num_frames(audio)]
        frame = np.zeros((len(chars), HIDDEN_DIM), dtype=np.float32)
        for i, ch in enumerate(chars):
            if ch is not None:
                frame[i, hash_dim(ch)] = 1.0
        data = np.broadcast_to(frame, (len(layers), *frame.shape))
        return LayerStack(layers, data, FRAME_S)

    def decode(self, audio: AudioBuffer, params: DecodeParams | None = None) -> Transcript:
        params = params or DecodeParams()
        audio.require_nonempty()
        with self._lock:
            self.decode_calls += 1
        truth = "".join(ch for ch in read_chars(audio) if ch is not None)
        keep = protected_positions(truth, params.prompt)
        out = []
        errors = 0
        for i, ch in enumerate(truth):
            if ch in self.confusion and i not in keep:
                out.append(self.confusion[ch])
                errors += 1
            else:
                out.append(ch)
        text = "".join(out)
        if params.prompt and self.repeat_when_prompted > 0:
            text = text * self.repeat_when_prompted
        return Transcript(text, -errors / max(len(truth), 1))
