"""Whisper adapter on top of Hugging Face ``transformers``."""

from __future__ import annotations

import hashlib
import logging
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
from biasasr.errors import DecodeError, InputError

logger = logging.getLogger(__name__)


class WhisperBackend(AsrBackend):
    """Real encoder/decoder.

    Hidden state ``l`` (1-based) is the output of encoder block ``l``; the
    embedding output (index 0 in ``transformers``) is never exposed. Calls are
    serialized with a lock, so one instance owns one accelerator context.
    Encoder outputs of the most recent utterance are kept so that a ``decode``
    following an ``encode`` of the same audio does not run the encoder again.
    """

    def __init__(self, model, feature_extractor, tokenizer=None, model_id: str = "whisper", device: str = "cpu"):
        import torch

        torch.manual_seed(0)
        self.model = model.to(device).eval()
        self.feature_extractor = feature_extractor
        self.tokenizer = tokenizer
        self.device = device
        cfg = model.config
        window_s = feature_extractor.n_samples / feature_extractor.sampling_rate
        self.window_samples = int(feature_extractor.n_samples)
        self._info = BackendInfo(
            model_id=model_id,
            num_encoder_layers=int(cfg.encoder_layers),
            hidden_dim=int(cfg.d_model),
            frame_duration_s=window_s / int(cfg.max_source_positions),
        )
        self._lock = threading.Lock()
        self._cached_key: str | None = None
        self._cached_encoder_out = None

    @classmethod
    def from_pretrained(cls, name: str = "openai/whisper-medium", device: str = "cpu") -> "WhisperBackend":
        from transformers import WhisperForConditionalGeneration, WhisperProcessor

        processor = WhisperProcessor.from_pretrained(name)
        model = WhisperForConditionalGeneration.from_pretrained(name)
        return cls(model, processor.feature_extractor, processor.tokenizer, model_id=name, device=device)

    def _features(self, samples: np.ndarray):
        feats = self.feature_extractor(samples, sampling_rate=SAMPLE_RATE, return_tensors="pt")
        return feats.input_features.to(self.device)

    @staticmethod
    def _key(audio: AudioBuffer) -> str:
        return hashlib.sha1(audio.samples.tobytes()).hexdigest()

    def _run_encoder(self, samples: np.ndarray):
        import torch

        with torch.no_grad():
            return self.model.model.encoder(self._features(samples), output_hidden_states=True)

    def encode(self, audio: AudioBuffer, layers=DEFAULT_LAYERS) -> LayerStack:
        layers = self.check_layers(layers)
        if audio.sample_rate != SAMPLE_RATE:
            raise InputError(f"expected {SAMPLE_RATE} Hz audio, got {audio.sample_rate}")
        audio.require_nonempty()
        chunks = []
        with self._lock:
            # audio longer than one window is encoded window by window
            for start in range(0, len(audio), self.window_samples):
                piece = audio.samples[start:start + self.window_samples]
                out = self._run_encoder(piece)
                n = self.num_frames(AudioBuffer(piece, SAMPLE_RATE))
                chunks.append(np.stack([out.hidden_states[l][0, :n].cpu().numpy() for l in layers]))
                if len(audio) <= self.window_samples:
                    self._cached_key = self._key(audio)
                    self._cached_encoder_out = out
        return LayerStack(layers, np.concatenate(chunks, axis=1), self._info.frame_duration_s)

    def decode(self, audio: AudioBuffer, params: DecodeParams | None = None) -> Transcript:
        import torch
        from transformers.modeling_outputs import BaseModelOutput

        params = params or DecodeParams()
        audio.require_nonempty()
        if len(audio) > self.window_samples:
            raise InputError("decode handles at most one 30 s window; segment long audio first")
        if self.tokenizer is None:
            raise DecodeError("no tokenizer loaded; decoding is unavailable")
        kwargs = {
            "num_beams": params.beam_size,
            "do_sample": False,
            "task": "transcribe",
            "return_dict_in_generate": True,
            "output_scores": True,
        }
        if params.language != "auto":
            kwargs["language"] = params.language
        if params.prompt:
            kwargs["prompt_ids"] = torch.as_tensor(
                self.tokenizer.get_prompt_ids(params.prompt), device=self.device
            )
        try:
            with self._lock, torch.no_grad():
                if self._cached_key == self._key(audio):
                    enc = self._cached_encoder_out
                    kwargs["encoder_outputs"] = BaseModelOutput(last_hidden_state=enc.last_hidden_state)
                    out = self.model.generate(**kwargs)
                else:
                    out = self.model.generate(self._features(audio.samples), **kwargs)
        except Exception as exc:  # surface any generate() failure uniformly
            raise DecodeError(f"whisper generate failed: {exc}") from exc
        text = self.tokenizer.batch_decode(out.sequences, skip_special_tokens=True)[0].strip()
        if params.prompt and text.startswith(params.prompt.strip()):
            text = text[len(params.prompt.strip()):].strip()
        score = getattr(out, "sequences_scores", None)
        avg = float(score[0]) if score is not None else float("nan")
        return Transcript(text, avg)
