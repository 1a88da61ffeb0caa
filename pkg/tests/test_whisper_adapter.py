"""The transformers adapter, exercised on a tiny randomly initialised Whisper."""

import os

import numpy as np
import pytest

transformers = pytest.importorskip("transformers")

from biasasr.audio import AudioBuffer  # noqa: E402
from biasasr.backend.whisper_hf import WhisperBackend  # noqa: E402
from biasasr.errors import ConfigError  # noqa: E402


@pytest.fixture(scope="module")
def tiny():
    from transformers import WhisperConfig, WhisperFeatureExtractor, WhisperForConditionalGeneration

    cfg = WhisperConfig(
        d_model=16, encoder_layers=4, decoder_layers=1, encoder_attention_heads=2,
        decoder_attention_heads=2, encoder_ffn_dim=32, decoder_ffn_dim=32, num_mel_bins=80,
    )
    import torch

    torch.manual_seed(0)
    return WhisperBackend(WhisperForConditionalGeneration(cfg), WhisperFeatureExtractor(), model_id="tiny-random")


def noise(seconds, seed=0):
    rng = np.random.default_rng(seed)
    return AudioBuffer(rng.uniform(-0.3, 0.3, int(16000 * seconds)).astype(np.float32))


def test_info_read_from_model(tiny):
    info = tiny.info()
    assert info.num_encoder_layers == 4
    assert info.hidden_dim == 16
    assert info.frame_duration_s == pytest.approx(0.02)


def test_full_window_frame_grid(tiny):
    stack = tiny.encode(noise(30), [1, 2, 3, 4])
    assert stack.frames == round(30 / tiny.info().frame_duration_s) == 1500


def test_padding_frames_are_cropped(tiny):
    stack = tiny.encode(noise(3.01), [2, 3])
    assert stack.frames == 151
    assert stack.layers == (2, 3)


def test_layers_are_one_based_block_outputs(tiny):
    import torch

    audio = noise(1)
    stack = tiny.encode(audio, [4])
    with torch.no_grad():
        out = tiny.model.model.encoder(tiny._features(audio.samples))
    np.testing.assert_allclose(stack.data[0], out.last_hidden_state[0, :50].numpy(), atol=1e-6)


def test_encode_deterministic_and_range_checked(tiny):
    audio = noise(2, seed=3)
    assert tiny.encode(audio, [1, 2]) == tiny.encode(audio, [1, 2])
    with pytest.raises(ConfigError):
        tiny.encode(audio, [5])


def test_long_audio_encoded_window_by_window(tiny):
    assert tiny.encode(noise(31), [1]).frames == 1550


@pytest.mark.skipif(not os.environ.get("BIASASR_WHISPER_MODEL"), reason="set BIASASR_WHISPER_MODEL to a local Whisper checkpoint")
def test_real_model_decodes():
    backend = WhisperBackend.from_pretrained(os.environ["BIASASR_WHISPER_MODEL"])
    assert backend.info().num_encoder_layers in (4, 6, 12, 24, 32)
    out = backend.decode(noise(2))
    assert isinstance(out.text, str)
