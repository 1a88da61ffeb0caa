from biasasr.backend.base import (
    DEFAULT_LAYERS,
    AsrBackend,
    BackendInfo,
    DecodeParams,
    LayerStack,
    Transcript,
    format_layer_range,
    parse_layer_range,
)
from biasasr.backend.mock import MockBackend, mock_tts
from biasasr.errors import ConfigError

BACKENDS = ("mock", "whisper-medium", "whisper")


def create_backend(name: str, **options) -> AsrBackend:
    """Build a backend from the ``backend`` configuration key."""
    if name == "mock":
        return MockBackend(
            confusion=options.get("confusion"),
            repeat_when_prompted=options.get("repeat_when_prompted", 0),
        )
    if name in ("whisper-medium", "whisper"):
        from biasasr.backend.whisper_hf import WhisperBackend

        model = options.get("model", "openai/whisper-medium")
        return WhisperBackend.from_pretrained(model, device=options.get("device", "cpu"))
    raise ConfigError(f"unknown backend {name!r}; choose from {BACKENDS}")


__all__ = [
    "DEFAULT_LAYERS",
    "AsrBackend",
    "BackendInfo",
    "DecodeParams",
    "LayerStack",
    "MockBackend",
    "Transcript",
    "create_backend",
    "format_layer_range",
    "mock_tts",
    "parse_layer_range",
]
