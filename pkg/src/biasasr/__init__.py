"""Contextual biasing for prompt-conditioned ASR via TTS-anchored keyword spotting."""

__version__ = "0.1.0"
