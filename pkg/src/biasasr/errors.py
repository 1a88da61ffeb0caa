"""Exception hierarchy shared by every stage of the toolkit."""

from __future__ import annotations


class BiasAsrError(Exception):
    """Base class; ``stage`` names the pipeline stage that raised, if known."""

    stage: str | None = None

    def __init__(self, message: str, *, stage: str | None = None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ConfigError(BiasAsrError):
    """Invalid configuration: bad layer range, unknown backend, bad template language."""

    def __init__(self, message: str, *, errors: list[str] | None = None, stage: str | None = None):
        super().__init__(message, stage=stage)
        self.errors = list(errors) if errors else [message]


class InputError(BiasAsrError, ValueError):
    """Caller supplied data that violates an operation's precondition."""


class CompatibilityError(BiasAsrError):
    """Artifacts built against different backends / layer ranges were mixed."""


class DecodeError(BiasAsrError):
    """The ASR backend failed while decoding."""


class TransportError(BiasAsrError):
    """The TTS service could not be reached after all retries."""


class ServiceError(BiasAsrError):
    """The TTS service answered but the answer was unusable."""


class BatchError(BiasAsrError):
    """Some items of a batch failed. ``failures`` maps index to the exception."""

    def __init__(self, failures: dict[int, Exception], results: list | None = None):
        idx = ", ".join(str(i) for i in sorted(failures))
        super().__init__(f"{len(failures)} item(s) failed at indices [{idx}]")
        self.failures = failures
        self.results = results


class StageError(BiasAsrError):
    """Wraps a component error with the pipeline stage it came from."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{type(cause).__name__}: {cause}", stage=stage)
        self.cause = cause
