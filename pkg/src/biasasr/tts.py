"""TTS client: synthesize words to 16 kHz audio, with a content-addressed disk cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import requests

from biasasr.audio import AudioBuffer, read_wav, wav_from_bytes, write_wav
from biasasr.backend.mock import mock_tts
from biasasr.errors import BatchError, InputError, ServiceError, TransportError
from biasasr.text import language_hint

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "BIASASR_TTS_ENDPOINT"
DEFAULT_VOICES = {"zh": "zh-CN-XiaoxiaoNeural", "en": "en-US-AriaNeural"}


@dataclass(frozen=True)
class TtsRequest:
    text: str
    voice: str = DEFAULT_VOICES["zh"]
    rate: float = 1.0

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise InputError("TTS request text is empty")
        if not self.rate > 0:
            raise InputError(f"speaking rate must be positive, got {self.rate}")

    @property
    def key(self) -> str:
        """Content hash of (text, voice, rate); voice or rate changes never alias."""
        blob = json.dumps([self.text, self.voice, float(self.rate)], ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TtsCacheEntry:
    key: str
    audio_path: Path
    duration_s: float


class MockTtsEngine:
    """0.1 s per character, readable back by the mock backend."""

    name = "mock"

    def __call__(self, req: TtsRequest) -> AudioBuffer:
        return mock_tts(req.text)


class HttpTtsEngine:
    """POSTs ``{"text", "voice", "rate"}`` as JSON and expects WAV bytes back.

    The endpoint can be overridden with the ``BIASASR_TTS_ENDPOINT`` env var.
    """

    name = "http"

    def __init__(self, endpoint: str | None = None, timeout: float = 60.0):
        self.endpoint = os.environ.get(ENDPOINT_ENV) or endpoint
        if not self.endpoint:
            raise InputError(f"no TTS endpoint configured (set {ENDPOINT_ENV})")
        self.timeout = timeout
        self._local = threading.local()

    @property
    def session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def __call__(self, req: TtsRequest) -> AudioBuffer:
        payload = {"text": req.text, "voice": req.voice, "rate": req.rate}
        try:
            resp = self.session.post(self.endpoint, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"TTS request failed: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportError(f"TTS service returned {resp.status_code}")
        if resp.status_code >= 400:
            raise ServiceError(f"TTS service rejected request: {resp.status_code} {resp.text[:200]}")
        if not resp.content:
            raise ServiceError(f"TTS service returned no audio for {req.text!r}")
        try:
            return wav_from_bytes(resp.content)
        except Exception as exc:
            raise ServiceError(f"TTS service returned undecodable audio: {exc}") from exc


class TtsClient:
    """Caching, retrying front end over a TTS engine. Safe for concurrent use.

    Cache layout is ``<cache>/<first 2 hex>/<hash>.wav`` with a ``<hash>.json``
    sidecar describing the request.
    """

    def __init__(
        self,
        engine: Callable[[TtsRequest], AudioBuffer] | None = None,
        cache_dir: str | Path | None = None,
        retries: int = 3,
        backoff_s: float = 0.5,
        voices: dict[str, str] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if retries < 1:
            raise InputError("retries must be >= 1")
        self.engine = engine or MockTtsEngine()
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.retries = retries
        self.backoff_s = backoff_s
        self.voices = {**DEFAULT_VOICES, **(voices or {})}
        self._sleep = sleep
        self.hits = 0
        self.misses = 0

    def request_for(self, text: str, language: str | None = None, rate: float = 1.0) -> TtsRequest:
        """Request using the configured voice for ``text``'s language."""
        lang = language or language_hint(text)
        voice = self.voices["en"] if lang == "en" else self.voices["zh"]
        return TtsRequest(text, voice, rate)

    def _paths(self, key: str) -> tuple[Path, Path]:
        d = self.cache_dir / key[:2]
        return d / f"{key}.wav", d / f"{key}.json"

    def lookup(self, req: TtsRequest) -> TtsCacheEntry | None:
        if self.cache_dir is None:
            return None
        wav, meta = self._paths(req.key)
        if not (wav.exists() and meta.exists()):
            return None
        info = json.loads(meta.read_text(encoding="utf-8"))
        return TtsCacheEntry(req.key, wav, float(info["duration_s"]))

    def _store(self, req: TtsRequest, audio: AudioBuffer) -> None:
        wav, meta = self._paths(req.key)
        wav.parent.mkdir(parents=True, exist_ok=True)
        # write-temp-then-rename keeps concurrent readers from seeing partial files
        fd, tmp = tempfile.mkstemp(dir=wav.parent, suffix=".wav.tmp")
        os.close(fd)
        write_wav(tmp, audio)
        os.replace(tmp, wav)
        sidecar = {**asdict(req), "key": req.key, "duration_s": audio.duration_s,
                   "engine": getattr(self.engine, "name", type(self.engine).__name__)}
        fd, tmp = tempfile.mkstemp(dir=wav.parent, suffix=".json.tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(sidecar, f, ensure_ascii=False)
        os.replace(tmp, meta)

    def _call_engine(self, req: TtsRequest) -> AudioBuffer:
        for attempt in range(self.retries):
            try:
                audio = self.engine(req)
                break
            except TransportError as exc:
                if attempt == self.retries - 1:
                    raise TransportError(f"giving up after {self.retries} attempts: {exc}") from exc
                delay = self.backoff_s * 2 ** attempt
                logger.warning("TTS attempt %d for %r failed (%s); retrying in %.2fs", attempt + 1, req.text, exc, delay)
                self._sleep(delay)
        if len(audio) == 0:
            raise ServiceError(f"empty synthesis for {req.text!r}")
        return audio

    def synthesize(self, req: TtsRequest) -> AudioBuffer:
        entry = self.lookup(req)
        if entry is not None:
            self.hits += 1
            return read_wav(entry.audio_path)
        self.misses += 1
        audio = self._call_engine(req)
        if self.cache_dir is not None:
            self._store(req, audio)
        return audio

    def synthesize_batch(
        self, reqs: list[TtsRequest | str], parallelism: int = 4, raise_on_error: bool = True
    ) -> list[AudioBuffer | Exception]:
        """Synthesize in input order; one failure never aborts the others.

        Plain strings are turned into requests with :meth:`request_for`, so an
        invalid (e.g. empty) string fails only its own slot.

        With ``raise_on_error`` a :class:`BatchError` listing the failed indices
        is raised after the whole batch ran (its ``results`` hold the partial
        output); otherwise failed slots hold the exception.
        """
        if parallelism < 1:
            raise InputError("parallelism must be >= 1")

        def one(req):
            try:
                if isinstance(req, str):
                    req = self.request_for(req)
                return self.synthesize(req)
            except Exception as exc:
                return exc

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, reqs))
        failures = {i: r for i, r in enumerate(results) if isinstance(r, Exception)}
        if failures and raise_on_error:
            raise BatchError(failures, results)
        return results
