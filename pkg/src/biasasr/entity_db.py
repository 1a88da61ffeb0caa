"""Database of entity words and the encoder hidden states of their synthetic speech."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from biasasr.backend.base import DEFAULT_LAYERS, AsrBackend, BackendInfo, LayerStack, format_layer_range, parse_layer_range
from biasasr.errors import CompatibilityError, InputError
from biasasr.tensorio import BlobReader, BlobWriter
from biasasr.text import language_hint, normalize_word
from biasasr.tts import TtsClient

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TENSORS = "hidden.f32"
FORMAT = "biasasr-entity-db"


@dataclass(frozen=True)
class EntityWord:
    surface: str
    normalized: str
    language_hint: str

    @classmethod
    def from_text(cls, surface: str) -> "EntityWord":
        surface = surface.strip()
        normalized = normalize_word(surface)
        if not normalized:
            raise InputError(f"entity {surface!r} is empty after normalization")
        return cls(surface, normalized, language_hint(normalized))


@dataclass(frozen=True)
class EntityRecord:
    word: EntityWord
    hidden: LayerStack
    source_audio_key: str


@dataclass(frozen=True)
class SkippedWord:
    surface: str
    reason: str


@dataclass
class EntityDatabase:
    records: list[EntityRecord]
    layers: tuple[int, ...]
    fingerprint: dict
    skipped: list[SkippedWord] = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.word.normalized)
        seen = set()
        for rec in self.records:
            if rec.word.normalized in seen:
                raise InputError(f"duplicate entity {rec.word.normalized!r}")
            seen.add(rec.word.normalized)
            if rec.hidden.layers != tuple(self.layers):
                raise CompatibilityError(f"record {rec.word.surface!r} has layers {rec.hidden.layers}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def surfaces(self) -> list[str]:
        return [r.word.surface for r in self.records]

    def __contains__(self, text: str) -> bool:
        key = normalize_word(text)
        return any(r.word.normalized == key for r in self.records)

    def check_compatible(self, info: BackendInfo) -> None:
        """Refuse to match against a backend whose hidden states differ."""
        theirs = info.fingerprint()
        if theirs != self.fingerprint:
            raise CompatibilityError(f"database built with {self.fingerprint}, backend is {theirs}")
        if max(self.layers) > info.num_encoder_layers:
            raise CompatibilityError(f"layers {format_layer_range(self.layers)} exceed backend depth")


def _as_words(words: Iterable[str | EntityWord]) -> list[EntityWord]:
    out = [w if isinstance(w, EntityWord) else EntityWord.from_text(w) for w in words]
    seen: dict[str, str] = {}
    for w in out:
        if w.normalized in seen:
            raise InputError(f"duplicate entity word {w.surface!r} (normalizes like {seen[w.normalized]!r})")
        seen[w.normalized] = w.surface
    return out


def _encode_words(words: list[EntityWord], tts: TtsClient, backend: AsrBackend, layers, parallelism: int):
    # the full surface string is synthesized as one utterance, mixed-script words included
    reqs = [tts.request_for(w.surface) for w in words]
    audios = tts.synthesize_batch(reqs, parallelism=parallelism, raise_on_error=False)
    records, skipped = [], []

    def encode(item):
        word, req, audio = item
        if isinstance(audio, Exception):
            return SkippedWord(word.surface, f"tts: {type(audio).__name__}: {audio}")
        try:
            return EntityRecord(word, backend.encode(audio, layers), req.key)
        except Exception as exc:
            return SkippedWord(word.surface, f"encode: {type(exc).__name__}: {exc}")

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        for res in pool.map(encode, zip(words, reqs, audios)):
            (skipped if isinstance(res, SkippedWord) else records).append(res)
    for s in skipped:
        logger.warning("skipped entity %r: %s", s.surface, s.reason)
    return records, skipped


def build(
    words: Iterable[str | EntityWord],
    tts: TtsClient,
    backend: AsrBackend,
    layers=DEFAULT_LAYERS,
    parallelism: int = 4,
) -> EntityDatabase:
    """TTS every word, encode it, keep the cropped multi-layer hidden states.

    A word whose synthesis or encoding fails is listed in ``db.skipped``
    instead of aborting the build.
    """
    words = _as_words(words)
    if not words:
        raise InputError("no entity words given")
    layers = backend.check_layers(layers)
    records, skipped = _encode_words(words, tts, backend, layers, parallelism)
    return EntityDatabase(records, layers, backend.info().fingerprint(), skipped)


def add_words(
    db: EntityDatabase,
    new_words: Iterable[str | EntityWord],
    tts: TtsClient,
    backend: AsrBackend,
    parallelism: int = 4,
) -> EntityDatabase:
    """Return a new database with ``new_words`` added; existing records are reused as-is."""
    db.check_compatible(backend.info())
    new_words = _as_words(new_words)
    clash = [w.surface for w in new_words if w.normalized in {r.word.normalized for r in db.records}]
    if clash:
        raise InputError(f"already in database: {clash}")
    records, skipped = _encode_words(new_words, tts, backend, db.layers, parallelism)
    return EntityDatabase(db.records + records, db.layers, dict(db.fingerprint), db.skipped + skipped)


def save(db: EntityDatabase, path: str | Path) -> Path:
    """Write ``manifest.json`` plus one float32 blob holding every record's tensor."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    with BlobWriter(path / TENSORS) as blob:
        for rec in db.records:
            loc = blob.append(rec.hidden.data)
            entries.append({
                "surface": rec.word.surface,
                "normalized": rec.word.normalized,
                "language_hint": rec.word.language_hint,
                "source_audio_key": rec.source_audio_key,
                **loc,
            })
    manifest = {
        "format": FORMAT,
        "version": 1,
        "layers": format_layer_range(db.layers),
        "fingerprint": db.fingerprint,
        "record_count": len(entries),
        "tensor_file": TENSORS,
        "records": entries,
        "skipped": [{"surface": s.surface, "reason": s.reason} for s in db.skipped],
    }
    (path / MANIFEST).write_text(json.dumps(manifest, ensure_ascii=False, indent=1), encoding="utf-8")
    return path


def load(path: str | Path, backend: AsrBackend | None = None) -> EntityDatabase:
    """Load a saved database; with ``backend`` given, check it is compatible first."""
    path = Path(path)
    manifest = json.loads((path / MANIFEST).read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT:
        raise InputError(f"{path} is not an entity database")
    layers = parse_layer_range(manifest["layers"])
    fingerprint = manifest["fingerprint"]
    if manifest["record_count"] != len(manifest["records"]):
        raise InputError(f"{path}: manifest record_count disagrees with its record list")
    reader = BlobReader(path / manifest["tensor_file"])
    records = [
        EntityRecord(
            EntityWord(e["surface"], e["normalized"], e["language_hint"]),
            LayerStack(layers, reader.read(e), fingerprint["frame_duration_s"]),
            e["source_audio_key"],
        )
        for e in manifest["records"]
    ]
    db = EntityDatabase(records, layers, fingerprint, [SkippedWord(**s) for s in manifest.get("skipped", [])])
    if backend is not None:
        db.check_compatible(backend.info())
    return db


def read_words_file(path: str | Path) -> list[str]:
    """One entity per line, UTF-8; blank lines and ``#`` comments ignored."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
