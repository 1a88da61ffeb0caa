"""Encode once, spot entities, prompt the decoder with them, guard against repetition."""

from __future__ import annotations

import hashlib
import json
import logging
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from biasasr.audio import AudioBuffer
from biasasr.backend.base import AsrBackend, DecodeParams, format_layer_range
from biasasr.corpus import Utterance
from biasasr.entity_db import EntityDatabase
from biasasr.errors import ConfigError, StageError
from biasasr.kws.detect import DEFAULT_THRESHOLD, KwsDecision, detect
from biasasr.kws.model import KwsClassifier

logger = logging.getLogger(__name__)

STYLES = ("none", "naive", "spoken_form")
MAX_PROMPT_ENTITIES = 32
FALLBACK_RATIO = 2.0

TEMPLATES = {
    ("naive", "en"): ("", ", ", ""),
    ("naive", "zh"): ("", "、", ""),
    ("spoken_form", "en"): ("The topic of today’s speech is, ah, ", ", ", ". Okay, then I’ll continue."),
    ("spoken_form", "zh"): ("今天演讲的主题是这个呃，", "、", "。好，那我就继续讲。"),
}


@dataclass(frozen=True)
class PromptSpec:
    style: str = "naive"
    language: str = "zh"
    entities: tuple[str, ...] = ()

    def __post_init__(self):
        if self.style not in STYLES:
            raise ConfigError(f"prompt style must be one of {STYLES}, got {self.style!r}")
        seen = []
        for e in self.entities:
            if e not in seen:
                seen.append(e)
        object.__setattr__(self, "entities", tuple(seen))


def render_prompt(spec: PromptSpec) -> str:
    """Instantiate the template for ``spec``; no entities or style ``none`` -> ``""``."""
    if spec.style == "none":
        return ""
    key = (spec.style, spec.language)
    if key not in TEMPLATES:
        raise ConfigError(f"no {spec.style} prompt template for language {spec.language!r}")
    if not spec.entities:
        return ""
    head, sep, tail = TEMPLATES[key]
    return head + sep.join(spec.entities) + tail


def compression_ratio(text: str) -> float:
    """UTF-8 size over zlib (DEFLATE) size; ``0.0`` for empty text."""
    if not text:
        return 0.0
    raw = text.encode("utf-8")
    return len(raw) / len(zlib.compress(raw))


@dataclass(frozen=True)
class TranscribeOptions:
    style: str = "naive"
    threshold: float = DEFAULT_THRESHOLD
    beam: int = 5
    language: str = "zh"
    max_entities: int = MAX_PROMPT_ENTITIES
    fallback_ratio: float = FALLBACK_RATIO

    def __post_init__(self):
        if self.style not in STYLES:
            raise ConfigError(f"prompt style must be one of {STYLES}, got {self.style!r}")
        if self.beam < 1:
            raise ConfigError("beam must be >= 1")
        if self.max_entities < 0:
            raise ConfigError("max_entities must be >= 0")

    @property
    def prompt_language(self) -> str:
        # "auto" has no template of its own; Chinese is the default utterance language
        return "zh" if self.language == "auto" else self.language


@dataclass
class BiasedResult:
    text: str
    prompt_used: str
    detected: list[KwsDecision] = field(default_factory=list)
    fallback_triggered: bool = False
    compression_ratio: float = 0.0
    utterance_id: str = ""

    def to_json(self) -> dict:
        return {
            "utterance_id": self.utterance_id,
            "text": self.text,
            "prompt_used": self.prompt_used,
            "detected": [{"word": d.word.surface, "logit": d.logit} for d in self.detected if d.accepted],
            "fallback_triggered": self.fallback_triggered,
            "compression_ratio": self.compression_ratio,
        }


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def transcribe(
    audio: AudioBuffer,
    backend: AsrBackend,
    db: EntityDatabase | None = None,
    classifier: KwsClassifier | None = None,
    opts: TranscribeOptions = TranscribeOptions(),
    oracle_entities: Sequence[str] | None = None,
) -> BiasedResult:
    """Biased transcription of one utterance.

    Entities come from KWS over ``db`` or, when ``oracle_entities`` is given,
    straight from that list. The prompt lists accepted entities in descending
    logit order, at most ``opts.max_entities`` of them. If the prompted output
    compresses better than ``opts.fallback_ratio`` the utterance is decoded
    once more without a prompt.
    """
    decisions: list[KwsDecision] = []
    entities: list[str] = []
    if oracle_entities is not None:
        entities = list(oracle_entities)
    elif opts.style != "none" and db is not None and len(db) > 0:
        if classifier is None:
            raise StageError("detect", ConfigError("a classifier is required to detect entities"))
        _stage("detect", db.check_compatible, backend.info())
        hidden = _stage("encode", backend.encode, audio, db.layers)
        decisions = _stage("detect", detect, db, hidden, classifier, opts.threshold)
        entities = [d.word.surface for d in decisions if d.accepted]
    entities = entities[: opts.max_entities]

    prompt = render_prompt(PromptSpec(opts.style, opts.prompt_language, tuple(entities)))
    params = DecodeParams(opts.beam, opts.language, prompt or None)
    out = _stage("decode", backend.decode, audio, params)
    ratio = compression_ratio(out.text)
    fallback = False
    if prompt and ratio > opts.fallback_ratio:
        logger.info("compression ratio %.2f > %.2f; decoding again without prompt", ratio, opts.fallback_ratio)
        out = _stage("decode", backend.decode, audio, DecodeParams(opts.beam, opts.language, None))
        fallback = True
    return BiasedResult(out.text, prompt, decisions, fallback, ratio)


@dataclass
class CorpusRun:
    results: list[BiasedResult]
    failures: list[dict]
    manifest: dict


def transcribe_corpus(
    corpus: Iterable[Utterance],
    backend: AsrBackend,
    db: EntityDatabase | None = None,
    classifier: KwsClassifier | None = None,
    opts: TranscribeOptions = TranscribeOptions(),
    oracle: dict[str, Sequence[str]] | None = None,
    workers: int = 1,
    seed: int = 0,
) -> CorpusRun:
    """Transcribe every utterance independently, keeping corpus order.

    A failing utterance is recorded in ``failures`` and the run continues.
    """
    corpus = list(corpus)
    started = time.perf_counter()

    def one(utt: Utterance):
        try:
            audio = _stage("load", utt.load_audio)
            ents = oracle.get(utt.utterance_id, []) if oracle is not None else None
            res = transcribe(audio, backend, db, classifier, opts, ents)
            res.utterance_id = utt.utterance_id
            return res
        except Exception as exc:
            logger.warning("utterance %s failed: %s", utt.utterance_id, exc)
            return {"utterance_id": utt.utterance_id, "stage": getattr(exc, "stage", None), "error": str(exc)}

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(one, corpus))
    results = [o for o in outcomes if isinstance(o, BiasedResult)]
    failures = [o for o in outcomes if isinstance(o, dict)]
    manifest = {
        "options": asdict(opts),
        "oracle_prompts": oracle is not None,
        "backend": backend.info().fingerprint() | {"model_id": backend.info().model_id},
        "database": None if db is None else {
            "entities": len(db),
            "layers": format_layer_range(db.layers),
            "fingerprint": db.fingerprint,
        },
        "classifier": None if classifier is None else classifier_fingerprint(classifier),
        "seed": seed,
        "utterances": len(corpus),
        "succeeded": len(results),
        "failures": failures,
        "fallback": {r.utterance_id: r.fallback_triggered for r in results},
        "seconds": round(time.perf_counter() - started, 3),
    }
    return CorpusRun(results, failures, manifest)


def classifier_fingerprint(classifier: KwsClassifier) -> dict:
    h = hashlib.sha256()
    for name, tensor in sorted(classifier.model.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return {"config": asdict(classifier.cfg), "weights_sha256": h.hexdigest()}


def dumps_result(result: BiasedResult) -> str:
    return json.dumps(result.to_json(), ensure_ascii=False)
