"""Flat dotted-key run configuration shared by every CLI subcommand."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from biasasr.backend import BACKENDS, AsrBackend, create_backend, parse_layer_range
from biasasr.errors import ConfigError
from biasasr.kws.model import ARCHITECTURES, ClassifierConfig
from biasasr.dataset_gen import SamplingConfig
from biasasr.pipeline import STYLES, TranscribeOptions
from biasasr.tts import DEFAULT_VOICES, HttpTtsEngine, MockTtsEngine, TtsClient

DEFAULTS: dict[str, Any] = {
    "backend": "mock",
    "backend.model": "openai/whisper-medium",
    "backend.device": "cpu",
    "backend.confusion": {},
    "backend.repeat_when_prompted": 0,
    "layers": "10:21",
    "tts.engine": "mock",
    "tts.endpoint": None,
    "tts.cache_dir": None,
    "tts.retries": 3,
    "tts.voice.zh": DEFAULT_VOICES["zh"],
    "tts.voice.en": DEFAULT_VOICES["en"],
    "classifier.architecture": "resnet50",
    "classifier.epochs": 6,
    "classifier.batch_size": 64,
    "classifier.learning_rate": 5e-5,
    "classifier.entity_axis_target": 32,
    "classifier.heldout_fraction": 0.1,
    "sampling.positives_per_utterance": 1,
    "sampling.random_negatives": 1,
    "sampling.confusing_negatives": 2,
    "sampling.neighbor_window": 5,
    "vocab.size": 20000,
    "vocab.min_len": 2,
    "vocab.max_len": 8,
    "vocab.dictionary": None,
    "prompt.style": "spoken_form",
    "prompt.language": "zh",
    "prompt.max_entities": 32,
    "threshold": 10.0,
    "beam": 5,
    "seed": 0,
    "workers": 1,
    "output_dir": "runs",
}

# encoder depth of known backends, for checking the layer range without loading weights
KNOWN_DEPTH = {
    "mock": 24,
    "whisper-medium": 24,
    "openai/whisper-tiny": 4,
    "openai/whisper-base": 6,
    "openai/whisper-small": 12,
    "openai/whisper-medium": 24,
    "openai/whisper-large": 32,
    "openai/whisper-large-v2": 32,
    "openai/whisper-large-v3": 32,
}

_INT_MIN = {
    "backend.repeat_when_prompted": 0,
    "tts.retries": 1,
    "classifier.epochs": 1,
    "classifier.batch_size": 1,
    "classifier.entity_axis_target": 1,
    "sampling.positives_per_utterance": 0,
    "sampling.random_negatives": 0,
    "sampling.confusing_negatives": 0,
    "sampling.neighbor_window": 1,
    "vocab.size": 1,
    "vocab.min_len": 1,
    "vocab.max_len": 1,
    "prompt.max_entities": 0,
    "beam": 1,
    "seed": 0,
    "workers": 1,
}
_CHOICES = {
    "backend": BACKENDS,
    "tts.engine": ("mock", "http"),
    "classifier.architecture": ARCHITECTURES,
    "prompt.style": STYLES,
    "prompt.language": ("zh", "en", "auto"),
}


def _flatten(d: dict, prefix: str = "") -> dict:
    """Nested tables become dotted keys; ``backend.confusion`` stays a mapping."""
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key != "backend.confusion":
            if key == "backend":
                raise ConfigError("'backend' must be a name; use dotted keys for backend options")
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def coerce(key: str, raw: str) -> Any:
    """Parse a ``--set key=value`` string according to the default's type."""
    default = DEFAULTS.get(key)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            return raw
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            return raw
    if isinstance(default, dict) or raw.startswith(("{", "[")):
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            return raw
    if raw.lower() in ("null", "none"):
        return None
    return raw


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def layers(self) -> tuple[int, ...]:
        return parse_layer_range(self.values["layers"])

    def config_hash(self) -> str:
        blob = json.dumps(self.values, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode()).hexdigest()

    def stage_seed(self, stage: str) -> int:
        """Stable per-stage seed derived from the top-level ``seed``."""
        digest = hashlib.sha256(f"{self.values['seed']}:{stage}".encode()).digest()
        return int.from_bytes(digest[:4], "little") & 0x7FFFFFFF

    def backend(self) -> AsrBackend:
        v = self.values
        return create_backend(
            v["backend"],
            confusion=v["backend.confusion"],
            repeat_when_prompted=v["backend.repeat_when_prompted"],
            model=v["backend.model"],
            device=v["backend.device"],
        )

    def tts_client(self) -> TtsClient:
        v = self.values
        engine = MockTtsEngine() if v["tts.engine"] == "mock" else HttpTtsEngine(v["tts.endpoint"])
        return TtsClient(
            engine,
            cache_dir=v["tts.cache_dir"],
            retries=v["tts.retries"],
            voices={"zh": v["tts.voice.zh"], "en": v["tts.voice.en"]},
        )

    def classifier_config(self) -> ClassifierConfig:
        v = self.values
        return ClassifierConfig(
            architecture=v["classifier.architecture"],
            epochs=v["classifier.epochs"],
            batch_size=v["classifier.batch_size"],
            learning_rate=v["classifier.learning_rate"],
            entity_axis_target=v["classifier.entity_axis_target"],
            heldout_fraction=v["classifier.heldout_fraction"],
            channels=len(self.layers),
            seed=self.stage_seed("train-kws"),
        )

    def sampling_config(self) -> SamplingConfig:
        v = self.values
        return SamplingConfig(
            positives_per_utterance=v["sampling.positives_per_utterance"],
            random_negatives=v["sampling.random_negatives"],
            confusing_negatives=v["sampling.confusing_negatives"],
            neighbor_window=v["sampling.neighbor_window"],
            seed=self.stage_seed("synth-dataset"),
        )

    def transcribe_options(self) -> TranscribeOptions:
        v = self.values
        return TranscribeOptions(
            style=v["prompt.style"],
            threshold=float(v["threshold"]),
            beam=v["beam"],
            language=v["prompt.language"],
            max_entities=v["prompt.max_entities"],
        )


def _check(values: dict) -> list[str]:
    errors = []
    for key in sorted(set(values) - set(DEFAULTS)):
        errors.append(f"unknown key {key!r}")
    for key, lo in _INT_MIN.items():
        v = values.get(key)
        if isinstance(v, bool) or not isinstance(v, int):
            errors.append(f"{key} must be an integer, got {v!r}")
        elif v < lo:
            errors.append(f"{key} must be >= {lo}, got {v}")
    for key in ("classifier.learning_rate", "threshold", "classifier.heldout_fraction"):
        v = values.get(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            errors.append(f"{key} must be a number, got {v!r}")
    lr = values.get("classifier.learning_rate")
    if isinstance(lr, (int, float)) and not lr > 0:
        errors.append(f"classifier.learning_rate must be positive, got {lr}")
    frac = values.get("classifier.heldout_fraction")
    if isinstance(frac, (int, float)) and not 0 <= frac < 1:
        errors.append(f"classifier.heldout_fraction must be in [0, 1), got {frac}")
    for key, choices in _CHOICES.items():
        if values.get(key) not in choices:
            errors.append(f"{key} must be one of {list(choices)}, got {values.get(key)!r}")
    conf = values.get("backend.confusion")
    if not isinstance(conf, dict) or any(len(str(a)) != 1 or len(str(b)) != 1 for a, b in conf.items()):
        errors.append("backend.confusion must map single characters to single characters")
    try:
        layers = parse_layer_range(values.get("layers", ""))
    except (ConfigError, TypeError, ValueError) as exc:
        errors.append(f"layers: {exc}")
    else:
        name = values.get("backend")
        depth = KNOWN_DEPTH.get(values.get("backend.model") if name == "whisper" else name)
        if min(layers) < 1:
            errors.append(f"layers {values['layers']} start below layer 1")
        if depth is not None and max(layers) > depth:
            errors.append(f"layers {values['layers']} exceed the {depth} encoder layers of backend {name!r}")
    if values.get("tts.engine") == "http" and not values.get("tts.endpoint"):
        import os

        from biasasr.tts import ENDPOINT_ENV

        if not os.environ.get(ENDPOINT_ENV):
            errors.append(f"tts.engine=http needs tts.endpoint or ${ENDPOINT_ENV}")
    dictionary = values.get("vocab.dictionary")
    if dictionary is not None and not Path(dictionary).is_file():
        errors.append(f"vocab.dictionary {dictionary!r} does not exist")
    cache = values.get("tts.cache_dir")
    if cache is not None:
        parent = Path(cache).resolve().parent
        if not parent.exists():
            errors.append(f"tts.cache_dir parent {str(parent)!r} does not exist")
    if isinstance(values.get("vocab.min_len"), int) and isinstance(values.get("vocab.max_len"), int):
        if values["vocab.min_len"] > values["vocab.max_len"]:
            errors.append("vocab.min_len exceeds vocab.max_len")
    return errors


def validate_config(source: str | Path | dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Fill defaults, apply overrides, and check everything at once.

    Raises :class:`ConfigError` whose ``errors`` lists every violation found.
    """
    if source is None:
        given = {}
    elif isinstance(source, dict):
        given = source
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"config file {str(path)!r} not found")
        try:
            given = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    values = copy.deepcopy(DEFAULTS)
    values.update(_flatten(given))
    values.update(overrides or {})
    errors = _check(values)
    if errors:
        raise ConfigError(f"{len(errors)} configuration error(s): " + "; ".join(errors), errors=errors)
    return RunConfig(values)
