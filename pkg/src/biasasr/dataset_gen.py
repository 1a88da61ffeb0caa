"""Synthetic KWS training data from any transcribed corpus.

Positives are vocabulary words found in an utterance's transcript. Negatives
are random vocabulary words plus *confusing* ones: neighbours of a positive in
lexicographic order (sharing a prefix) and in the order of character-reversed
words (sharing a suffix).
"""

from __future__ import annotations

import bisect
import hashlib
import json
import logging
import re
from collections import Counter
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from biasasr.backend.base import DEFAULT_LAYERS, AsrBackend, LayerStack, format_layer_range
from biasasr.corpus import Utterance, write_jsonl
from biasasr.entity_db import EntityWord
from biasasr.errors import InputError
from biasasr.kws.similarity import SimilarityMap, similarity_map
from biasasr.kws.train import KwsSample
from biasasr.tensorio import BlobReader, BlobWriter
from biasasr.text import normalize_word
from biasasr.tts import TtsClient

logger = logging.getLogger(__name__)

Segmenter = Callable[[str], list[str]]


@dataclass(frozen=True)
class VocabEntry:
    word: str
    frequency: int
    forward_rank: int
    reversed_rank: int


@dataclass(frozen=True)
class SamplingConfig:
    # 1 positive : 3 negatives, the ratio of the reference training set
    positives_per_utterance: int = 1
    random_negatives: int = 1
    confusing_negatives: int = 2
    neighbor_window: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("positives_per_utterance", "random_negatives", "confusing_negatives"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")
        if self.neighbor_window < 1:
            raise InputError("neighbor_window must be >= 1")


class Vocabulary(Sequence):
    """Vocabulary entries plus both rank orders, indexed for neighbour lookups."""

    def __init__(self, entries: Iterable[VocabEntry]):
        self.entries = list(entries)
        self.by_word = {e.word: e for e in self.entries}
        self.forward = sorted(self.entries, key=lambda e: e.forward_rank)
        self.reversed = sorted(self.entries, key=lambda e: e.reversed_rank)
        for order, attr in ((self.forward, "forward_rank"), (self.reversed, "reversed_rank")):
            if [getattr(e, attr) for e in order] != list(range(len(order))):
                raise InputError(f"{attr} is not a permutation of 0..V-1")

    @classmethod
    def from_counts(cls, counts: dict[str, int]) -> "Vocabulary":
        words = list(counts)
        fwd = {w: i for i, w in enumerate(sorted(words))}
        rev = {w: i for i, w in enumerate(sorted(words, key=lambda w: w[::-1]))}
        return cls(VocabEntry(w, counts[w], fwd[w], rev[w]) for w in words)

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Vocabulary":
        return cls.from_counts(Counter(normalize_word(w) for w in words))

    def __getitem__(self, i):
        return self.entries[i]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word) -> bool:
        return word in self.by_word

    @property
    def words(self) -> list[str]:
        return [e.word for e in self.entries]


def whitespace_segmenter(text: str) -> list[str]:
    """For corpora that ship pre-segmented transcripts (words separated by spaces)."""
    return text.split()


class GreedySegmenter:
    """Forward maximum matching against a word list.

    Latin words and digit strings are kept whole; Han text not covered by the
    dictionary falls apart into single characters.
    """

    _runs = re.compile(r"[A-Za-z0-9']+|\s+|.", re.S)

    def __init__(self, dictionary: Iterable[str], max_word_len: int | None = None):
        self.words = {normalize_word(w) for w in dictionary if w.strip()}
        self.max_len = max_word_len or max((len(w) for w in self.words), default=1)

    def __call__(self, text: str) -> list[str]:
        text = normalize_word(text)
        out = []
        i = 0
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            m = re.match(r"[a-z0-9']+", text[i:])
            if m:
                out.append(m.group())
                i += m.end()
                continue
            for n in range(min(self.max_len, len(text) - i), 0, -1):
                if n == 1 or text[i:i + n] in self.words:
                    out.append(text[i:i + n])
                    i += n
                    break
        return out


def extract_vocab(
    transcripts: Iterable[str],
    segmenter: Segmenter | None = None,
    min_len: int = 2,
    max_len: int = 8,
    cap: int = 20000,
) -> Vocabulary:
    """Most frequent ``cap`` segmented words with ``min_len <= len <= max_len``.

    Ties in frequency break lexicographically, so the result is deterministic.
    """
    transcripts = list(transcripts)
    if not transcripts:
        raise InputError("empty corpus")
    segmenter = segmenter or whitespace_segmenter
    counts: Counter[str] = Counter()
    for text in transcripts:
        for word in segmenter(text):
            word = normalize_word(word)
            if min_len <= len(word) <= max_len:
                counts[word] += 1
    kept = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:cap]
    return Vocabulary.from_counts(dict(kept))


def _common_prefix(a: str, b: str) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def confusing_negatives(
    positive: str,
    vocab: Vocabulary | Sequence[VocabEntry],
    window: int = 5,
    k: int | None = None,
    transcript: str | None = None,
) -> list[str]:
    """Lexicographic neighbours of ``positive`` in forward and reversed order.

    Candidates lie within ``window`` ranks on either side in each order.
    Words equal to the positive or occurring in ``transcript`` are dropped.
    The rest are ranked by shared prefix (forward order) or shared suffix
    (reversed order) length, then by rank distance; the first ``k`` are kept.
    """
    if not isinstance(vocab, Vocabulary):
        vocab = Vocabulary(vocab)
    positive = normalize_word(positive)
    if positive not in vocab:
        raise InputError(f"{positive!r} is not in the vocabulary")
    entry = vocab.by_word[positive]
    norm_transcript = normalize_word(transcript) if transcript else None
    best: dict[str, tuple] = {}
    for direction, order, rank in (
        (0, vocab.forward, entry.forward_rank),
        (1, vocab.reversed, entry.reversed_rank),
    ):
        for r in range(max(0, rank - window), min(len(order), rank + window + 1)):
            word = order[r].word
            if word == positive or (norm_transcript and word in norm_transcript):
                continue
            if direction == 0:
                overlap = _common_prefix(word, positive)
            else:
                overlap = _common_prefix(word[::-1], positive[::-1])
            key = (-overlap, abs(r - rank), direction, word)
            if word not in best or key < best[word]:
                best[word] = key
    ranked = sorted(best, key=best.get)
    return ranked if k is None else ranked[:k]


def _utterance_rng(seed: int, utterance_id: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{utterance_id}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


@dataclass(frozen=True)
class WordChoice:
    word: str
    kind: str  # positive | random | confusing

    @property
    def positive(self) -> bool:
        return self.kind == "positive"


def choose_words(transcript: str, vocab: Vocabulary, cfg: SamplingConfig, rng: np.random.Generator) -> list[WordChoice]:
    """Pick positive, random-negative and confusing-negative words for one utterance."""
    text = normalize_word(transcript)
    present = sorted(w for w in vocab.words if w in text)
    n_pos = min(cfg.positives_per_utterance, len(present))
    positives = [present[i] for i in sorted(rng.choice(len(present), n_pos, replace=False))] if n_pos else []
    out = [WordChoice(w, "positive") for w in positives]
    taken = set(positives)

    # random negatives: rejection sampling over the whole vocabulary
    words = vocab.words
    tries = 0
    randoms: list[str] = []
    while len(randoms) < cfg.random_negatives and tries < 50 * (cfg.random_negatives + 1):
        tries += 1
        w = words[int(rng.integers(len(words)))]
        if w in text or w in taken:
            continue
        randoms.append(w)
        taken.add(w)
    out += [WordChoice(w, "random") for w in randoms]

    # confusing negatives: round-robin over the positives' neighbour lists
    pools = [confusing_negatives(p, vocab, cfg.neighbor_window, None, text) for p in positives]
    confusing: list[str] = []
    depth = 0
    while len(confusing) < cfg.confusing_negatives and any(depth < len(p) for p in pools):
        for pool in pools:
            if depth < len(pool) and pool[depth] not in taken and len(confusing) < cfg.confusing_negatives:
                confusing.append(pool[depth])
                taken.add(pool[depth])
        depth += 1
    out += [WordChoice(w, "confusing") for w in confusing]
    return out


class WordFeatureCache:
    """Synthesize and encode each vocabulary word once."""

    def __init__(self, tts: TtsClient, backend: AsrBackend, layers=DEFAULT_LAYERS):
        self.tts = tts
        self.backend = backend
        self.layers = backend.check_layers(layers)
        self._cache: dict[str, LayerStack] = {}

    def __call__(self, word: str) -> LayerStack:
        if word not in self._cache:
            audio = self.tts.synthesize(self.tts.request_for(word))
            self._cache[word] = self.backend.encode(audio, self.layers)
        return self._cache[word]


@dataclass
class _Counts:
    utterances: int = 0
    positive: int = 0
    random: int = 0
    confusing: int = 0
    failed_words: int = 0


def iter_kws_samples(
    corpus: Iterable[Utterance],
    vocab: Vocabulary,
    tts: TtsClient,
    backend: AsrBackend,
    cfg: SamplingConfig = SamplingConfig(),
    layers=DEFAULT_LAYERS,
    counts: _Counts | None = None,
) -> Iterator[tuple[KwsSample, str]]:
    """Yield ``(sample, kind)`` for every chosen word of every utterance.

    Each utterance draws from its own RNG seeded by ``(cfg.seed, utterance_id)``,
    so the output is a pure function of corpus, vocabulary and seed.
    """
    counts = counts if counts is not None else _Counts()
    features = WordFeatureCache(tts, backend, layers)
    for utt in corpus:
        counts.utterances += 1
        choices = choose_words(utt.transcript, vocab, cfg, _utterance_rng(cfg.seed, utt.utterance_id))
        if not choices:
            continue
        hidden = backend.encode(utt.load_audio(), features.layers)
        for choice in choices:
            try:
                word_hidden = features(choice.word)
            except Exception as exc:
                counts.failed_words += 1
                logger.warning("skipping word %r: %s", choice.word, exc)
                continue
            setattr(counts, choice.kind, getattr(counts, choice.kind) + 1)
            sample = KwsSample(
                similarity_map(word_hidden, hidden),
                choice.positive,
                EntityWord.from_text(choice.word),
                utt.utterance_id,
            )
            yield sample, choice.kind


def _manifest(cfg: SamplingConfig, vocab: Vocabulary, layers, counts: _Counts) -> dict:
    return {
        "sampling": asdict(cfg),
        "vocab_size": len(vocab),
        "layers": format_layer_range(tuple(layers)),
        "counts": {
            "utterances": counts.utterances,
            "positive": counts.positive,
            "negative": counts.random + counts.confusing,
            "random_negative": counts.random,
            "confusing_negative": counts.confusing,
            "failed_words": counts.failed_words,
        },
    }


def build_kws_dataset(
    corpus: Iterable[Utterance],
    vocab: Vocabulary,
    tts: TtsClient,
    backend: AsrBackend,
    cfg: SamplingConfig = SamplingConfig(),
    layers=DEFAULT_LAYERS,
) -> tuple[list[KwsSample], dict]:
    """In-memory variant of :func:`write_kws_dataset`."""
    counts = _Counts()
    samples = [s for s, _ in iter_kws_samples(corpus, vocab, tts, backend, cfg, layers, counts)]
    return samples, _manifest(cfg, vocab, backend.check_layers(layers), counts)


SAMPLES_FILE = "samples.jsonl"
TENSORS_FILE = "maps.f32"
MANIFEST_FILE = "manifest.json"


def write_kws_dataset(
    out_dir: str | Path,
    corpus: Iterable[Utterance],
    vocab: Vocabulary,
    tts: TtsClient,
    backend: AsrBackend,
    cfg: SamplingConfig = SamplingConfig(),
    layers=DEFAULT_LAYERS,
) -> dict:
    """Stream samples to ``samples.jsonl`` + ``maps.f32`` and write ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = _Counts()
    rows = []
    with BlobWriter(out / TENSORS_FILE) as blob:
        for sample, kind in iter_kws_samples(corpus, vocab, tts, backend, cfg, layers, counts):
            rows.append({
                "utterance_id": sample.utterance_id,
                "word": sample.word.surface,
                "label": sample.label,
                "kind": kind,
                **blob.append(sample.map.data),
            })
    write_jsonl(out / SAMPLES_FILE, rows)
    manifest = _manifest(cfg, vocab, backend.check_layers(layers), counts)
    manifest["tensor_file"] = TENSORS_FILE
    manifest["samples_file"] = SAMPLES_FILE
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, ensure_ascii=False, indent=1), encoding="utf-8")
    (out / "vocab.jsonl").write_text(
        "".join(json.dumps(asdict(e), ensure_ascii=False) + "\n" for e in vocab.entries), encoding="utf-8"
    )
    return manifest


class KwsDataset(Sequence):
    """Lazily loaded dataset directory written by :func:`write_kws_dataset`."""

    def __init__(self, path: str | Path, kinds: Iterable[str] | None = None):
        self.path = Path(path)
        self.manifest = json.loads((self.path / MANIFEST_FILE).read_text(encoding="utf-8"))
        from biasasr.corpus import read_jsonl

        rows = read_jsonl(self.path / self.manifest["samples_file"])
        if kinds is not None:
            kinds = set(kinds)
            rows = [r for r in rows if r["kind"] in kinds]
        self.rows = rows
        self._blob = BlobReader(self.path / self.manifest["tensor_file"])

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i) -> KwsSample:
        row = self.rows[i]
        return KwsSample(
            SimilarityMap(self._blob.read(row)),
            row["label"] == "positive",
            EntityWord.from_text(row["word"]),
            row["utterance_id"],
        )


def read_vocab(path: str | Path) -> Vocabulary:
    from biasasr.corpus import read_jsonl

    return Vocabulary(VocabEntry(**row) for row in read_jsonl(path))
