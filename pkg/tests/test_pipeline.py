import json
import zlib

import numpy as np
import pytest

from biasasr import entity_db
from biasasr.backend import DecodeParams, MockBackend, mock_tts
from biasasr.corpus import Utterance
from biasasr.errors import ConfigError, StageError
from biasasr.pipeline import (
    PromptSpec,
    TranscribeOptions,
    compression_ratio,
    render_prompt,
    transcribe,
    transcribe_corpus,
)
from biasasr.synthetic import make_entity_world

NATURAL = ("The quick brown fox jumps over the lazy dog while the farmer "
           "watches from the porch and drinks coffee slowly")
NAMES = ["邓郁松", "张伟", "李静", "王芳芳", "刘德华"]
OPTS = TranscribeOptions(style="naive", threshold=0.0)


def test_render_naive_english():
    assert render_prompt(PromptSpec("naive", "en", ("entity 1", "entity 2", "entity 3"))) == \
        "entity 1, entity 2, entity 3"


def test_render_spoken_chinese():
    assert render_prompt(PromptSpec("spoken_form", "zh", ("甲", "乙"))) == \
        "今天演讲的主题是这个呃，甲、乙。好，那我就继续讲。"


def test_render_spoken_english():
    assert render_prompt(PromptSpec("spoken_form", "en", ("BERT", "GPT"))) == \
        "The topic of today’s speech is, ah, BERT, GPT. Okay, then I’ll continue."
    assert render_prompt(PromptSpec("spoken_form", "en", ())) == ""


def test_render_none_and_dedup():
    assert render_prompt(PromptSpec("none", "zh", ("甲",))) == ""
    assert PromptSpec("naive", "zh", ("甲", "乙", "甲")).entities == ("甲", "乙")
    with pytest.raises(ConfigError):
        render_prompt(PromptSpec("naive", "fr", ("a",)))
    with pytest.raises(ConfigError):
        PromptSpec("fancy")


def test_compression_ratio_examples():
    assert compression_ratio("") == 0.0
    assert compression_ratio("ab" * 500) > 2
    assert len(NATURAL.split()) == 20
    raw = NATURAL.encode()
    assert compression_ratio(NATURAL) == len(raw) / len(zlib.compress(raw))
    assert compression_ratio(NATURAL) == pytest.approx(1.2135, abs=1e-4)


@pytest.fixture
def confused():
    return MockBackend({"郁": "玉"})


@pytest.fixture
def names_db(confused, tts):
    db = entity_db.build(NAMES, tts, confused)
    confused.encode_calls = confused.decode_calls = 0
    return db


def test_detected_entity_fixes_transcript(desk, confused, names_db):
    audio = mock_tts("记者邓郁松日前")
    res = transcribe(audio, confused, names_db, desk.classifier, OPTS)
    assert "邓郁松" in [d.word.surface for d in res.detected if d.accepted]
    assert res.text == "记者邓郁松日前"
    assert res.prompt_used == "邓郁松"
    assert not res.fallback_triggered
    assert transcribe(audio, confused, None, None, OPTS).text == "记者邓玉松日前"


def test_encode_once(desk, confused, names_db):
    transcribe(mock_tts("记者邓郁松日前"), confused, names_db, desk.classifier, OPTS)
    assert confused.encode_calls == 1
    assert confused.decode_calls == 1


def test_empty_db_is_plain_decode(desk, confused, tts):
    empty = entity_db.EntityDatabase([], entity_db.DEFAULT_LAYERS, confused.info().fingerprint())
    audio = mock_tts("记者邓郁松日前")
    res = transcribe(audio, confused, empty, desk.classifier, OPTS)
    assert res.prompt_used == "" and res.detected == []
    assert res.text == confused.decode(audio, DecodeParams(5, "zh", None)).text


def test_style_none_bit_identical(desk, confused, names_db):
    audio = mock_tts("记者邓郁松日前")
    res = transcribe(audio, confused, names_db, desk.classifier, TranscribeOptions(style="none"))
    direct = confused.decode(audio, DecodeParams(5, "zh", None))
    assert res.text == direct.text and res.prompt_used == ""
    assert confused.encode_calls == 0


def test_rigged_repetition_falls_back_once(tts):
    rigged = MockBackend({"郁": "玉"}, repeat_when_prompted=20)
    audio = mock_tts("记者邓郁松日前")
    res = transcribe(audio, rigged, None, None, OPTS, oracle_entities=["邓郁松"])
    assert res.fallback_triggered
    assert res.compression_ratio > 2
    assert res.text == rigged.decode(audio, DecodeParams(5, "zh", None)).text
    assert rigged.decode_calls == 3  # prompted, re-decode, and the reference decode above


def test_honest_decode_keeps_prompted_text():
    b = MockBackend({"郁": "玉"})
    res = transcribe(mock_tts("记者邓郁松日前"), b, None, None, OPTS, oracle_entities=["邓郁松"])
    assert not res.fallback_triggered and b.decode_calls == 1


class FixedScores:
    """Classifier stand-in returning preset logits in database order."""

    def __init__(self, logits):
        self.logits = np.asarray(logits, dtype=np.float32)

    def score(self, maps):
        return self.logits[: len(maps)]


def test_prompt_order_and_cap(confused, tts):
    words = [f"词{i:02d}" for i in range(40)]
    db = entity_db.build(words, tts, confused)
    logits = np.arange(40, dtype=np.float32)
    opts = TranscribeOptions(style="naive", threshold=0.0)
    res = transcribe(mock_tts("你好"), confused, db, FixedScores(logits), opts)
    order = {r.word.surface: i for i, r in enumerate(db.records)}
    shown = res.prompt_used.split("、")
    assert len(shown) == 32
    assert [order[w] for w in shown] == sorted((order[w] for w in shown), reverse=True)
    assert [d.logit for d in res.detected] == sorted((d.logit for d in res.detected), reverse=True)


def test_missing_classifier_is_stage_error(confused, names_db):
    with pytest.raises(StageError) as err:
        transcribe(mock_tts("你好"), confused, names_db, None, OPTS)
    assert err.value.stage == "detect"


def test_deterministic(desk, confused, names_db):
    a = transcribe(mock_tts("记者邓郁松日前"), confused, names_db, desk.classifier, OPTS)
    b = transcribe(mock_tts("记者邓郁松日前"), confused, names_db, desk.classifier, OPTS)
    assert a.to_json() == b.to_json()


def test_corpus_order_and_failures(tmp_path, desk, confused, names_db):
    corpus = [Utterance(f"u{i}", t, audio=mock_tts(t)) for i, t in enumerate(["邓郁松", "张伟好", "李静"])]
    run = transcribe_corpus(corpus, confused, names_db, desk.classifier, OPTS, workers=2, seed=7)
    assert [r.utterance_id for r in run.results] == ["u0", "u1", "u2"]
    assert run.manifest["seed"] == 7 and run.manifest["succeeded"] == 3
    assert set(run.manifest["fallback"]) == {"u0", "u1", "u2"}
    assert run.manifest["classifier"]["weights_sha256"]

    bad = tmp_path / "broken.wav"
    bad.write_bytes(b"not a wav file")
    corpus[1] = Utterance("u1", "张伟好", audio_path=bad)
    run = transcribe_corpus(corpus, confused, names_db, desk.classifier, OPTS)
    assert [r.utterance_id for r in run.results] == ["u0", "u2"]
    assert len(run.failures) == 1 and run.failures[0]["utterance_id"] == "u1"
    assert run.failures[0]["stage"] == "load"
    json.dumps(run.manifest)


def test_entity_world_oracle_prompts_fix_everything():
    entities, confusion, corpus, gold = make_entity_world(np.random.default_rng(3), 10, 20)
    b = MockBackend(confusion)
    run = transcribe_corpus(corpus, b, None, None, OPTS, oracle=gold)
    truth = {u.utterance_id: u.transcript for u in corpus}
    assert all(r.text == truth[r.utterance_id] for r in run.results)
