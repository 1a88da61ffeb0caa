import json

import numpy as np
import pytest

from biasasr import entity_db
from biasasr.backend import BackendInfo, MockBackend, mock_tts
from biasasr.entity_db import EntityWord
from biasasr.errors import CompatibilityError, InputError, TransportError
from biasasr.tts import TtsClient, TtsRequest


@pytest.fixture
def db(tts, backend):
    return entity_db.build(["ab", "cd"], tts, backend)


def test_build_two_words(db):
    assert len(db) == 2
    for rec in db.records:
        assert (rec.hidden.frames, len(rec.hidden.layers), rec.hidden.dims) == (2, 12, 16)
    assert db.fingerprint == {"model_id": "mock", "hidden_dim": 16, "frame_duration_s": 0.1}


def test_duplicates_rejected(tts, backend):
    with pytest.raises(InputError, match="ab"):
        entity_db.build(["ab", "ab"], tts, backend)
    with pytest.raises(InputError):
        entity_db.build(["ＡＢ", "ab"], tts, backend)


def test_empty_word_list(tts, backend):
    with pytest.raises(InputError):
        entity_db.build([], tts, backend)


def test_records_equal_recomputed_encoding(db, backend):
    for rec in db.records:
        assert rec.hidden == backend.encode(mock_tts(rec.word.surface))


def test_insertion_order_irrelevant(tts, backend):
    a = entity_db.build(["cd", "ab", "邓郁松"], tts, backend)
    b = entity_db.build(["邓郁松", "ab", "cd"], tts, backend)
    assert a == b
    assert [r.word.normalized for r in a.records] == sorted(["ab", "cd", "邓郁松"])


def test_normalization():
    w = EntityWord.from_text(" ＭＴＤＮＮ ")
    assert (w.surface, w.normalized, w.language_hint) == ("ＭＴＤＮＮ", "mtdnn", "en")
    assert EntityWord.from_text("梯度base的computation").language_hint == "mixed"


def test_save_load_roundtrip(db, tmp_path, backend):
    entity_db.save(db, tmp_path / "db")
    loaded = entity_db.load(tmp_path / "db", backend)
    assert loaded == db
    for a, b in zip(loaded.records, db.records):
        assert a.hidden.data.tobytes() == b.hidden.data.tobytes()
    manifest = json.loads((tmp_path / "db" / "manifest.json").read_text())
    assert manifest["record_count"] == len(db) == len(manifest["records"])
    assert manifest["layers"] == "10:21"


def test_blob_is_little_endian_float32(db, tmp_path):
    entity_db.save(db, tmp_path / "db")
    raw = np.fromfile(tmp_path / "db" / "hidden.f32", dtype="<f4")
    assert raw.size == sum(r.hidden.data.size for r in db.records)


class WideMock(MockBackend):
    def __init__(self):
        super().__init__()
        self._info = BackendInfo("mock", 24, 32, 0.1)


def test_load_refuses_other_backend(db, tmp_path):
    entity_db.save(db, tmp_path / "db")
    with pytest.raises(CompatibilityError):
        entity_db.load(tmp_path / "db", WideMock())


def test_add_words_incremental(db, tts, backend):
    before = {r.word.normalized: r.hidden.data.copy() for r in db.records}
    bigger = entity_db.add_words(db, ["ef"], tts, backend)
    assert len(bigger) == 3
    for rec in bigger.records:
        if rec.word.normalized in before:
            assert rec.hidden.data.tobytes() == before[rec.word.normalized].tobytes()
    assert len(db) == 2


def test_add_existing_word(db, tts, backend):
    with pytest.raises(InputError):
        entity_db.add_words(db, ["AB"], tts, backend)


def test_add_word_in_another_language(tts, backend):
    zh = entity_db.build(["邓郁松", "王晔君", "金融机构"], tts, backend)
    mixed = entity_db.add_words(zh, ["MTDNN"], tts, backend)
    assert "MTDNN" in mixed
    assert {r.word.language_hint for r in mixed.records} == {"zh", "en"}


def test_tts_failure_skips_word(backend):
    def engine(req):
        if req.text == "bad":
            raise TransportError("down")
        return mock_tts(req.text)

    client = TtsClient(engine, retries=1)
    db = entity_db.build(["ab", "bad", "cd"], client, backend)
    assert db.surfaces == ["ab", "cd"]
    assert [s.surface for s in db.skipped] == ["bad"]
    assert "TransportError" in db.skipped[0].reason


def test_aishell_hotword_scale(tts, backend):
    # the Aishell hot-word subset ships 226 entities
    rng = np.random.default_rng(0)
    pool = "邓郁松王晔君金融机构市场机制银行业分支李张刘陈杨黄赵周吴徐孙马朱胡郭何高林"
    words = set()
    while len(words) < 226:
        words.add("".join(pool[i] for i in rng.integers(len(pool), size=3)))
    db = entity_db.build(sorted(words), tts, backend)
    assert len(db) == 226


def test_words_file(tmp_path):
    path = tmp_path / "words.txt"
    path.write_text("邓郁松\n\n# comment\nMTDNN\n", encoding="utf-8")
    assert entity_db.read_words_file(path) == ["邓郁松", "MTDNN"]
