import json

import pytest
from hypothesis import given, settings, strategies as st

from biasasr.errors import InputError
from biasasr.kws import KwsDecision
from biasasr.entity_db import EntityWord
from biasasr.metrics import (
    align,
    entity_hit,
    entity_recall,
    evaluate_condition,
    f1_score,
    format_table,
    join_tokens,
    kws_scores,
    mer,
    report,
    tokenize_mixed,
)
from oracles import edit_distance


def texts(tokens):
    return [t.text for t in tokens]


def test_tokenize_examples():
    toks = tokenize_mixed("北京hello world报")
    assert texts(toks) == ["北", "京", "hello", "world", "报"]
    assert [t.kind for t in toks] == ["han", "han", "latin", "latin", "han"]
    assert tokenize_mixed("") == []
    assert [t.kind for t in tokenize_mixed("MTDNN maintained number")] == ["latin"] * 3


def test_tokenize_normalizes():
    assert texts(tokenize_mixed("ＭＴＤＮＮ，很好！")) == ["mtdnn", "很", "好"]
    assert texts(tokenize_mixed("It's 2024年")) == ["its", "2024", "年"]
    assert [t.kind for t in tokenize_mixed("2024年")] == ["digit", "han"]


@settings(max_examples=200, deadline=None)
@given(st.text(st.sampled_from("北京报ab cXY12，。! "), max_size=30))
def test_tokenize_round_trip(text):
    toks = tokenize_mixed(text)
    assert tokenize_mixed(join_tokens(toks)) == toks
    for t in toks:
        assert (len(t.text) == 1) if t.kind == "han" else (" " not in t.text)


def test_mer_examples():
    assert mer("邓郁松认为", "邓郁松认为").mer == 0.0
    a = mer("邓郁松认为", "邓玉松认为")
    assert (a.substitutions, a.n_ref, a.mer) == (1, 5, 20.0)
    a = mer("北京 hello", "北京 hello hello")
    assert a.insertions == 1 and a.mer == pytest.approx(33.3, abs=0.05)
    with pytest.raises(InputError):
        mer("，。", "x")


def test_mer_ignores_latin_spacing_and_case():
    assert mer("用 BERT  模型", "用bert模型").mer == 0.0


def test_pure_chinese_is_cer_and_english_is_wer():
    assert mer("今天天气好", "今天天汽").errors == edit_distance("今天天气好", "今天天汽")
    assert mer("the cat sat down", "the bat sat").errors == edit_distance(
        "the cat sat down".split(), "the bat sat".split())


tokens = st.lists(st.sampled_from(["a", "b", "c", "北", "京"]), max_size=12)


@settings(max_examples=300, deadline=None)
@given(tokens.filter(bool), tokens)
def test_align_matches_oracle(ref, hyp):
    a = align(ref, hyp)
    assert a.errors == edit_distance(ref, hyp)
    assert a.substitutions + a.deletions + a.matches == len(ref)
    assert a.substitutions + a.insertions + a.matches == len(hyp)
    assert a.mer <= 100.0 * (len(ref) + len(hyp)) / len(ref)
    assert [o.ref for o in a.ops if o.ref is not None] == ref
    assert [o.hyp for o in a.ops if o.hyp is not None] == hyp


def test_recall_examples():
    gold = {"u1": ["MTDNN"], "u2": ["邓郁松"]}
    assert entity_recall(gold, {"u1": "the MTDNN model", "u2": "记者邓郁松"}).recall == 100.0
    assert entity_recall({"u1": ["MTDNN"]}, {"u1": "the EmptyDNN model"}).recall == 0.0
    r = entity_recall(gold, {"u1": "the MTDNN model", "u2": "记者邓玉松"})
    assert (r.recall, r.hits, r.total) == (50.0, 1, 2)
    with pytest.raises(InputError):
        entity_recall({"u1": []}, {"u1": "x"})


def test_latin_entities_respect_word_boundaries():
    assert not entity_hit("BERT", "roberta is here")
    assert entity_hit("BERT", "用BERT模型")
    assert entity_hit("deep learning", "Deep  learning rocks")


@settings(max_examples=100, deadline=None)
@given(st.text(st.sampled_from("邓郁松玉ab "), max_size=15), st.sampled_from(["邓郁松", "ab", "玉"]))
def test_recall_monotone_under_augmentation(hyp, entity):
    before = entity_recall({"u": [entity]}, {"u": hyp}).recall
    after = entity_recall({"u": [entity]}, {"u": hyp + " " + entity}).recall
    assert after >= before and after == 100.0


def test_kws_scores():
    s = kws_scores([True, False, True], [True, False, True])
    assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)
    s = kws_scores([False, False], [True, False])
    assert s.recall == 0.0 and s.precision is None and s.f1 is None
    assert f1_score(0.398, 0.803) == pytest.approx(0.532, abs=1e-3)
    with pytest.raises(InputError):
        kws_scores([True], [True, False])


def test_kws_scores_accepts_decisions():
    w = EntityWord.from_text("甲乙")
    s = kws_scores([KwsDecision(w, 12.0, 10.0), KwsDecision(w, 3.0, 10.0)], [True, True])
    assert (s.tp, s.fn, s.precision, s.recall) == (1, 1, 1.0, 0.5)


def test_report_and_table():
    refs = {"a": "记者邓郁松日前", "b": "北京 hello"}
    gold = {"a": ["邓郁松"], "b": ["hello"]}
    conds = {"no_prompt": {"a": "记者邓玉松日前", "b": "北京 hello"},
             "naive_predicted": {"a": "记者邓郁松日前", "b": "北京 hello"}}
    reps = report(conds, refs, gold)
    assert [r.condition for r in reps] == ["no_prompt", "naive_predicted"]
    assert reps[0].mer == pytest.approx(100 / 10) and reps[0].entity_recall == 50.0
    assert reps[1].mer == 0.0 and reps[1].entity_recall == 100.0
    table = format_table(reps).splitlines()
    assert len(table) == 3
    assert table[1].endswith("10.0 / 50.0") and table[2].endswith("0.0 / 100.0")
    json.dumps([r.to_json() for r in reps])


def test_report_errors():
    with pytest.raises(InputError):
        report({}, {"a": "x"})
    with pytest.raises(InputError):
        evaluate_condition("c", {"a": "x"}, {})
    with pytest.raises(InputError):
        evaluate_condition("c", {"a": "x"}, {"b": "x"})
