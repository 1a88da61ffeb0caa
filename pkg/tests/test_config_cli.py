import json
import subprocess
import sys

import numpy as np
import pytest

from biasasr.audio import write_wav
from biasasr.backend import mock_tts
from biasasr.cli import main
from biasasr.config import DEFAULTS, validate_config
from biasasr.corpus import write_jsonl
from biasasr.errors import ConfigError
from biasasr.synthetic import make_corpus, make_entity_world, make_vocab


def test_minimal_config_defaults():
    cfg = validate_config({"backend": "mock"})
    assert cfg.layers == tuple(range(10, 22))
    assert cfg["beam"] == 5 and cfg["threshold"] == 10.0
    c = cfg.classifier_config()
    assert (c.architecture, c.learning_rate, c.batch_size, c.epochs) == ("resnet50", 5e-5, 64, 6)


def test_nested_tables_flatten(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"classifier": {"epochs": 2}, "backend.confusion": {"郁": "玉"}}))
    cfg = validate_config(path)
    assert cfg["classifier.epochs"] == 2 and cfg["backend.confusion"] == {"郁": "玉"}
    # "backend" names the backend, so it cannot also be a table
    with pytest.raises(ConfigError):
        validate_config({"backend": {"confusion": {}}})


def test_layer_range_beyond_backend():
    with pytest.raises(ConfigError) as err:
        validate_config({"layers": "30:40"})
    assert any("24" in e for e in err.value.errors)


def test_all_errors_reported():
    with pytest.raises(ConfigError) as err:
        validate_config({"beam": 0, "prompt.style": "fancy"})
    assert len(err.value.errors) == 2


def test_stage_seeds_are_stable_and_distinct():
    a, b = validate_config({"seed": 1}), validate_config({"seed": 1})
    assert a.stage_seed("train") == b.stage_seed("train") != a.stage_seed("sample")
    assert a.config_hash() == b.config_hash() != validate_config({"seed": 2}).config_hash()


def test_defaults_are_known_keys():
    validate_config(dict(DEFAULTS))


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_bad_config_exits_2(tmp_path, capsys):
    assert main(["validate-config", "--set", "layers=30:40", "--set", "beam=0"]) == 2
    assert capsys.readouterr().err.count("config error") == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "biasasr", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()


def _write_corpus(root, utts, name="corpus.jsonl"):
    rows = []
    for u in utts:
        wav = root / "wav" / f"{u.utterance_id}.wav"
        wav.parent.mkdir(exist_ok=True)
        write_wav(wav, mock_tts(u.transcript))
        rows.append({"utterance_id": u.utterance_id, "transcript": u.transcript, "audio_path": f"wav/{u.utterance_id}.wav"})
    write_jsonl(root / name, rows)
    return root / name


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    words = make_vocab(rng, 120, 3, 5)
    train = _write_corpus(root, make_corpus(rng, words, 150, prefix="tr"), "train.jsonl")
    entities, confusion, test_utts, gold = make_entity_world(np.random.default_rng(1), 8, 12)
    test = _write_corpus(root, test_utts, "test.jsonl")
    (root / "entities.txt").write_text("\n".join(entities) + "\n", encoding="utf-8")
    write_jsonl(root / "gold.jsonl", [{"utterance_id": k, "entities": v} for k, v in gold.items()])
    cfg = {
        "backend.confusion": confusion,
        "classifier.architecture": "small_cnn",
        "classifier.epochs": 3,
        "classifier.learning_rate": 1e-3,
        "tts.cache_dir": str(root / "tts"),
    }
    (root / "config.json").write_text(json.dumps(cfg, ensure_ascii=False), encoding="utf-8")
    return root, train, test


def run(root, *argv):
    return main([argv[0], "--config", str(root / "config.json"), *argv[1:]])


def test_end_to_end(world, capsys):
    root, train, test = world
    assert run(root, "build-db", "--words", str(root / "entities.txt"), "--out", str(root / "db")) == 0
    assert (root / "db" / "manifest.json").is_file() and (root / "db" / "run_manifest.json").is_file()
    assert run(root, "synth-dataset", "--corpus", str(train), "--out", str(root / "kws")) == 0
    assert run(root, "train-kws", "--data", str(root / "kws"), "--out", str(root / "kws.ckpt")) == 0
    manifest = json.loads((root / "kws.ckpt.manifest.json").read_text())
    assert manifest["classifier"]["weights_sha256"] and manifest["config_hash"]

    assert run(root, "score-kws", "--db", str(root / "db"), "--classifier", str(root / "kws.ckpt"),
               "--corpus", str(test), "--entities", str(root / "gold.jsonl"), "--out", str(root / "scores.jsonl")) == 0
    assert run(root, "pr-curve", "--scores", str(root / "scores.jsonl"), "--threshold", "0",
               "--out", str(root / "pr.json")) == 0
    pr = json.loads((root / "pr.json").read_text())
    assert pr["curve"] and pr["at_threshold"]["tp"] + pr["at_threshold"]["fn"] == 12

    common = ["--corpus", str(test), "--prompt-style", "naive"]
    assert run(root, "transcribe", *common, "--prompt-style", "none", "--out", str(root / "none.jsonl")) == 0
    assert run(root, "transcribe", *common, "--db", str(root / "db"), "--classifier", str(root / "kws.ckpt"),
               "--threshold", "0", "--out", str(root / "pred.jsonl")) == 0
    assert run(root, "transcribe", *common, "--oracle", str(root / "gold.jsonl"), "--out", str(root / "oracle.jsonl")) == 0
    row = json.loads((root / "pred.jsonl").read_text(encoding="utf-8").splitlines()[0])
    assert set(row) == {"utterance_id", "text", "prompt_used", "detected", "fallback_triggered", "compression_ratio"}

    assert run(root, "evaluate", "--ref", str(test), "--entities", str(root / "gold.jsonl"),
               "--hyp", f"no_prompt={root / 'none.jsonl'}", "--hyp", f"naive_predicted={root / 'pred.jsonl'}",
               "--hyp", f"naive_oracle={root / 'oracle.jsonl'}", "--out", str(root / "report.json")) == 0
    rep = {c["condition"]: c for c in json.loads((root / "report.json").read_text())["conditions"]}
    assert rep["naive_oracle"]["entity_recall"] == 100.0
    assert rep["naive_predicted"]["entity_recall"] >= rep["no_prompt"]["entity_recall"]
    assert "MER" in capsys.readouterr().out


def test_transcribe_rerun_is_bit_identical(world):
    root, _, test = world
    outs = []
    for name in ("a.jsonl", "b.jsonl"):
        assert run(root, "transcribe", "--corpus", str(test), "--oracle", str(root / "gold.jsonl"),
                   "--out", str(root / name)) == 0
        outs.append((root / name).read_bytes())
    assert outs[0] == outs[1]


def test_stage_failure_exits_1(world, capsys):
    root, _, test = world
    assert run(root, "score-kws", "--db", str(root / "missing-db"), "--classifier", str(root / "nope.ckpt"),
               "--corpus", str(test), "--out", str(root / "x.jsonl")) == 1
    assert "error [" in capsys.readouterr().err


def test_db_without_classifier_is_usage_error(world):
    root, _, test = world
    (root / "db").mkdir(exist_ok=True)
    if not (root / "db" / "manifest.json").exists():
        assert run(root, "build-db", "--words", str(root / "entities.txt"), "--out", str(root / "db")) == 0
    assert run(root, "transcribe", "--corpus", str(test), "--db", str(root / "db"), "--out", str(root / "y.jsonl")) == 2
