"""``biasasr`` command line: build-db, synth-dataset, train-kws, score-kws,
transcribe, evaluate, pr-curve, validate-config."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from biasasr import __version__
from biasasr.backend import format_layer_range, parse_layer_range
from biasasr.config import RunConfig, coerce, validate_config
from biasasr.corpus import read_corpus, read_jsonl, write_jsonl
from biasasr.errors import BiasAsrError, ConfigError, StageError

logger = logging.getLogger("biasasr")

EXIT_OK, EXIT_STAGE, EXIT_USAGE = 0, 1, 2


def _write_manifest(path: Path, cfg: RunConfig, command: str, started: float, extra: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg.values,
        "config_hash": cfg.config_hash(),
        "seconds": round(time.perf_counter() - started, 3),
        **extra,
    }
    path.write_text(json.dumps(manifest, ensure_ascii=False, indent=1, default=str), encoding="utf-8")


def _manifest_path(out: Path) -> Path:
    return out / "run_manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")


def _load_db(path, backend):
    from biasasr import entity_db

    return entity_db.load(path, backend)


def _entities_map(path) -> dict[str, list[str]]:
    return {str(r["utterance_id"]): list(r.get("entities", [])) for r in read_jsonl(path)}


def cmd_build_db(args, cfg: RunConfig) -> dict:
    from biasasr import entity_db

    backend = cfg.backend()
    words = entity_db.read_words_file(args.words)
    db = entity_db.build(words, cfg.tts_client(), backend, cfg.layers, parallelism=cfg["workers"])
    entity_db.save(db, args.out)
    for s in db.skipped:
        print(f"skipped {s.surface}: {s.reason}", file=sys.stderr)
    print(f"{len(db)} entities -> {args.out} ({len(db.skipped)} skipped)")
    return {"backend": backend.info().fingerprint(), "records": len(db), "skipped": len(db.skipped)}


def cmd_synth_dataset(args, cfg: RunConfig) -> dict:
    from biasasr.dataset_gen import GreedySegmenter, extract_vocab, write_kws_dataset
    from biasasr.entity_db import read_words_file

    corpus = read_corpus(args.corpus)
    dictionary = args.dictionary or cfg["vocab.dictionary"]
    segmenter = GreedySegmenter(read_words_file(dictionary)) if dictionary else None
    vocab = extract_vocab(
        [u.transcript for u in corpus], segmenter,
        cfg["vocab.min_len"], cfg["vocab.max_len"], args.vocab_size or cfg["vocab.size"],
    )
    backend = cfg.backend()
    manifest = write_kws_dataset(args.out, corpus, vocab, cfg.tts_client(), backend, cfg.sampling_config(), cfg.layers)
    print(json.dumps(manifest["counts"], ensure_ascii=False))
    return {"backend": backend.info().fingerprint(), "dataset": manifest}


def cmd_train_kws(args, cfg: RunConfig) -> dict:
    from biasasr.dataset_gen import KwsDataset
    from biasasr.kws import train
    from biasasr.pipeline import classifier_fingerprint

    kinds = args.kinds.split(",") if args.kinds else None
    parts = [KwsDataset(p, kinds) for p in args.data]
    # a single dataset stays lazily loaded; several are merged in memory
    samples = parts[0] if len(parts) == 1 else [part[i] for part in parts for i in range(len(part))]
    clf, report = train(samples, cfg.classifier_config())
    clf.save(args.out)
    print(f"held-out AUC per epoch: {[round(a, 4) for a in report.heldout_auc]}")
    return {
        "training": {"epoch_losses": report.epoch_losses, "heldout_auc": report.heldout_auc,
                     "n_train": report.n_train, "n_heldout": report.n_heldout},
        "classifier": classifier_fingerprint(clf),
    }


def cmd_score_kws(args, cfg: RunConfig) -> dict:
    from biasasr.kws import KwsClassifier, detect

    backend = cfg.backend()
    db = _load_db(args.db, backend)
    clf = KwsClassifier.load(args.classifier)
    gold = _entities_map(args.entities) if args.entities else None
    threshold = float(cfg["threshold"])
    rows = []
    for utt in read_corpus(args.corpus):
        hidden = backend.encode(utt.load_audio(), db.layers)
        present = None
        if gold is not None:
            from biasasr.text import normalize_word

            present = {normalize_word(e) for e in gold.get(utt.utterance_id, [])}
        for d in detect(db, hidden, clf, threshold):
            row = {"utterance_id": utt.utterance_id, "word": d.word.surface, "logit": d.logit, "accepted": d.accepted}
            if present is not None:
                row["label"] = d.word.normalized in present
            rows.append(row)
    write_jsonl(args.out, rows)
    print(f"{len(rows)} decisions -> {args.out}")
    return {"backend": backend.info().fingerprint(), "threshold": threshold}


def cmd_transcribe(args, cfg: RunConfig) -> dict:
    from biasasr.kws import KwsClassifier
    from biasasr.pipeline import transcribe_corpus

    backend = cfg.backend()
    db = _load_db(args.db, backend) if args.db else None
    clf = KwsClassifier.load(args.classifier) if args.classifier else None
    oracle = _entities_map(args.oracle) if args.oracle else None
    if db is not None and clf is None and oracle is None and cfg["prompt.style"] != "none":
        raise ConfigError("--db needs --classifier (or use --oracle)")
    run = transcribe_corpus(read_corpus(args.corpus), backend, db, clf, cfg.transcribe_options(),
                            oracle=oracle, workers=cfg["workers"], seed=cfg["seed"])
    write_jsonl(args.out, [r.to_json() for r in run.results])
    print(f"{len(run.results)} transcribed, {len(run.failures)} failed -> {args.out}")
    for f in run.failures:
        print(f"failed {f['utterance_id']} [{f['stage']}]: {f['error']}", file=sys.stderr)
    return {"run": run.manifest}


def _texts(path) -> dict[str, str]:
    out = {}
    for r in read_jsonl(path):
        text = r.get("text", r.get("transcript"))
        if text is None:
            raise ConfigError(f"{path}: row {r.get('utterance_id')} has neither 'text' nor 'transcript'")
        out[str(r["utterance_id"])] = text
    return out


def cmd_evaluate(args, cfg: RunConfig) -> dict:
    from biasasr.metrics import dumps_reports, format_table, report

    refs = _texts(args.ref)
    conditions = {}
    for spec in args.hyp:
        name, _, path = spec.rpartition("=")
        conditions[name or Path(path).stem] = _texts(path)
    gold = _entities_map(args.entities) if args.entities else None
    reports = report(conditions, refs, gold)
    Path(args.out).write_text(dumps_reports(reports), encoding="utf-8")
    table = format_table(reports)
    Path(args.out).with_suffix(".txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return {"conditions": list(conditions)}


def cmd_pr_curve(args, cfg: RunConfig) -> dict:
    from dataclasses import asdict

    from biasasr.kws import pr_curve
    from biasasr.metrics import kws_scores

    rows = read_jsonl(args.scores)
    if any("label" not in r for r in rows):
        raise ConfigError(f"{args.scores}: rows need a 'label' (run score-kws with --entities)")
    curve = pr_curve((r["logit"], r["label"]) for r in rows)
    threshold = float(cfg["threshold"])
    at = kws_scores([r["logit"] >= threshold for r in rows], [r["label"] for r in rows])
    out = {"threshold": threshold, "at_threshold": asdict(at), "curve": [asdict(p) for p in curve]}
    Path(args.out).write_text(json.dumps(out, indent=1), encoding="utf-8")

    def fmt(x):
        return "null" if x is None else f"{x:.3f}"

    print(f"threshold {threshold:g}: recall {fmt(at.recall)} precision {fmt(at.precision)} F1 {fmt(at.f1)}")
    return {"points": len(curve)}


def cmd_validate_config(args, cfg: RunConfig) -> dict:
    print(json.dumps(cfg.values, ensure_ascii=False, indent=1))
    return {}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (flat dotted keys or nested tables)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="biasasr", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("build-db", parents=[common], help="synthesize and encode entity words")
    p.add_argument("--words", required=True, help="UTF-8 file, one entity per line")
    p.add_argument("--out", required=True)
    p.add_argument("--layers", help="1-based inclusive range, e.g. 10:21")
    p.add_argument("--voice", help="TTS voice for every entity")
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("synth-dataset", parents=[common], help="build the KWS training set from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--dictionary", help="word list for greedy segmentation (default: split on spaces)")
    p.add_argument("--layers")
    p.set_defaults(func=cmd_synth_dataset)

    p = sub.add_parser("train-kws", parents=[common], help="train the presence classifier")
    p.add_argument("--data", required=True, action="append", help="dataset directory (repeatable)")
    p.add_argument("--out", required=True, help="checkpoint file")
    p.add_argument("--kinds", help="comma list of sample kinds to keep, e.g. positive,random")
    p.set_defaults(func=cmd_train_kws)

    p = sub.add_parser("score-kws", parents=[common], help="score every entity against every utterance")
    p.add_argument("--db", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--entities", help="gold entities JSONL; adds a 'label' per decision")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score_kws)

    p = sub.add_parser("transcribe", parents=[common], help="biased transcription of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--db")
    p.add_argument("--classifier")
    p.add_argument("--oracle", help="gold entities JSONL used as the prompt instead of KWS")
    p.add_argument("--prompt-style", choices=("none", "naive", "spoken_form"))
    p.add_argument("--language", choices=("zh", "en", "auto"))
    p.add_argument("--threshold", type=float)
    p.add_argument("--beam", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("evaluate", parents=[common], help="MER and entity recall per condition")
    p.add_argument("--ref", required=True, help="JSONL with utterance_id and text/transcript")
    p.add_argument("--hyp", required=True, action="append", metavar="[NAME=]PATH")
    p.add_argument("--entities", help="JSONL {utterance_id, entities:[...]}")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pr-curve", parents=[common], help="precision/recall over thresholds")
    p.add_argument("--scores", required=True, help="score-kws output with labels")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pr_curve)

    p = sub.add_parser("validate-config", parents=[common], help="print the effective configuration")
    p.set_defaults(func=cmd_validate_config)
    return parser


_FLAG_KEYS = {
    "layers": "layers",
    "threshold": "threshold",
    "beam": "beam",
    "prompt_style": "prompt.style",
    "language": "prompt.language",
}


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = coerce(key.strip(), raw)
    for attr, key in _FLAG_KEYS.items():
        if getattr(args, attr, None) is not None:
            out[key] = getattr(args, attr)
    voice = getattr(args, "voice", None)
    if voice:
        out["tts.voice.zh"] = out["tts.voice.en"] = voice
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 with usage on unknown commands/flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = validate_config(args.config, _overrides(args))
        if getattr(args, "layers", None):
            parse_layer_range(args.layers)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    started = time.perf_counter()
    try:
        extra = args.func(args, cfg)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (BiasAsrError, OSError, ValueError) as exc:
        stage = exc.stage if isinstance(exc, BiasAsrError) and exc.stage else args.command
        cause = exc.cause if isinstance(exc, StageError) else exc
        print(f"error [{stage}] {type(cause).__name__}: {cause}", file=sys.stderr)
        return EXIT_STAGE
    out = getattr(args, "out", None)
    if out:
        extra = dict(extra or {})
        extra["layers"] = format_layer_range(cfg.layers)
        _write_manifest(_manifest_path(Path(out)), cfg, args.command, started, extra)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
