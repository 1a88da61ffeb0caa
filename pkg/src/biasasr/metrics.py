"""Code-switching aware scoring: mixed error rate, entity recall, KWS precision/recall."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from biasasr.errors import InputError
from biasasr.text import is_han, normalize_for_scoring

_TOKEN = re.compile(r"\d+|[^\W\d_]+|\S", re.UNICODE)


@dataclass(frozen=True)
class MixedToken:
    text: str
    kind: str  # han | latin | digit


def tokenize_mixed(text: str) -> list[MixedToken]:
    """Each Han character, each Latin word and each digit string is one token.

    Text is normalized first: punctuation dropped, Latin lowercased,
    full-width forms folded to ASCII.
    """
    out = []
    for m in _TOKEN.finditer(normalize_for_scoring(text)):
        run = m.group()
        if run.isdigit():
            out.append(MixedToken(run, "digit"))
            continue
        # a letter run may mix scripts ("bp梯度base"): split Han out character-wise
        buf = ""
        for ch in run:
            if is_han(ch):
                if buf:
                    out.append(MixedToken(buf, "latin"))
                    buf = ""
                out.append(MixedToken(ch, "han"))
            else:
                buf += ch
        if buf:
            out.append(MixedToken(buf, "latin"))
    return out


def join_tokens(tokens: Sequence[MixedToken]) -> str:
    """Canonical spacing: a space only between two consecutive non-Han tokens."""
    out = ""
    prev = None
    for tok in tokens:
        if prev is not None and prev.kind != "han" and tok.kind != "han":
            out += " "
        out += tok.text
        prev = tok
    return out


@dataclass(frozen=True)
class EditOp:
    op: str  # match | substitute | insert | delete
    ref: str | None
    hyp: str | None


@dataclass(frozen=True)
class Alignment:
    ops: tuple[EditOp, ...]
    substitutions: int
    deletions: int
    insertions: int
    matches: int
    n_ref: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def mer(self) -> float:
        """Mixed error rate in percent."""
        return 100.0 * self.errors / self.n_ref


def align(ref: Sequence[str], hyp: Sequence[str]) -> Alignment:
    """Levenshtein alignment; ties prefer match/substitution, then deletion."""
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (ri != hyp[j - 1]), prev[j] + 1, row[j - 1] + 1)
    ops = []
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            kind = "match" if ref[i - 1] == hyp[j - 1] else "substitute"
            ops.append(EditOp(kind, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            ops.append(EditOp("delete", ref[i - 1], None))
            i -= 1
        else:
            ops.append(EditOp("insert", None, hyp[j - 1]))
            j -= 1
    ops.reverse()
    count = {k: sum(o.op == k for o in ops) for k in ("match", "substitute", "insert", "delete")}
    return Alignment(tuple(ops), count["substitute"], count["delete"], count["insert"], count["match"], n)


def mer(ref: str, hyp: str) -> Alignment:
    """Align reference and hypothesis over mixed tokens; ``.mer`` is the percentage."""
    ref_tokens = [t.text for t in tokenize_mixed(ref)]
    if not ref_tokens:
        raise InputError("reference is empty after normalization")
    return align(ref_tokens, [t.text for t in tokenize_mixed(hyp)])


def _contains(hay: list[str], needle: list[str]) -> bool:
    k = len(needle)
    return any(hay[i:i + k] == needle for i in range(len(hay) - k + 1))


def entity_hit(entity: str, hyp: str) -> bool:
    """Entity tokens must appear contiguously in the hypothesis tokens.

    For Han this is substring search; Latin words only match whole words.
    """
    needle = [t.text for t in tokenize_mixed(entity)]
    if not needle:
        raise InputError(f"entity {entity!r} is empty after normalization")
    return _contains([t.text for t in tokenize_mixed(hyp)], needle)


@dataclass
class RecallResult:
    recall: float  # percent
    hits: int
    total: int
    per_entity: list[tuple[str, str, bool]] = field(default_factory=list)  # (utterance_id, entity, hit)


def entity_recall(gold: Mapping[str, Sequence[str]], hyps: Mapping[str, str]) -> RecallResult:
    """Share of gold entity occurrences present in the hypotheses, in percent.

    ``gold`` maps utterance id to its annotated entities; every listed
    occurrence counts once.
    """
    rows = []
    for uid, entities in gold.items():
        hyp = hyps.get(uid, "")
        rows += [(uid, e, entity_hit(e, hyp)) for e in entities]
    if not rows:
        raise InputError("no gold entity occurrences")
    hits = sum(r[2] for r in rows)
    return RecallResult(100.0 * hits / len(rows), hits, len(rows), rows)


@dataclass(frozen=True)
class KwsScores:
    precision: float | None
    recall: float | None
    f1: float | None
    tp: int
    fp: int
    fn: int


def f1_score(precision: float | None, recall: float | None) -> float | None:
    if precision is None or recall is None:
        return None
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def kws_scores(predicted: Iterable, gold: Iterable[bool]) -> KwsScores:
    """Precision / recall / F1 of accept decisions against gold presence labels.

    ``predicted`` holds booleans or :class:`~biasasr.kws.KwsDecision` objects.

    Precision with nothing predicted (or recall with nothing to find) is
    undefined and reported as ``None`` rather than 0.
    """
    predicted = [p.accepted if hasattr(p, "accepted") else bool(p) for p in predicted]
    gold = [bool(g) for g in gold]
    if len(predicted) != len(gold):
        raise InputError("every decision needs a gold label")
    tp = sum(p and g for p, g in zip(predicted, gold))
    fp = sum(p and not g for p, g in zip(predicted, gold))
    fn = sum(g and not p for p, g in zip(predicted, gold))
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    return KwsScores(precision, recall, f1_score(precision, recall), tp, fp, fn)


@dataclass
class EvalReport:
    condition: str
    mer: float
    entity_recall: float | None
    rows: list[dict] = field(default_factory=list)
    kws: KwsScores | None = None

    def to_json(self) -> dict:
        out = {
            "condition": self.condition,
            "mer": self.mer,
            "entity_recall": self.entity_recall,
            "utterances": self.rows,
        }
        if self.kws is not None:
            out["kws"] = {k: getattr(self.kws, k) for k in ("precision", "recall", "f1", "tp", "fp", "fn")}
        return out


def evaluate_condition(
    condition: str,
    refs: Mapping[str, str],
    hyps: Mapping[str, str],
    gold_entities: Mapping[str, Sequence[str]] | None = None,
    kws_pairs: Iterable[tuple[bool, bool]] | None = None,
) -> EvalReport:
    """Corpus-level MER (errors summed over utterances / reference tokens) and recall."""
    if not hyps:
        raise InputError(f"{condition}: no results")
    missing = sorted(set(hyps) ^ set(refs))
    if missing:
        raise InputError(f"{condition}: utterance ids differ between reference and hypothesis: {missing[:5]}")
    errors = n_ref = 0
    rows = []
    for uid in refs:
        a = mer(refs[uid], hyps[uid])
        errors += a.errors
        n_ref += a.n_ref
        rows.append({"utterance_id": uid, "S": a.substitutions, "D": a.deletions, "I": a.insertions,
                     "N": a.n_ref, "mer": a.mer})
    recall = None
    if gold_entities:
        rec = entity_recall({k: v for k, v in gold_entities.items() if k in hyps}, hyps)
        recall = rec.recall
        by_utt: dict[str, list] = {}
        for uid, ent, hit in rec.per_entity:
            by_utt.setdefault(uid, []).append({"entity": ent, "hit": hit})
        for row in rows:
            row["entities"] = by_utt.get(row["utterance_id"], [])
    kws = None
    if kws_pairs is not None:
        pairs = list(kws_pairs)
        kws = kws_scores([p for p, _ in pairs], [g for _, g in pairs])
    return EvalReport(condition, 100.0 * errors / n_ref, recall, rows, kws)


def report(
    conditions: Mapping[str, Mapping[str, str]],
    refs: Mapping[str, str],
    gold_entities: Mapping[str, Sequence[str]] | None = None,
) -> list[EvalReport]:
    """One :class:`EvalReport` per condition (e.g. ``no_prompt``, ``naive_predicted``)."""
    if not conditions:
        raise InputError("no conditions to report")
    return [evaluate_condition(name, refs, hyps, gold_entities) for name, hyps in conditions.items()]


def format_table(reports: Sequence[EvalReport]) -> str:
    """Aligned ``MER / Recall`` table, one row per condition."""
    cells = [("condition", "MER (%) / Entity Recall (%)")]
    for r in reports:
        recall = "-" if r.entity_recall is None else f"{r.entity_recall:.1f}"
        cells.append((r.condition, f"{r.mer:.1f} / {recall}"))
    width = max(len(c[0]) for c in cells)
    return "\n".join(f"{a.ljust(width)} | {b}" for a, b in cells) + "\n"


def dumps_reports(reports: Sequence[EvalReport]) -> str:
    return json.dumps({"conditions": [r.to_json() for r in reports]}, ensure_ascii=False, indent=1)
