"""JSONL corpora: ``{"utterance_id", "audio_path", "transcript"}`` per line."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from biasasr.audio import AudioBuffer, read_wav
from biasasr.errors import InputError


@dataclass(frozen=True, eq=False)
class Utterance:
    utterance_id: str
    transcript: str = ""
    audio_path: Path | None = None
    audio: AudioBuffer | None = None

    def load_audio(self) -> AudioBuffer:
        if self.audio is not None:
            return self.audio
        if self.audio_path is None:
            raise InputError(f"utterance {self.utterance_id} has no audio")
        return read_wav(self.audio_path)


def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise InputError(f"{path}:{lineno}: bad JSON ({exc})") from None
    return rows


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_corpus(path: str | Path) -> list[Utterance]:
    """Relative audio paths resolve against the corpus file's directory."""
    base = Path(path).parent
    out = []
    for row in read_jsonl(path):
        if "utterance_id" not in row:
            raise InputError(f"{path}: row without utterance_id: {row}")
        audio = row.get("audio_path")
        out.append(Utterance(str(row["utterance_id"]), row.get("transcript", ""), base / audio if audio else None))
    ids = [u.utterance_id for u in out]
    if len(set(ids)) != len(ids):
        raise InputError(f"{path}: duplicate utterance ids")
    return out
