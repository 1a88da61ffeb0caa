"""Script-aware text normalization shared by matching, prompting and scoring."""

from __future__ import annotations

import re
import unicodedata

_FULLWIDTH_START = 0xFF01
_FULLWIDTH_END = 0xFF5E
_FULLWIDTH_OFFSET = 0xFEE0


def is_han(ch: str) -> bool:
    cp = ord(ch)
    return (
        0x4E00 <= cp <= 0x9FFF
        or 0x3400 <= cp <= 0x4DBF
        or 0x20000 <= cp <= 0x2FA1F
        or 0xF900 <= cp <= 0xFAFF
        or 0x3040 <= cp <= 0x30FF  # kana is scored per character as well
        or 0xAC00 <= cp <= 0xD7AF
    )


def is_latin(ch: str) -> bool:
    if not ch.isalpha():
        return False
    return ch.isascii() or "LATIN" in unicodedata.name(ch, "")


def to_halfwidth(text: str) -> str:
    """Map full-width ASCII variants (and the ideographic space) to ASCII."""
    out = []
    for ch in text:
        cp = ord(ch)
        if _FULLWIDTH_START <= cp <= _FULLWIDTH_END:
            out.append(chr(cp - _FULLWIDTH_OFFSET))
        elif cp == 0x3000:
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out)


def normalize_word(text: str) -> str:
    """Matching form of an entity: NFC, half-width, Latin lowercased, spaces collapsed."""
    text = to_halfwidth(unicodedata.normalize("NFC", text))
    text = "".join(ch.lower() if is_latin(ch) else ch for ch in text)
    return re.sub(r"\s+", " ", text).strip()


def language_hint(text: str) -> str:
    """``zh`` if only Han, ``en`` if no Han at all, otherwise ``mixed``."""
    letters = [ch for ch in text if ch.isalnum()]
    han = sum(1 for ch in letters if is_han(ch))
    if han == len(letters):
        return "zh"
    if han == 0:
        return "en"
    return "mixed"


def is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("P", "S")


_APOSTROPHES = "'\u2019"


def strip_punct(text: str) -> str:
    """Drop punctuation and symbols.

    Apostrophes vanish (``today's`` -> ``todays``); everything else becomes a
    space so neighbouring words never fuse.
    """
    return "".join(
        "" if ch in _APOSTROPHES else " " if is_punct(ch) else ch for ch in text
    )


def normalize_for_scoring(text: str) -> str:
    return re.sub(r"\s+", " ", normalize_word(strip_punct(to_halfwidth(text)))).strip()
