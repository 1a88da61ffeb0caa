"""Desk-scale synthetic worlds for the mock backend.

The mock encoder only sees ``codepoint % 16``, so words are spelled over an
alphabet of 16 Han characters with pairwise distinct residues: two words
then look alike to the encoder exactly when they share characters.
"""

from __future__ import annotations

import numpy as np

from biasasr.backend.mock import HIDDEN_DIM, hash_dim, mock_tts
from biasasr.corpus import Utterance

_CANDIDATES = "的一是在不了有和人这中大为上个国我以要他时来用们生到作地于出就分对成会可也你说年着过家学下自子后能里如她都发天小方多道心得之好"


def _distinct_alphabet(pool: str, size: int = HIDDEN_DIM) -> str:
    picked: dict[int, str] = {}
    for ch in pool:
        picked.setdefault(hash_dim(ch), ch)
    if len(picked) < size:
        raise ValueError("character pool does not cover every residue")
    return "".join(picked[h] for h in sorted(picked))[:size]


ALPHABET = _distinct_alphabet(_CANDIDATES)


def make_vocab(rng: np.random.Generator, n_words: int = 300, min_len: int = 2, max_len: int = 4,
               alphabet: str = ALPHABET) -> list[str]:
    """Random words, about half of them built to share a prefix or suffix with another."""
    words: list[str] = []
    seen: set[str] = set()

    def rand_word(n):
        return "".join(alphabet[i] for i in rng.integers(len(alphabet), size=n))

    while len(words) < n_words:
        n = int(rng.integers(min_len, max_len + 1))
        if words and rng.random() < 0.5:
            base = words[int(rng.integers(len(words)))]
            keep = int(rng.integers(1, min(len(base), n)))  # share 1..n-1 chars
            w = base[:keep] + rand_word(n - keep) if rng.random() < 0.5 else rand_word(n - keep) + base[-keep:]
        else:
            w = rand_word(n)
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def make_corpus(rng: np.random.Generator, vocab: list[str], n_utts: int, words_per_utt=(2, 4),
                filler=(0, 2), alphabet: str = ALPHABET, prefix: str = "utt") -> list[Utterance]:
    """Utterances concatenating random vocabulary words with random filler characters."""
    out = []
    for i in range(n_utts):
        parts = []
        for _ in range(int(rng.integers(words_per_utt[0], words_per_utt[1] + 1))):
            n_fill = int(rng.integers(filler[0], filler[1] + 1))
            parts.append("".join(alphabet[j] for j in rng.integers(len(alphabet), size=n_fill)))
            parts.append(vocab[int(rng.integers(len(vocab)))])
        text = "".join(parts)
        out.append(Utterance(f"{prefix}{i:05d}", text, audio=mock_tts(text)))
    return out


SURNAMES = "王李张刘陈杨黄赵周吴邓徐孙马朱胡郭何高林"
GIVEN = "郁晔君松伟芳娜敏静丽强磊洋勇艳杰涛明超华"
CONFUSION = {"郁": "玉", "晔": "叶", "君": "军", "松": "嵩", "芳": "方", "敏": "民", "静": "敬", "磊": "雷"}


def make_entity_world(rng: np.random.Generator, n_entities: int = 20, n_utts: int = 50,
                      filler=(2, 6), alphabet: str = ALPHABET, prefix: str = "cb"):
    """Person-name entities embedded in filler speech.

    Returns ``(entities, confusion, corpus, gold)``: ``gold`` maps each
    utterance id to the entity spoken in it. Most names contain a character
    the mock decoder confuses, so without prompting they come out wrong.
    """
    entities: list[str] = []
    while len(entities) < n_entities:
        name = SURNAMES[int(rng.integers(len(SURNAMES)))] + "".join(
            GIVEN[int(i)] for i in rng.integers(len(GIVEN), size=2)
        )
        if name not in entities:
            entities.append(name)
    corpus, gold = [], {}
    for i in range(n_utts):
        ent = entities[i % n_entities]
        left = "".join(alphabet[j] for j in rng.integers(len(alphabet), size=int(rng.integers(filler[0], filler[1] + 1))))
        right = "".join(alphabet[j] for j in rng.integers(len(alphabet), size=int(rng.integers(filler[0], filler[1] + 1))))
        text = left + ent + right
        uid = f"{prefix}{i:04d}"
        corpus.append(Utterance(uid, text, audio=mock_tts(text)))
        gold[uid] = [ent]
    return entities, dict(CONFUSION), corpus, gold
