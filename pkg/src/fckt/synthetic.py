"""Generated corpus with known structure for end-to-end checks.

Aspects always follow a cue token ("the", "its", "their") and consist of
0-2 modifier tokens plus one aspect noun. Each clause carries one polarity
word that determines the polarity of its aspects, except that an aspect
introduced by the contrast marker "except" takes the flipped polarity of the
preceding clause (positive <-> negative).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .corpus import AnnotatedSentence, AspectAnnotation

CUES = ("the", "its", "their")
CONTRAST = "except"
AND = "and"
FLIP = {"positive": "negative", "negative": "positive"}


@dataclass(frozen=True)
class SyntheticVocab:
    nouns: Tuple[str, ...]
    modifiers: Tuple[str, ...]
    polar: dict
    fillers: Tuple[str, ...]

    @property
    def size(self) -> int:
        words = set(CUES) | {CONTRAST, AND} | set(self.nouns) | set(self.modifiers) | set(self.fillers)
        for ws in self.polar.values():
            words |= set(ws)
        return len(words)


def make_vocab(size: int = 200) -> SyntheticVocab:
    nouns = tuple(f"noun{i}" for i in range(40))
    mods = tuple(f"mod{i}" for i in range(20))
    polar = {
        "positive": tuple(f"good{i}" for i in range(15)),
        "negative": tuple(f"bad{i}" for i in range(15)),
        "neutral": tuple(f"meh{i}" for i in range(10)),
    }
    fixed = len(CUES) + 2 + len(nouns) + len(mods) + sum(len(v) for v in polar.values())
    if size <= fixed:
        raise ValueError(f"vocabulary size must exceed {fixed}")
    fillers = tuple(f"w{i}" for i in range(size - fixed))
    return SyntheticVocab(nouns, mods, polar, fillers)


class _Builder:
    def __init__(self):
        self.tokens: List[str] = []
        self.aspects: List[AspectAnnotation] = []

    def extend(self, words):
        self.tokens.extend(words)

    def aspect(self, words, polarity):
        start = len(self.tokens)
        self.tokens.extend(words)
        self.aspects.append(AspectAnnotation(start, len(self.tokens) - 1, polarity))


def _aspect_words(rng, v: SyntheticVocab) -> List[str]:
    n_mod = rng.choice(3, p=[0.5, 0.35, 0.15])
    return [str(m) for m in rng.choice(v.modifiers, n_mod, replace=False)] + [str(rng.choice(v.nouns))]


def _fillers(rng, v: SyntheticVocab, hi: int) -> List[str]:
    return [str(w) for w in rng.choice(v.fillers, rng.integers(0, hi + 1))]


def generate_sentence(rng: np.random.Generator, v: SyntheticVocab, sid: str) -> AnnotatedSentence:
    b = _Builder()
    n_clauses = int(rng.integers(1, 3))
    for c in range(n_clauses):
        if c:
            b.extend([AND])
        polarity = str(rng.choice(["positive", "negative", "neutral"], p=[0.4, 0.35, 0.25]))
        b.extend(_fillers(rng, v, 2))
        b.extend([str(rng.choice(CUES))])
        b.aspect(_aspect_words(rng, v), polarity)
        if rng.random() < 0.3:
            b.extend([AND, str(rng.choice(CUES))])
            b.aspect(_aspect_words(rng, v), polarity)
        b.extend(_fillers(rng, v, 1))
        b.extend([str(rng.choice(v.polar[polarity]))])
        if polarity in FLIP and rng.random() < 0.4:
            b.extend([CONTRAST, str(rng.choice(CUES))])
            b.aspect(_aspect_words(rng, v), FLIP[polarity])
        b.extend(_fillers(rng, v, 2))
    return AnnotatedSentence(tokens=b.tokens, aspects=b.aspects, source_id=sid)


def generate_corpus(num_sentences: int, seed: int = 0, vocab_size: int = 200,
                    prefix: str = "syn") -> List[AnnotatedSentence]:
    rng = np.random.default_rng(seed)
    v = make_vocab(vocab_size)
    out = []
    for i in range(num_sentences):
        s = generate_sentence(rng, v, f"{prefix}-{i}")
        s.validate()
        out.append(s)
    return out


def generate_splits(num_train: int = 1200, num_test: int = 300, seed: int = 0, vocab_size: int = 200):
    """Disjoint train/test corpora drawn from independent streams."""
    train = generate_corpus(num_train, seed=2 * seed, vocab_size=vocab_size, prefix="train")
    test = generate_corpus(num_test, seed=2 * seed + 1, vocab_size=vocab_size, prefix="test")
    return train, test
