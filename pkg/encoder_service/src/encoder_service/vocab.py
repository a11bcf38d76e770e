"""Word-level vocabulary shared by training and serving.

The tokenizer is deliberately plain (lowercase word pieces); the model
is desk-scale and trains from scratch, so subword machinery would add
nothing. Ids 0..3 are reserved for the special tokens and everything
else is assigned by descending corpus frequency, ties broken
alphabetically, which makes vocabulary construction deterministic.
"""

from __future__ import annotations

import re
from collections import Counter

PAD, UNK, SEP, MASK = 0, 1, 2, 3
SPECIALS = ("[PAD]", "[UNK]", "[SEP]", "[MASK]")

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """Token <-> id mapping with the four reserved specials."""

    def __init__(self, tokens: list[str]):
        if list(tokens[: len(SPECIALS)]) != list(SPECIALS):
            raise ValueError("vocabulary must start with the special tokens")
        self.tokens = list(tokens)
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    @classmethod
    def build(cls, texts, min_count: int = 1) -> "Vocab":
        counts = Counter()
        for text in texts:
            counts.update(tokenize(text))
        kept = sorted(
            (t for t, c in counts.items() if c >= min_count),
            key=lambda t: (-counts[t], t),
        )
        return cls(list(SPECIALS) + kept)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def n_specials(self) -> int:
        return len(SPECIALS)

    def encode(self, tokens) -> list[int]:
        return [self._ids.get(t, UNK) for t in tokens]

    def encode_text(self, text: str) -> list[int]:
        return self.encode(tokenize(text))
