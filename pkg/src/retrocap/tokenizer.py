"""Word-level tokenizer shared by the decoder, prompts, and BLEU.

The vocabulary is built from the (lowercased) training corpus plus the
fixed prompt-template words, behind four special ids. The surface word
"null" always maps to the <null> special so that prompt slot padding and
caption text stay in one id space.

Vocab file format: UTF-8, one token per line, line number = id, specials
first in the fixed order <pad>, <bos>, <eos>, <null>.
"""

from __future__ import annotations

import re
from pathlib import Path

from .errors import DataFormatError

PAD, BOS, EOS, NULL = 0, 1, 2, 3
_SPECIAL_SURFACES = ["<pad>", "<bos>", "<eos>", "<null>"]

# Words the three prompt templates can emit besides extracted words.
TEMPLATE_WORDS = [
    "a", "photo", "contains", "objects", ":", ",", "and", "the",
    "relations", "are", ".", "Its", "caption", "is", "of", "A",
]

# Words/numbers, apostrophe clitics, or single punctuation marks.
_TOKEN_RE = re.compile(r"[A-Za-z0-9]+(?:'[A-Za-z]+)?|[^\sA-Za-z0-9]")
_NO_SPACE_BEFORE = {":", ",", ".", ";", "!", "?", "'"}


def split_words(text: str, lowercase: bool = True) -> list[str]:
    """Split text into word and punctuation tokens."""
    toks = _TOKEN_RE.findall(text)
    return [t.lower() for t in toks] if lowercase else toks


def detokenize(tokens: list[str]) -> str:
    """Join tokens with spaces, attaching closing punctuation to the left."""
    parts: list[str] = []
    for tok in tokens:
        if parts and tok in _NO_SPACE_BEFORE:
            parts[-1] += tok
        else:
            parts.append(tok)
    return " ".join(parts)


class Tokenizer:
    def __init__(self, tokens: list[str]):
        if tokens[: len(_SPECIAL_SURFACES)] != _SPECIAL_SURFACES:
            raise DataFormatError(
                f"vocab must start with the specials {_SPECIAL_SURFACES}"
            )
        if len(set(tokens)) != len(tokens):
            raise DataFormatError("vocab contains duplicate tokens")
        self._tokens = list(tokens)
        self._ids = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def from_corpus(cls, texts: list[str]) -> "Tokenizer":
        """Build a vocabulary from corpus texts plus the template words."""
        vocab = list(_SPECIAL_SURFACES)
        seen = set(vocab)
        for word in TEMPLATE_WORDS:
            if word not in seen:
                vocab.append(word)
                seen.add(word)
        for text in texts:
            for word in split_words(text):
                if word != "null" and word not in seen:
                    vocab.append(word)
                    seen.add(word)
        return cls(vocab)

    @property
    def vocab_size(self) -> int:
        return len(self._tokens)

    def encode(self, text: str) -> list[int]:
        """Encode text to ids; unknown tokens are an error (no <unk>)."""
        ids = []
        for tok in split_words(text, lowercase=False):
            tid = self._lookup(tok)
            if tid is None:
                raise KeyError(f"token {tok!r} not in vocabulary")
            ids.append(tid)
        return ids

    def _lookup(self, tok: str) -> int | None:
        if tok == "null":
            return NULL
        if tok in self._ids:
            return self._ids[tok]
        low = tok.lower()
        if low == "null":
            return NULL
        return self._ids.get(low)

    def decode(self, ids: list[int]) -> str:
        """Decode ids to text; <pad>/<bos>/<eos> are dropped, <null> -> "null"."""
        surfaces = []
        for tid in ids:
            if tid in (PAD, BOS, EOS):
                continue
            surfaces.append("null" if tid == NULL else self._tokens[tid])
        return detokenize(surfaces)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Tokenizer":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln for ln in lines if ln])
