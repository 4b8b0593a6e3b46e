"""Deterministic lexicon-first part-of-speech tagging.

A token's tag comes from the lexicon when present; otherwise the closed
preposition list, then a gerund suffix rule, then noun. This replaces a
statistical tagger so that word extraction is reproducible in tests.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

from .errors import DataFormatError
from .tokenizer import split_words

TAGS = ("noun", "verb", "gerund", "preposition", "other")
OBJECT_TAGS = frozenset({"noun"})
RELATION_TAGS = frozenset({"verb", "gerund", "preposition"})


@dataclass(frozen=True, order=True)
class TaggedWord:
    surface: str
    tag: str

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")


def load_lexicon(path: str | Path) -> dict[str, str]:
    """Load a lexicon file: one "word<TAB>tag" per line."""
    lexicon = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataFormatError(f"{path}:{lineno + 1}: expected 'word<TAB>tag'")
        word, tag = parts[0].strip().lower(), parts[1].strip()
        if tag not in TAGS:
            raise DataFormatError(f"{path}:{lineno + 1}: unknown tag {tag!r}")
        lexicon[word] = tag
    return lexicon


def load_prepositions(path: str | Path | None = None) -> frozenset[str]:
    """Load the closed preposition list; defaults to the shipped one."""
    if path is None:
        text = (
            importlib.resources.files("retrocap.data")
            .joinpath("prepositions.txt")
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def pos_tag(
    sentence: str,
    lexicon: dict[str, str],
    prepositions: frozenset[str] | None = None,
) -> list[TaggedWord]:
    """Tag every word token of a sentence (punctuation tokens dropped)."""
    if prepositions is None:
        prepositions = load_prepositions()
    tagged = []
    for tok in split_words(sentence):
        if not any(c.isalnum() for c in tok):
            continue
        tok = tok.strip("'")
        if not tok:
            continue
        if tok in lexicon:
            tag = lexicon[tok]
        elif tok in prepositions:
            tag = "preposition"
        elif tok.endswith("ing") and len(tok) > 4:
            tag = "gerund"
        else:
            tag = "noun"
        tagged.append(TaggedWord(tok, tag))
    return tagged


def extract_ws(
    sentences: list[str],
    lexicon: dict[str, str],
    prepositions: frozenset[str] | None = None,
) -> set[TaggedWord]:
    """Union of object- and relation-tagged words over retrieved sentences."""
    out: set[TaggedWord] = set()
    for sent in sentences:
        for tw in pos_tag(sent, lexicon, prepositions):
            if tw.tag in OBJECT_TAGS or tw.tag in RELATION_TAGS:
                out.add(tw)
    return out
