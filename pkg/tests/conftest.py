import json
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parents[1]
OREM30 = REPO / "fixtures" / "orem30"
TRAIN50 = REPO / "fixtures" / "train50"


@pytest.fixture(scope="session")
def orem30_dir() -> Path:
    return OREM30


@pytest.fixture(scope="session")
def train50_dir() -> Path:
    return TRAIN50


@pytest.fixture(scope="session")
def orem30():
    """Loaded 30-image fixture: stores, corpus, head, lexicon."""
    from retrocap.emb1 import read_emb1
    from retrocap.orem import HighFreqHead, WordEmbeddings
    from retrocap.store import build_store, load_captions
    from retrocap.tagging import load_lexicon, load_prepositions

    d = OREM30
    return {
        "caption_store": build_store(d / "captions.emb1", d / "captions.ids.jsonl"),
        "captions": load_captions(d / "captions.jsonl"),
        "word_store": WordEmbeddings.load(d / "words.emb1", d / "words.txt"),
        "head": HighFreqHead.load(d / "head"),
        "lexicon": load_lexicon(d / "lexicon.tsv"),
        "prepositions": load_prepositions(),
        "images": read_emb1(d / "images.emb1"),
        "image_ids": [json.loads(line)["image_id"]
                      for line in (d / "images.ids.jsonl").read_text().splitlines() if line],
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
