"""Object- and relation-word extraction and prompt templating.

Pipeline per image: score a high-frequency vocabulary from the image
embedding, keep the confident top slice (W_t), tag the retrieved
sentences and keep object/relation words (W_s), intersect (W_n), then
supplement with frequency- and similarity-gated words to form the final
object list W_o (<= max_objects) and relation list W_r (<= max_relations)
that fill the prompt template.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .emb1 import read_emb1, write_emb1
from .errors import DataFormatError
from .store import EmbeddingStore, cosine_similarity, knn_retrieve
from .tagging import (
    OBJECT_TAGS,
    RELATION_TAGS,
    TaggedWord,
    extract_ws,
    pos_tag,
)
from .tokenizer import Tokenizer, split_words

# Similarity stand-in for words absent from the word store: sorts below
# any real cosine without excluding the word (W_n members bypass gates).
_SIM_MISSING = -2.0


@dataclass(frozen=True)
class ExtractionThresholds:
    top_d: int = 20
    score_s: float = 0.8
    obj_freq_o: int = 4
    obj_sim: float = 0.24
    rel_freq_r: int = 2
    max_objects: int = 6
    max_relations: int = 3
    # "max_frequency": supplement only relation words at the corpus-max
    # frequency; "above_threshold": every relation word above rel_freq_r.
    relation_rule: str = "max_frequency"

    def __post_init__(self):
        if min(self.top_d, self.obj_freq_o, self.rel_freq_r, self.max_objects, self.max_relations) <= 0:
            raise ValueError("all count thresholds must be positive")
        if not 0.0 < self.score_s < 1.0:
            raise ValueError("score_s must lie in (0, 1)")
        if not -1.0 < self.obj_sim < 1.0:
            raise ValueError("obj_sim must lie in (-1, 1)")
        if self.relation_rule not in ("max_frequency", "above_threshold"):
            raise ValueError(f"unknown relation_rule {self.relation_rule!r}")


@dataclass
class WordSets:
    wt: set[str] = field(default_factory=set)
    ws: set[TaggedWord] = field(default_factory=set)
    wn: set[TaggedWord] = field(default_factory=set)
    wo: list[str] = field(default_factory=list)
    wr: list[str] = field(default_factory=list)


@dataclass
class PromptBundle:
    word_sets: WordSets
    template_id: int
    rendered: str
    token_ids: list[int]


class HighFreqHead:
    """Linear scorer mapping an image embedding to per-word confidences."""

    def __init__(self, vocab: list[str], weight: np.ndarray, bias: np.ndarray):
        weight = np.asarray(weight, dtype=np.float32)
        bias = np.asarray(bias, dtype=np.float32).ravel()
        if weight.shape[0] != len(vocab) or bias.shape[0] != len(vocab):
            raise ValueError("head vocab/weight/bias sizes disagree")
        self.vocab = list(vocab)
        self.weight = weight
        self.bias = bias

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def save(self, prefix: str | Path) -> None:
        """Write <prefix>.weight.emb1, <prefix>.bias.emb1, <prefix>.vocab.txt."""
        write_emb1(f"{prefix}.weight.emb1", self.weight)
        write_emb1(f"{prefix}.bias.emb1", self.bias[None, :])
        Path(f"{prefix}.vocab.txt").write_text("\n".join(self.vocab) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, prefix: str | Path) -> "HighFreqHead":
        weight = read_emb1(f"{prefix}.weight.emb1")
        bias = read_emb1(f"{prefix}.bias.emb1")
        if bias.shape[0] != 1:
            raise DataFormatError("head bias file must hold a single row")
        vocab = [
            w for w in Path(f"{prefix}.vocab.txt").read_text(encoding="utf-8").splitlines() if w
        ]
        return cls(vocab, weight, bias[0])


def score_high_freq_words(image_emb: np.ndarray, head: HighFreqHead) -> np.ndarray:
    """sigmoid(W v + b) per vocabulary word, computed in float64."""
    v = np.asarray(image_emb, dtype=np.float64).ravel()
    if v.shape[0] != head.dim:
        raise ValueError(f"embedding dim {v.shape[0]} does not match head dim {head.dim}")
    z = head.weight.astype(np.float64) @ v + head.bias.astype(np.float64)
    return 1.0 / (1.0 + np.exp(-z))


def select_wt(scores: np.ndarray, vocab: list[str], thresholds: ExtractionThresholds) -> set[str]:
    """Words scoring above score_s, top_d highest (ties: lower vocab index)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.shape[0] != len(vocab):
        raise ValueError("scores/vocab length mismatch")
    above = [i for i in range(len(vocab)) if scores[i] > thresholds.score_s]
    above.sort(key=lambda i: (-scores[i], i))
    return {vocab[i] for i in above[: thresholds.top_d]}


def intersect_wn(wt: set[str], ws: set[TaggedWord]) -> set[TaggedWord]:
    """Surface-form intersection; each member keeps its tag from ws."""
    return {tw for tw in ws if tw.surface in wt}


def frequency_supplement(
    tagged_sentences: list[list[TaggedWord]],
    wn: set[TaggedWord],
    image_emb: np.ndarray,
    word_store: "WordEmbeddings",
    thresholds: ExtractionThresholds,
) -> tuple[list[str], list[str]]:
    """Build the final W_o and W_r lists from W_n plus gated supplements.

    Objects: W_n nouns enter directly; other nouns need corpus frequency
    > obj_freq_o and cosine(word, image) > obj_sim. Ranked by frequency
    desc, similarity desc, then lexicographic; truncated to max_objects.

    Relations: W_n relations enter directly; supplements follow the
    configured relation_rule over frequencies. Ranked by frequency desc
    then lexicographic; truncated to max_relations.
    """
    obj_freq: Counter[str] = Counter()
    rel_freq: Counter[str] = Counter()
    for sent in tagged_sentences:
        for tw in sent:
            if tw.tag in OBJECT_TAGS:
                obj_freq[tw.surface] += 1
            elif tw.tag in RELATION_TAGS:
                rel_freq[tw.surface] += 1

    wn_objects = {tw.surface for tw in wn if tw.tag in OBJECT_TAGS}
    wn_relations = {tw.surface for tw in wn if tw.tag in RELATION_TAGS}

    def sim_to_image(word: str) -> float | None:
        vec = word_store.vector_for(word)
        if vec is None:
            return None
        return cosine_similarity(vec, image_emb)

    objects = set(wn_objects)
    for word, freq in obj_freq.items():
        if word in objects or freq <= thresholds.obj_freq_o:
            continue
        sim = sim_to_image(word)
        if sim is not None and sim > thresholds.obj_sim:
            objects.add(word)

    sims = {w: sim_to_image(w) for w in objects}
    wo = sorted(
        objects,
        key=lambda w: (
            -obj_freq[w],
            -(sims[w] if sims[w] is not None else _SIM_MISSING),
            w,
        ),
    )[: thresholds.max_objects]

    relations = set(wn_relations)
    if rel_freq:
        if thresholds.relation_rule == "max_frequency":
            top = max(rel_freq.values())
            if top > thresholds.rel_freq_r:
                relations.update(w for w, f in rel_freq.items() if f == top)
        else:
            relations.update(w for w, f in rel_freq.items() if f > thresholds.rel_freq_r)
    wr = sorted(relations, key=lambda w: (-rel_freq[w], w))[: thresholds.max_relations]

    return wo, wr


class WordEmbeddings:
    """Word -> embedding lookup used by the similarity gate.

    On disk: an EMB1 matrix plus a text file with one word per line
    (line i names row i).
    """

    def __init__(self, words: list[str], vectors: np.ndarray):
        if len(words) != vectors.shape[0]:
            raise ValueError("word count does not match vector count")
        self._rows = {w: i for i, w in enumerate(words)}
        self._vectors = np.asarray(vectors, dtype=np.float32)

    @classmethod
    def load(cls, emb_path: str | Path, words_path: str | Path) -> "WordEmbeddings":
        vectors = read_emb1(emb_path)
        words = [w for w in Path(words_path).read_text(encoding="utf-8").splitlines() if w]
        return cls(words, vectors)

    def vector_for(self, word: str) -> np.ndarray | None:
        row = self._rows.get(word)
        return None if row is None else self._vectors[row]


_TEMPLATES = {
    1: "{objects}. {relations}.",
    2: "a photo of {objects}. A photo contains the relations of {relations}. Its caption is",
    3: "a photo contains objects: {objects}, and the relations are {relations}. Its caption is",
}


def render_template(wo: list[str], wr: list[str], template_id: int,
                    max_objects: int = 6, max_relations: int = 3) -> str:
    """Render a template with every slot filled, padding with "null"."""
    if template_id not in _TEMPLATES:
        raise ValueError(f"unknown template id {template_id}")
    if len(wo) > max_objects:
        raise ValueError(f"{len(wo)} object words exceed the {max_objects}-slot template")
    if len(wr) > max_relations:
        raise ValueError(f"{len(wr)} relation words exceed the {max_relations}-slot template")
    objs = list(wo) + ["null"] * (max_objects - len(wo))
    rels = list(wr) + ["null"] * (max_relations - len(wr))
    return _TEMPLATES[template_id].format(objects=", ".join(objs), relations=", ".join(rels))


def assemble_prompt(
    word_sets: WordSets,
    template_id: int,
    tokenizer: Tokenizer,
    thresholds: ExtractionThresholds | None = None,
) -> PromptBundle:
    th = thresholds or ExtractionThresholds()
    rendered = render_template(
        word_sets.wo, word_sets.wr, template_id, th.max_objects, th.max_relations
    )
    return PromptBundle(word_sets, template_id, rendered, tokenizer.encode(rendered))


def extract_word_sets(
    image_emb: np.ndarray,
    caption_store: EmbeddingStore,
    captions_by_id: dict,
    word_store: WordEmbeddings,
    head: HighFreqHead,
    lexicon: dict[str, str],
    prepositions: frozenset[str],
    thresholds: ExtractionThresholds,
    k: int,
    exclude_image_id: int | None = None,
) -> WordSets:
    """Run the full extraction for one image."""
    hits = knn_retrieve(image_emb, caption_store, k, exclude_image_id)
    sentences = [captions_by_id[rid].text for rid, _ in hits]
    scores = score_high_freq_words(image_emb, head)
    wt = select_wt(scores, head.vocab, thresholds)
    ws = extract_ws(sentences, lexicon, prepositions)
    wn = intersect_wn(wt, ws)
    tagged = [pos_tag(s, lexicon, prepositions) for s in sentences]
    wo, wr = frequency_supplement(tagged, wn, image_emb, word_store, thresholds)
    return WordSets(wt=wt, ws=ws, wn=wn, wo=wo, wr=wr)


def train_head(
    vocab: list[str],
    image_embs: np.ndarray,
    present: np.ndarray,
    epochs: int = 200,
    lr: float = 0.1,
    seed: int = 0,
) -> HighFreqHead:
    """Fit the scorer with per-word binary cross-entropy.

    present[j, i] is 1 when vocab word i occurs in a ground-truth caption
    of sample j. Full-batch gradient descent in float64, seeded init, so
    training is deterministic.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(image_embs, dtype=np.float64)
    y = np.asarray(present, dtype=np.float64)
    n, dim = x.shape
    v = len(vocab)
    if y.shape != (n, v):
        raise ValueError(f"labels must be ({n}, {v}), got {y.shape}")
    w = rng.normal(0.0, 0.01, size=(v, dim))
    b = np.zeros(v)
    for _ in range(epochs):
        p = 1.0 / (1.0 + np.exp(-(x @ w.T + b)))
        g = (p - y) / n  # dBCE/dlogits
        w -= lr * (g.T @ x)
        b -= lr * g.sum(axis=0)
    return HighFreqHead(vocab, w.astype(np.float32), b.astype(np.float32))


def bce_loss(head: HighFreqHead, image_embs: np.ndarray, present: np.ndarray) -> float:
    """Mean binary cross-entropy of the head on labelled samples."""
    x = np.asarray(image_embs, dtype=np.float64)
    y = np.asarray(present, dtype=np.float64)
    z = x @ head.weight.astype(np.float64).T + head.bias.astype(np.float64)
    # log(1 + exp(z)) computed stably
    softplus = np.logaddexp(0.0, z)
    return float(np.mean(softplus - y * z))


def head_presence_labels(vocab: list[str], caption_texts: list[list[str]]) -> np.ndarray:
    """Binary labels: word i of vocab appears in any caption of sample j."""
    idx = {w: i for i, w in enumerate(vocab)}
    out = np.zeros((len(caption_texts), len(vocab)), dtype=np.float32)
    for j, texts in enumerate(caption_texts):
        for text in texts:
            for w in split_words(text):
                i = idx.get(w)
                if i is not None:
                    out[j, i] = 1.0
    return out
