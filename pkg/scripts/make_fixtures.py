"""Generate the shipped synthetic fixtures.

Two corpora built from one seeded scene model:

  fixtures/orem30   30 images x 5 captions; exercises retrieval, word
                    extraction, prompts, and the overlap statistics.
  fixtures/train50  50 images x 1 caption; the overfit training task.

Every word has a fixed unit embedding; an image embedding is the
normalized sum of its scene words (plus small noise) and a caption
embedding the normalized sum of its content words, so cosine retrieval
recovers semantically close captions. Deterministic: fixed seeds, fixed
word order, float32 files.

Run from the repo root:  python scripts/make_fixtures.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from retrocap.emb1 import write_emb1, write_ids_sidecar  # noqa: E402
from retrocap.orem import HighFreqHead  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
DIM = 32

OBJECTS = [
    "man", "woman", "child", "dog", "cat", "bird", "horse", "bike", "car",
    "boat", "table", "chair", "ball", "kite", "tree", "street", "park",
    "house", "river", "beach", "plate", "food", "hat", "phone", "grass",
]
GERUNDS = [
    "riding", "sitting", "standing", "holding", "walking", "running",
    "playing", "eating", "flying", "jumping",
]
# tagged by the closed preposition list, not the lexicon
PREPS = ["on", "in", "with", "near", "under", "by"]
ADJECTIVES = ["red", "blue", "young", "old", "small", "big"]
FILLERS = ["a", "the", "is", "and", "two"]

# left out of the lexicon on purpose: suffix rule must catch these
SUFFIX_ONLY_GERUNDS = {"flying", "jumping"}
# left out of the word store on purpose: similarity gate must skip them
WORDS_WITHOUT_EMBEDDINGS = {"phone", "grass"}

CONTENT_WORDS = OBJECTS + GERUNDS + PREPS


def word_vectors(rng: np.random.Generator) -> dict[str, np.ndarray]:
    vecs = {}
    for word in CONTENT_WORDS:
        v = rng.normal(size=DIM)
        vecs[word] = v / np.linalg.norm(v)
    return vecs


def write_lexicon(path: Path) -> None:
    lines = []
    for w in OBJECTS:
        lines.append(f"{w}\tnoun")
    for w in GERUNDS:
        if w not in SUFFIX_ONLY_GERUNDS:
            lines.append(f"{w}\tgerund")
    for w in ADJECTIVES + FILLERS:
        lines.append(f"{w}\tother")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def caption_templates(o1, o2, o3, g, p, adj):
    return [
        f"a {o1} {g} a {o2}",
        f"the {adj} {o1} {g} near the {o2}",
        f"a {o1} and a {o3} {p} the {o2}",
        f"the {o1} is {g} {p} the {o2}",
        f"a {adj} {o1} {p} a {o2} with a {o3}",
    ]


def scene(rng: np.random.Generator, dense: bool = False):
    """Scene factors; dense mode draws from small pools so scenes overlap
    heavily and the frequency supplements fire."""
    obj_pool = OBJECTS[:10] if dense else OBJECTS
    ger_pool = GERUNDS[:5] if dense else GERUNDS
    prep_pool = PREPS[:4] if dense else PREPS
    o1, o2 = rng.choice(obj_pool, size=2, replace=False)
    o3 = rng.choice([w for w in OBJECTS if w not in (o1, o2)])
    g = rng.choice(ger_pool)
    p = rng.choice(prep_pool)
    adj = rng.choice(ADJECTIVES)
    return str(o1), str(o2), str(o3), str(g), str(p), str(adj)


def embed_text(text: str, vecs: dict[str, np.ndarray], rng, noise: float) -> np.ndarray:
    total = np.zeros(DIM)
    for tok in text.split():
        if tok in vecs:
            total += vecs[tok]
    total += noise * rng.normal(size=DIM)
    return total / np.linalg.norm(total)


def build_head(vecs: dict[str, np.ndarray]) -> HighFreqHead:
    # sigmoid(20 * cos(word, image) - 7): scene words clear 0.8, others do not
    vocab = list(CONTENT_WORDS)
    weight = np.stack([20.0 * vecs[w] for w in vocab]).astype(np.float32)
    bias = np.full(len(vocab), -7.0, dtype=np.float32)
    return HighFreqHead(vocab, weight, bias)


def write_word_store(out: Path, vecs: dict[str, np.ndarray]) -> None:
    words = [w for w in CONTENT_WORDS if w not in WORDS_WITHOUT_EMBEDDINGS]
    write_emb1(out / "words.emb1", np.stack([vecs[w] for w in words]))
    (out / "words.txt").write_text("\n".join(words) + "\n", encoding="utf-8")


def make_orem30(vecs: dict[str, np.ndarray]) -> None:
    out = ROOT / "fixtures" / "orem30"
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2024)

    image_ids, image_rows = [], []
    cap_ids, cap_image_ids, cap_rows, cap_records = [], [], [], []
    for i in range(30):
        img_id = 5000 + i
        o1, o2, o3, g, p, adj = scene(rng, dense=True)
        texts = caption_templates(o1, o2, o3, g, p, adj)
        scene_words = [o1, o2, o3, g, p]
        img = np.sum([vecs[w] for w in scene_words], axis=0) + 0.05 * rng.normal(size=DIM)
        image_rows.append(img / np.linalg.norm(img))
        image_ids.append(img_id)
        for j, text in enumerate(texts):
            cap_ids.append(100 * i + j + 1)
            cap_image_ids.append(img_id)
            cap_rows.append(embed_text(text, vecs, rng, noise=0.02))
            cap_records.append({"id": cap_ids[-1], "image_id": img_id, "text": text})

    write_emb1(out / "images.emb1", np.stack(image_rows))
    write_ids_sidecar(out / "images.ids.jsonl", image_ids, image_ids)
    write_emb1(out / "captions.emb1", np.stack(cap_rows))
    write_ids_sidecar(out / "captions.ids.jsonl", cap_ids, cap_image_ids)
    with open(out / "captions.jsonl", "w", encoding="utf-8") as fh:
        for rec in cap_records:
            fh.write(json.dumps(rec) + "\n")
    write_emb1(out / "query0.emb1", np.stack(image_rows[:1]))

    write_lexicon(out / "lexicon.tsv")
    write_word_store(out, vecs)
    build_head(vecs).save(out / "head")
    (out / "thresholds.json").write_text(json.dumps({
        "top_d": 20, "score_s": 0.8, "obj_freq_o": 4, "obj_sim": 0.24,
        "rel_freq_r": 2, "max_objects": 6, "max_relations": 3,
        "relation_rule": "max_frequency",
    }, indent=2) + "\n", encoding="utf-8")


def make_train50(vecs: dict[str, np.ndarray]) -> None:
    """Overfit task: 6 scene clusters; captions "a o1 g a o2".

    o1 and g identify the cluster and dominate the image embedding. o2
    alternates between two choices per cluster and enters the embedding
    with a small weight: too faint for the decoder to read off in a
    6-epoch run, but enough for exact cosine retrieval to rank same-o2
    captions first, so the extracted prompt carries it. That gives the
    prompted run a measurable edge over the promptless ablation.
    """
    out = ROOT / "fixtures" / "train50"
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(777)

    n_clusters = 6
    clusters = []
    for c in range(n_clusters):
        o1, g = OBJECTS[c], GERUNDS[c % 5]
        o2_pair = (OBJECTS[6 + 2 * c], OBJECTS[7 + 2 * c])
        clusters.append((o1, g, o2_pair))

    image_ids, image_rows = [], []
    cap_ids, cap_image_ids, cap_rows, cap_records = [], [], [], []
    for i in range(50):
        img_id = i + 1
        o1, g, o2_pair = clusters[i % n_clusters]
        o2 = o2_pair[(i // n_clusters) % 2]
        text = f"a {o1} {g} a {o2}"
        core = vecs[o1] + 0.8 * vecs[g] + 0.3 * vecs[o2]
        img = core + 0.03 * rng.normal(size=DIM)
        cap = core + 0.02 * rng.normal(size=DIM)
        image_rows.append(img / np.linalg.norm(img))
        image_ids.append(img_id)
        cap_ids.append(200 + i)
        cap_image_ids.append(img_id)
        cap_rows.append(cap / np.linalg.norm(cap))
        cap_records.append({"id": 200 + i, "image_id": img_id, "text": text})

    write_emb1(out / "images.emb1", np.stack(image_rows))
    write_ids_sidecar(out / "images.ids.jsonl", image_ids, image_ids)
    write_emb1(out / "captions.emb1", np.stack(cap_rows))
    write_ids_sidecar(out / "captions.ids.jsonl", cap_ids, cap_image_ids)
    with open(out / "captions.jsonl", "w", encoding="utf-8") as fh:
        for rec in cap_records:
            fh.write(json.dumps(rec) + "\n")

    write_lexicon(out / "lexicon.tsv")
    write_word_store(out, vecs)

    config = {
        "batch_size": 1,
        "learning_rate": 5e-3,
        "warmup_steps": 10,
        "epochs": 6,
        "adam_beta2": 0.9,
        "seed": 123,
        "max_caption_len": 12,
        "retrieval_k": 3,
        "beam_size": 5,
        "gen_max_len": 12,
        "thresholds": {
            "top_d": 20, "score_s": 0.8, "obj_freq_o": 1, "obj_sim": 0.24,
            "rel_freq_r": 1, "max_objects": 6, "max_relations": 3,
            "relation_rule": "max_frequency",
        },
        "ablation": {"use_prompt": True, "use_objects": True, "use_relations": True,
                     "template_id": 1, "freeze_decoder_layers": None, "mapping": "ssm"},
        "model": {"input_dim": DIM, "visual_seq_len": 4, "d_model": 64,
                  "ssm_blocks": 2, "ssm_state_dim": 16, "decoder_layers": 4,
                  "decoder_heads": 2, "max_context": 64},
        "head": {"vocab_size": 40, "pretrain_epochs": 2000, "pretrain_lr": 1.0,
                 "joint_train": False},
        "data": {
            "image_embeddings": "images.emb1",
            "image_ids": "images.ids.jsonl",
            "captions": "captions.jsonl",
            "caption_embeddings": "captions.emb1",
            "caption_ids": "captions.ids.jsonl",
            "word_embeddings": "words.emb1",
            "word_vocab": "words.txt",
            "lexicon": "lexicon.tsv",
            "prepositions": None,
            "head_prefix": None,
            "out_dir": "runs/train50",
        },
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


def main() -> None:
    rng = np.random.default_rng(11)
    vecs = word_vectors(rng)
    make_orem30(vecs)
    make_train50(vecs)
    print("fixtures written under", ROOT / "fixtures")


if __name__ == "__main__":
    main()
