"""Deterministic training loop for the captioning pipeline.

One run: load data, build the tokenizer from the corpus, pretrain (or
load) the high-frequency word head, precompute every image's prompt,
then optimize the mapping network plus the unfrozen decoder layers with
Adam under a linear warm-up schedule. All randomness flows from the
config seed, so identical configs produce bit-identical checkpoints.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .checkpoint import CheckpointMeta, config_hash, load_tensors, meta_path, save_tensors
from .config import TrainingConfig
from .decoder import (
    DecoderModel,
    PrefixSequence,
    beam_search,
    build_prefix,
    caption_logits_slice,
    caption_segment,
    cross_entropy_loss,
    greedy_decode,
)
from .errors import DataFormatError, NumericalError
from .orem import (
    HighFreqHead,
    PromptBundle,
    WordEmbeddings,
    WordSets,
    assemble_prompt,
    extract_word_sets,
    head_presence_labels,
    train_head,
)
from .ssm import MappingNetwork, map_image_embedding
from .store import EmbeddingStore, build_store, load_captions
from .tagging import load_lexicon, load_prepositions
from .tokenizer import Tokenizer, split_words


def lr_schedule(step: int, base_lr: float, warmup_steps: int) -> float:
    """Linear ramp 0 -> base_lr over warmup_steps, constant afterwards."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if warmup_steps <= 0 or step >= warmup_steps:
        return base_lr
    return base_lr * step / warmup_steps


class Adam:
    """Adaptive-moment optimizer over named parameter tensors."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(t.data) for n, t in self.params.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in self.params.items()}
        self.t = 0

    def step(self, lr: float, clip_norm: float | None = None) -> None:
        grads = {n: t.grad for n, t in self.params.items() if t.grad is not None}
        if clip_norm is not None and grads:
            total = np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
            if total > clip_norm:
                scale = clip_norm / total
                grads = {n: g * np.asarray(scale, dtype=g.dtype) for n, g in grads.items()}
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            p = self.params[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            p.data = p.data - lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()


def build_head_vocab(texts: list[str], size: int,
                     exclude: frozenset[str] | set[str] = frozenset()) -> list[str]:
    """Most frequent corpus words (frequency desc, then lexicographic).

    exclude drops closed-class words (articles, adjectives, ...) that a
    word scorer has no business ranking.
    """
    counts: Counter[str] = Counter()
    for text in texts:
        for w in split_words(text):
            if any(c.isalnum() for c in w) and w != "null" and w not in exclude:
                counts[w] += 1
    ranked = sorted(counts, key=lambda w: (-counts[w], w))
    return ranked[:size]


@dataclass
class Sample:
    image_row: int       # row into the image embedding matrix
    image_id: int
    caption_id: int
    caption_ids: list[int]


class CaptionPipeline:
    """Everything needed to turn one image embedding into a caption."""

    def __init__(self, config: TrainingConfig, mapping: MappingNetwork,
                 decoder: DecoderModel, tokenizer: Tokenizer, head: HighFreqHead,
                 caption_store: EmbeddingStore, captions_by_id: dict,
                 word_store: WordEmbeddings, lexicon: dict[str, str],
                 prepositions: frozenset[str]):
        self.config = config
        self.mapping = mapping
        self.decoder = decoder
        self.tokenizer = tokenizer
        self.head = head
        self.caption_store = caption_store
        self.captions_by_id = captions_by_id
        self.word_store = word_store
        self.lexicon = lexicon
        self.prepositions = prepositions

    def extract(self, image_emb: np.ndarray, exclude_image_id: int | None = None) -> WordSets:
        return extract_word_sets(
            image_emb, self.caption_store, self.captions_by_id, self.word_store,
            self.head, self.lexicon, self.prepositions, self.config.thresholds,
            self.config.retrieval_k, exclude_image_id,
        )

    def prompt_for(self, image_emb: np.ndarray,
                   exclude_image_id: int | None = None) -> PromptBundle | None:
        """Extraction + ablation masking + template; None when promptless."""
        ab = self.config.ablation
        if not ab.use_prompt:
            return None
        sets = self.extract(image_emb, exclude_image_id)
        if not ab.use_objects:
            sets.wo = []
        if not ab.use_relations:
            sets.wr = []
        return assemble_prompt(sets, ab.template_id, self.tokenizer, self.config.thresholds)

    def prefix_for(self, image_emb: np.ndarray,
                   exclude_image_id: int | None = None) -> PrefixSequence:
        bundle = self.prompt_for(image_emb, exclude_image_id)
        prompt_ids = bundle.token_ids if bundle is not None else []
        visual = map_image_embedding(image_emb, self.mapping)
        return build_prefix(prompt_ids, visual, self.decoder)

    def caption(self, image_emb: np.ndarray, exclude_image_id: int | None = None,
                beam_size: int | None = None, max_len: int | None = None,
                greedy: bool = False) -> str:
        prefix = self.prefix_for(image_emb, exclude_image_id)
        if greedy:
            ids = greedy_decode(prefix, self.decoder, max_len or self.config.gen_max_len)
        else:
            ids = beam_search(prefix, self.decoder,
                              beam_size or self.config.beam_size,
                              max_len or self.config.gen_max_len)
        return self.tokenizer.decode(ids)


class Trainer:
    def __init__(self, config: TrainingConfig):
        self.config = config
        data = config.data
        for label in ("image_embeddings", "image_ids", "captions",
                      "caption_embeddings", "caption_ids", "word_embeddings",
                      "word_vocab", "lexicon"):
            path = getattr(data, label)
            if not path or not Path(path).exists():
                raise DataFormatError(f"missing input for {label}: {path!r}")

        self.image_store = build_store(data.image_embeddings, data.image_ids)
        self.caption_store = build_store(data.caption_embeddings, data.caption_ids)
        self.captions_by_id = load_captions(data.captions)
        store_ids = set(self.caption_store.ids)
        corpus_ids = set(self.captions_by_id)
        if store_ids != corpus_ids:
            raise DataFormatError(
                "caption corpus ids do not match the caption embedding store"
            )
        self.word_store = WordEmbeddings.load(data.word_embeddings, data.word_vocab)
        self.lexicon = load_lexicon(data.lexicon)
        self.prepositions = load_prepositions(data.prepositions)

        texts = [rec.text for rec in self.captions_by_id.values()]
        self.tokenizer = Tokenizer.from_corpus(texts)

        m = config.model
        self.mapping = MappingNetwork(
            input_dim=m.input_dim, seq_len=m.visual_seq_len, d_model=m.d_model,
            n_blocks=m.ssm_blocks, n_state=m.ssm_state_dim, seed=config.seed,
        )
        self.decoder = DecoderModel(
            vocab_size=self.tokenizer.vocab_size, d_model=m.d_model,
            n_layers=m.decoder_layers, n_heads=m.decoder_heads,
            max_context=m.max_context,
            frozen_below=config.ablation.freeze_decoder_layers, seed=config.seed + 1,
        )
        self.head = self._head_phase()
        self.pipeline = CaptionPipeline(
            config, self.mapping, self.decoder, self.tokenizer, self.head,
            self.caption_store, self.captions_by_id, self.word_store,
            self.lexicon, self.prepositions,
        )

        self.samples = self._build_samples()
        self._prompt_cache: dict[int, list[int]] = {}

    # -- phases --------------------------------------------------------------

    def _head_phase(self) -> HighFreqHead:
        """Load the scorer when provided, otherwise pretrain it (then freeze)."""
        cfg = self.config
        if cfg.data.head_prefix:
            return HighFreqHead.load(cfg.data.head_prefix)
        captions_per_image: dict[int, list[str]] = {}
        for rec in self.captions_by_id.values():
            captions_per_image.setdefault(rec.image_id, []).append(rec.text)
        closed_class = {w for w, tag in self.lexicon.items() if tag == "other"}
        vocab = build_head_vocab(
            [t for ts in captions_per_image.values() for t in ts],
            cfg.head.vocab_size, exclude=closed_class,
        )
        rows, labels_src = [], []
        image_ids = self.image_store.image_ids
        for row in range(self.image_store.count):
            rows.append(self.image_store.vectors[row])
            labels_src.append(captions_per_image.get(image_ids[row], []))
        labels = head_presence_labels(vocab, labels_src)
        return train_head(
            vocab, np.stack(rows), labels,
            epochs=cfg.head.pretrain_epochs, lr=cfg.head.pretrain_lr, seed=cfg.seed,
        )

    def _build_samples(self) -> list[Sample]:
        row_of_image = {img: row for row, img in enumerate(self.image_store.image_ids)}
        samples = []
        for rec in sorted(self.captions_by_id.values(), key=lambda r: r.id):
            row = row_of_image.get(rec.image_id)
            if row is None:
                continue
            samples.append(Sample(
                image_row=row, image_id=rec.image_id, caption_id=rec.id,
                caption_ids=self.tokenizer.encode(rec.text),
            ))
        if not samples:
            raise DataFormatError("no trainable (image, caption) pairs found")
        return samples

    def _prompt_ids(self, image_row: int, image_id: int) -> list[int]:
        if image_row not in self._prompt_cache:
            bundle = self.pipeline.prompt_for(
                self.image_store.vectors[image_row], exclude_image_id=image_id
            )
            self._prompt_cache[image_row] = bundle.token_ids if bundle else []
        return self._prompt_cache[image_row]

    # -- optimization ----------------------------------------------------------

    def _trainable(self) -> dict[str, Tensor]:
        params = {f"mapping.{n}": t for n, t in self.mapping.named_parameters().items()}
        params.update({f"decoder.{n}": t for n, t in self.decoder.trainable_parameters().items()})
        return params

    def all_tensors(self) -> dict[str, np.ndarray]:
        out = {f"mapping.{n}": t.data for n, t in self.mapping.named_parameters().items()}
        out.update({f"decoder.{n}": t.data for n, t in self.decoder.named_parameters().items()})
        return out

    def train_step(self, batch: list[Sample], optimizer: Adam, lr: float) -> float:
        cfg = self.config
        image_embs = np.stack([self.image_store.vectors[s.image_row] for s in batch])
        prompt_rows = [self._prompt_ids(s.image_row, s.image_id) for s in batch]
        n_p = len(prompt_rows[0])
        if any(len(r) != n_p for r in prompt_rows):
            raise NumericalError("prompt lengths differ within a batch")

        segs = [caption_segment(s.caption_ids, cfg.max_caption_len) for s in batch]
        cap_inputs = np.stack([seg[0] for seg in segs])
        targets = np.stack([seg[1] for seg in segs])
        mask = np.stack([seg[2] for seg in segs])

        visual = self.mapping.forward_t(Tensor(image_embs.astype(self.mapping.dtype)))
        parts = [visual, self.decoder.embed_tokens_t(cap_inputs)]
        if n_p:
            parts.insert(0, self.decoder.embed_tokens_t(np.asarray(prompt_rows, dtype=np.int64)))
        full = ag.concat(parts, axis=1)
        logits = self.decoder.forward_embeds_t(full)

        prefix_len = n_p + self.mapping.seq_len
        sl = caption_logits_slice(prefix_len, cfg.max_caption_len)
        loss_t = cross_entropy_loss(ag.getitem(logits, (slice(None), sl)), targets, mask)
        loss = float(loss_t.data)
        if not np.isfinite(loss):
            bad = self._find_bad_sample(logits.data, batch, sl, targets, mask)
            raise NumericalError(f"non-finite loss at caption id {bad}")

        optimizer.zero_grad()
        loss_t.backward()
        optimizer.step(lr, cfg.grad_clip_norm)
        self.mapping.clamp_transitions()
        return loss

    def _joint_head_step(self, batch: list[Sample]) -> None:
        """One BCE step of the word head on the batch's presence labels.

        The captioning loss cannot reach the head through the discrete
        word selection, so joint training is a parallel scorer update.
        """
        embs = np.stack(
            [self.image_store.vectors[s.image_row] for s in batch]
        ).astype(np.float64)
        texts = [[self.captions_by_id[s.caption_id].text] for s in batch]
        labels = head_presence_labels(self.head.vocab, texts).astype(np.float64)
        w = self.head.weight.astype(np.float64)
        b = self.head.bias.astype(np.float64)
        p = 1.0 / (1.0 + np.exp(-(embs @ w.T + b)))
        g = (p - labels) / len(batch)
        lr = self.config.head.pretrain_lr
        self.head.weight = (w - lr * (g.T @ embs)).astype(np.float32)
        self.head.bias = (b - lr * g.sum(axis=0)).astype(np.float32)

    @staticmethod
    def _find_bad_sample(logits: np.ndarray, batch: list[Sample], sl: slice,
                         targets: np.ndarray, mask: np.ndarray) -> int:
        for j, sample in enumerate(batch):
            if not np.isfinite(logits[j, sl]).all():
                return sample.caption_id
        return batch[0].caption_id

    def train(self) -> tuple[Path, list[dict]]:
        """Run all epochs; returns (checkpoint path, per-step metric records)."""
        cfg = self.config
        out_dir = Path(cfg.data.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(cfg.seed)
        optimizer = Adam(self._trainable(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

        metrics: list[dict] = []
        step = 0
        metrics_file = out_dir / "metrics.jsonl"
        with open(metrics_file, "w", encoding="utf-8") as mf:
            for epoch in range(cfg.epochs):
                if cfg.head.joint_train:
                    self._prompt_cache.clear()  # head moved, prompts may change
                order = rng.permutation(len(self.samples))
                for start in range(0, len(order), cfg.batch_size):
                    batch = [self.samples[i] for i in order[start : start + cfg.batch_size]]
                    lr = lr_schedule(step, cfg.learning_rate, cfg.warmup_steps)
                    loss = self.train_step(batch, optimizer, lr)
                    if cfg.head.joint_train:
                        self._joint_head_step(batch)
                    rec = {"step": step, "epoch": epoch, "lr": lr, "loss": loss}
                    metrics.append(rec)
                    mf.write(json.dumps(rec) + "\n")
                    step += 1

        ckpt = out_dir / "checkpoint.rorp"
        save_tensors(ckpt, self.all_tensors())
        self.tokenizer.save(out_dir / "vocab.txt")
        self.head.save(out_dir / "head")
        cfg_dict = cfg.to_json_dict()
        epoch_losses = _epoch_means(metrics)
        CheckpointMeta(
            version=1, step=step, epoch=cfg.epochs, config_hash=config_hash(cfg_dict),
            metrics={"epoch_mean_loss": epoch_losses,
                     "final_loss": metrics[-1]["loss"] if metrics else None},
            config=cfg_dict,
        ).save(meta_path(ckpt))
        return ckpt, metrics


def _epoch_means(metrics: list[dict]) -> list[float]:
    sums: dict[int, list[float]] = {}
    for rec in metrics:
        sums.setdefault(rec["epoch"], []).append(rec["loss"])
    return [float(np.mean(sums[e])) for e in sorted(sums)]


def load_pipeline(checkpoint_path: str | Path) -> CaptionPipeline:
    """Rebuild a full pipeline from a checkpoint + its meta sidecar."""
    from .config import config_from_dict

    ckpt = Path(checkpoint_path)
    meta = CheckpointMeta.load(meta_path(ckpt))
    config = config_from_dict(meta.config, str(meta_path(ckpt)))
    data = config.data

    caption_store = build_store(data.caption_embeddings, data.caption_ids)
    captions_by_id = load_captions(data.captions)
    word_store = WordEmbeddings.load(data.word_embeddings, data.word_vocab)
    lexicon = load_lexicon(data.lexicon)
    prepositions = load_prepositions(data.prepositions)
    tokenizer = Tokenizer.load(ckpt.parent / "vocab.txt")
    head = HighFreqHead.load(ckpt.parent / "head")

    m = config.model
    mapping = MappingNetwork(
        input_dim=m.input_dim, seq_len=m.visual_seq_len, d_model=m.d_model,
        n_blocks=m.ssm_blocks, n_state=m.ssm_state_dim, seed=config.seed,
    )
    decoder = DecoderModel(
        vocab_size=tokenizer.vocab_size, d_model=m.d_model,
        n_layers=m.decoder_layers, n_heads=m.decoder_heads, max_context=m.max_context,
        frozen_below=config.ablation.freeze_decoder_layers, seed=config.seed + 1,
    )
    tensors = load_tensors(ckpt)
    for name, tensor in mapping.named_parameters().items():
        tensor.data = tensors[f"mapping.{name}"].astype(tensor.dtype)
    for name, tensor in decoder.named_parameters().items():
        tensor.data = tensors[f"decoder.{name}"].astype(tensor.dtype)

    return CaptionPipeline(
        config, mapping, decoder, tokenizer, head, caption_store,
        captions_by_id, word_store, lexicon, prepositions,
    )
