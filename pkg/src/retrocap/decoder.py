"""Autoregressive caption decoder.

A pre-norm causal self-attention stack standing in for a pretrained
language model: token/positional embeddings, masked multi-head attention,
GELU feed-forward, and an output head tied to the token embeddings.
Prefix assembly, the caption loss, and beam-search generation live here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .tokenizer import BOS, EOS, NULL, PAD, Tokenizer


def default_frozen_below(n_layers: int) -> int:
    """Freeze the first floor(2L/3) layers; 8 of 12 at paper scale."""
    return (2 * n_layers) // 3


class DecoderModel:
    def __init__(self, vocab_size: int, d_model: int = 768, n_layers: int = 12,
                 n_heads: int = 12, max_context: int = 128,
                 frozen_below: int | None = None, seed: int = 0, dtype=np.float32):
        if d_model % n_heads != 0:
            raise ValueError("d_model must divide evenly into heads")
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.max_context = max_context
        self.frozen_below = default_frozen_below(n_layers) if frozen_below is None else frozen_below
        self.dtype = dtype

        rng = np.random.default_rng(seed)

        def p(arr):
            return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)

        self.params: dict[str, Tensor] = {}
        self.params["tok_emb"] = p(rng.normal(0.0, 0.02, (vocab_size, d_model)))
        # position signal scaled up: slot-addressed attention (prompt copy)
        # has to become distinguishable within short desk-scale runs
        self.params["pos_emb"] = p(rng.normal(0.0, 0.05, (max_context, d_model)))
        for i in range(n_layers):
            pre = f"layer{i}."
            self.params[pre + "ln1.g"] = p(np.ones(d_model))
            self.params[pre + "ln1.b"] = p(np.zeros(d_model))
            for nm in ("wq", "wk", "wv", "wo"):
                self.params[pre + "attn." + nm] = p(rng.normal(0.0, 0.02, (d_model, d_model)))
            self.params[pre + "ln2.g"] = p(np.ones(d_model))
            self.params[pre + "ln2.b"] = p(np.zeros(d_model))
            self.params[pre + "ffn.w1"] = p(rng.normal(0.0, 0.02, (4 * d_model, d_model)))
            self.params[pre + "ffn.b1"] = p(np.zeros(4 * d_model))
            self.params[pre + "ffn.w2"] = p(rng.normal(0.0, 0.02, (d_model, 4 * d_model)))
            self.params[pre + "ffn.b2"] = p(np.zeros(d_model))
        self.params["final_ln.g"] = p(np.ones(d_model))
        self.params["final_ln.b"] = p(np.zeros(d_model))
        # frozen layers take no updates; skipping their grads saves work
        for name, tensor in self.params.items():
            if self.is_frozen(name):
                tensor.requires_grad = False

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self.params)

    def is_frozen(self, name: str) -> bool:
        if not name.startswith("layer"):
            return False
        idx = int(name.split(".")[0][len("layer"):])
        return idx < self.frozen_below

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {n: t for n, t in self.params.items() if not self.is_frozen(n)}

    # -- forward -----------------------------------------------------------

    def embed_tokens_t(self, ids: np.ndarray) -> Tensor:
        return ag.embedding(self.params["tok_emb"], ids)

    def forward_embeds_t(self, x: Tensor) -> Tensor:
        """Causal forward over (B, T, d_model) embeddings -> (B, T, V) logits."""
        B, T, C = x.shape
        if T > self.max_context:
            raise ValueError(f"sequence length {T} exceeds context {self.max_context}")
        x = ag.add(x, ag.getitem(self.params["pos_emb"], slice(0, T)))
        mask = np.triu(np.full((T, T), -np.inf, dtype=x.dtype), k=1)
        hd = C // self.n_heads
        scale = hd**-0.5  # python float: keeps the graph in the model dtype
        for i in range(self.n_layers):
            pre = f"layer{i}."
            xn = ag.layernorm(x, self.params[pre + "ln1.g"], self.params[pre + "ln1.b"])
            q = ag.linear(xn, self.params[pre + "attn.wq"])
            k = ag.linear(xn, self.params[pre + "attn.wk"])
            v = ag.linear(xn, self.params[pre + "attn.wv"])
            # (B, T, C) -> (B, H, T, hd)
            q = ag.transpose(ag.reshape(q, (B, T, self.n_heads, hd)), (0, 2, 1, 3))
            k = ag.transpose(ag.reshape(k, (B, T, self.n_heads, hd)), (0, 2, 1, 3))
            v = ag.transpose(ag.reshape(v, (B, T, self.n_heads, hd)), (0, 2, 1, 3))
            scores = ag.mul(ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))), scale)
            att = ag.softmax(ag.add(scores, mask), axis=-1)
            ctx = ag.matmul(att, v)
            ctx = ag.reshape(ag.transpose(ctx, (0, 2, 1, 3)), (B, T, C))
            x = ag.add(x, ag.linear(ctx, self.params[pre + "attn.wo"]))
            xn = ag.layernorm(x, self.params[pre + "ln2.g"], self.params[pre + "ln2.b"])
            h = ag.gelu(ag.linear(xn, self.params[pre + "ffn.w1"], self.params[pre + "ffn.b1"]))
            x = ag.add(x, ag.linear(h, self.params[pre + "ffn.w2"], self.params[pre + "ffn.b2"]))
        x = ag.layernorm(x, self.params["final_ln.g"], self.params["final_ln.b"])
        return ag.matmul(x, ag.transpose(self.params["tok_emb"], (1, 0)))

    def forward_embeds(self, x: np.ndarray) -> np.ndarray:
        """Graph-free forward for generation and probes."""
        with ag.no_grad():
            return self.forward_embeds_t(Tensor(np.asarray(x, dtype=self.dtype))).data


# -- sequence assembly -------------------------------------------------------

@dataclass
class PrefixSequence:
    prompt_embeds: np.ndarray  # (n_p, d_model); n_p may be 0
    visual_embeds: np.ndarray  # (seq_len, d_model)

    @property
    def length(self) -> int:
        return self.prompt_embeds.shape[0] + self.visual_embeds.shape[0]

    @property
    def embeds(self) -> np.ndarray:
        return np.concatenate([self.prompt_embeds, self.visual_embeds], axis=0)


@dataclass
class TrainingSequence:
    prefix: PrefixSequence
    caption_ids: list[int]
    input_ids: np.ndarray   # caption-segment token ids, starts with <bos>
    targets: np.ndarray     # shifted-left ids ending in <eos>, <pad> beyond
    loss_mask: np.ndarray   # 1.0 on real caption targets only
    truncated: bool = field(default=False)


def build_prefix(prompt_ids: list[int], visual: np.ndarray, model: DecoderModel) -> PrefixSequence:
    """Prompt token embeddings followed by the mapped visual tokens."""
    visual = np.asarray(visual, dtype=model.dtype)
    if visual.ndim != 2 or visual.shape[1] != model.d_model:
        raise ValueError(f"visual embeddings must be (seq_len, {model.d_model})")
    if prompt_ids:
        prompt = model.params["tok_emb"].data[np.asarray(prompt_ids, dtype=np.int64)]
    else:
        prompt = np.zeros((0, model.d_model), dtype=model.dtype)
    return PrefixSequence(prompt_embeds=prompt, visual_embeds=visual)


def caption_segment(caption_ids: list[int], max_caption_len: int,
                    dtype=np.float32) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Caption-side arrays: <bos>-led inputs, left-shifted targets, mask.

    The segment is padded to exactly max_caption_len positions so
    prefix+caption length is constant across a batch. Captions longer
    than max_caption_len - 1 tokens are truncated (flagged) to leave
    room for the terminal <eos> target.
    """
    if max_caption_len < 1:
        raise ValueError("max_caption_len must be >= 1")
    ids = list(caption_ids)
    truncated = len(ids) > max_caption_len - 1
    if truncated:
        ids = ids[: max_caption_len - 1]
    input_ids = np.full(max_caption_len, PAD, dtype=np.int64)
    targets = np.full(max_caption_len, PAD, dtype=np.int64)
    mask = np.zeros(max_caption_len, dtype=dtype)
    seg = [BOS] + ids
    input_ids[: len(seg)] = seg
    tgt = ids + [EOS]
    targets[: len(tgt)] = tgt
    mask[: len(tgt)] = 1.0
    return input_ids, targets, mask, truncated


def concat_training_sequence(prefix: PrefixSequence, caption_ids: list[int],
                             model: DecoderModel, max_caption_len: int) -> TrainingSequence:
    input_ids, targets, mask, truncated = caption_segment(
        caption_ids, max_caption_len, model.dtype
    )
    return TrainingSequence(
        prefix=prefix, caption_ids=list(caption_ids), input_ids=input_ids,
        targets=targets, loss_mask=mask, truncated=truncated,
    )


def cross_entropy_loss(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over masked positions."""
    mask = np.asarray(mask, dtype=logits.dtype)
    total = float(mask.sum())
    if total == 0.0:
        raise ValueError("loss mask is empty")
    logp = ag.log_softmax(logits, axis=-1)
    nll = ag.mul(ag.take_along_last(logp, np.asarray(targets, dtype=np.int64)), -1.0)
    return ag.mul(ag.tsum(ag.mul(nll, mask)), 1.0 / total)


def caption_logits_slice(prefix_len: int, cap_len: int) -> slice:
    """Positions whose logits predict the caption segment's targets.

    The caption segment starts with <bos> at position prefix_len, so that
    position predicts the first caption token and generation can query
    the same position after appending <bos> to the prefix.
    """
    return slice(prefix_len, prefix_len + cap_len)


# -- generation ---------------------------------------------------------------

_BANNED_STEP_TOKENS = (PAD, BOS, NULL)


@dataclass(frozen=True)
class _Hyp:
    ids: tuple[int, ...]
    logprob: float
    finished: bool

    @property
    def steps(self) -> int:
        # token emissions so far, counting the terminal <eos>
        return len(self.ids) + (1 if self.finished else 0)

    @property
    def score(self) -> float:
        return self.logprob / max(self.steps, 1)


def _step_logprobs(model: DecoderModel, prefix_embeds: np.ndarray, ids: tuple[int, ...]) -> np.ndarray:
    tok = model.params["tok_emb"].data
    seg = tok[np.asarray((BOS,) + ids, dtype=np.int64)]
    x = np.concatenate([prefix_embeds, seg], axis=0)[None]
    logits = model.forward_embeds(x)[0, -1].astype(np.float64)
    z = logits - logits.max()
    return z - np.log(np.exp(z).sum())


def beam_search(prefix: PrefixSequence | np.ndarray, model: DecoderModel,
                beam_size: int = 5, max_len: int = 20) -> list[int]:
    """Length-normalized beam search; returns the best caption token ids.

    Hypotheses end at <eos> or max_len; the pool is ranked by cumulative
    log-probability divided by emitted-token count, ties broken by
    earlier completion then lexicographic ids. beam_size=1 reduces to
    greedy decoding.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    prefix_embeds = prefix.embeds if isinstance(prefix, PrefixSequence) else np.asarray(prefix)

    def order(pool: list[_Hyp]) -> list[_Hyp]:
        return sorted(pool, key=lambda h: (-h.score, h.steps if h.finished else max_len + 1, h.ids))

    beams = [_Hyp(ids=(), logprob=0.0, finished=False)]
    for _ in range(max_len):
        live = [h for h in beams if not h.finished]
        if not live:
            break
        pool = [h for h in beams if h.finished]
        for h in live:
            logp = _step_logprobs(model, prefix_embeds, h.ids)
            for tid in range(model.vocab_size):
                if tid in _BANNED_STEP_TOKENS:
                    continue
                cand = _Hyp(
                    ids=h.ids if tid == EOS else h.ids + (tid,),
                    logprob=h.logprob + float(logp[tid]),
                    finished=tid == EOS,
                )
                pool.append(cand)
        beams = order(pool)[:beam_size]
    return list(order(beams)[0].ids)


def greedy_decode(prefix: PrefixSequence | np.ndarray, model: DecoderModel,
                  max_len: int = 20) -> list[int]:
    """Argmax rollout (ties to the lowest token id, matching beam(1))."""
    prefix_embeds = prefix.embeds if isinstance(prefix, PrefixSequence) else np.asarray(prefix)
    ids: tuple[int, ...] = ()
    for _ in range(max_len):
        logp = _step_logprobs(model, prefix_embeds, ids)
        logp[list(_BANNED_STEP_TOKENS)] = -np.inf
        tid = int(np.argmax(logp))
        if tid == EOS:
            break
        ids = ids + (tid,)
    return list(ids)
