import numpy as np
import pytest

from retrocap import autograd as ag
from retrocap.autograd import Tensor
from retrocap.decoder import (
    DecoderModel,
    build_prefix,
    caption_logits_slice,
    caption_segment,
    concat_training_sequence,
    cross_entropy_loss,
    default_frozen_below,
)
from retrocap.tokenizer import BOS, EOS, PAD


@pytest.fixture()
def model():
    return DecoderModel(vocab_size=17, d_model=16, n_layers=2, n_heads=2,
                        max_context=32, frozen_below=0, seed=0)


def test_default_freeze_rule():
    assert default_frozen_below(12) == 8
    assert default_frozen_below(4) == 2


def test_causality_exact(model, rng):
    x = rng.normal(size=(1, 6, 16)).astype(np.float32)
    base = model.forward_embeds(x)
    x2 = x.copy()
    x2[0, 4] += 1.0
    out = model.forward_embeds(x2)
    np.testing.assert_array_equal(base[0, :4], out[0, :4])
    assert np.abs(base[0, 4:] - out[0, 4:]).max() > 0


def test_single_token_shape(model, rng):
    logits = model.forward_embeds(rng.normal(size=(1, 1, 16)).astype(np.float32))
    assert logits.shape == (1, 1, 17)


def test_forward_deterministic(model, rng):
    x = rng.normal(size=(2, 5, 16)).astype(np.float32)
    np.testing.assert_array_equal(model.forward_embeds(x), model.forward_embeds(x))


def test_context_overflow(model, rng):
    with pytest.raises(ValueError, match="context"):
        model.forward_embeds(rng.normal(size=(1, 33, 16)).astype(np.float32))


def test_build_prefix_lengths(model, rng):
    visual = rng.normal(size=(10, 16)).astype(np.float32)
    prefix = build_prefix([4 + (i % 13) for i in range(20)], visual, model)
    assert prefix.length == 30
    assert prefix.embeds.shape == (30, 16)
    empty = build_prefix([], visual, model)
    assert empty.length == 10


def test_build_prefix_deterministic(model, rng):
    visual = rng.normal(size=(3, 16)).astype(np.float32)
    a = build_prefix([4, 5], visual, model).embeds
    b = build_prefix([4, 5], visual, model).embeds
    np.testing.assert_array_equal(a, b)


def test_build_prefix_rejects_bad_width(model, rng):
    with pytest.raises(ValueError, match="seq_len"):
        build_prefix([4], rng.normal(size=(3, 8)).astype(np.float32), model)


def test_caption_segment_layout():
    input_ids, targets, mask, truncated = caption_segment([7, 8, 9], 6)
    assert input_ids.tolist() == [BOS, 7, 8, 9, PAD, PAD]
    assert targets.tolist() == [7, 8, 9, EOS, PAD, PAD]
    assert mask.tolist() == [1, 1, 1, 1, 0, 0]
    assert not truncated


def test_caption_segment_truncates_overlong():
    ids = list(range(4, 16))
    input_ids, targets, mask, truncated = caption_segment(ids, 6)
    assert truncated
    assert input_ids.tolist() == [BOS, 4, 5, 6, 7, 8]
    assert targets.tolist() == [4, 5, 6, 7, 8, EOS]
    assert mask.sum() == 6


def test_caption_segment_exact_length_warns():
    # caption of exactly max_caption_len tokens cannot fit its <eos>
    _, _, _, truncated = caption_segment(list(range(4, 10)), 6)
    assert truncated


def test_caption_segment_empty_caption():
    input_ids, targets, mask, truncated = caption_segment([], 4)
    assert input_ids.tolist() == [BOS, PAD, PAD, PAD]
    assert targets.tolist() == [EOS, PAD, PAD, PAD]
    assert mask.tolist() == [1, 0, 0, 0]
    assert not truncated


def test_concat_training_sequence_lengths(model, rng):
    prefix = build_prefix(list(range(4, 10)), rng.normal(size=(4, 16)).astype(np.float32), model)
    seq = concat_training_sequence(prefix, [4, 5], model, 8)
    assert prefix.length + len(seq.input_ids) == 18
    assert seq.loss_mask.sum() == 3  # two tokens + <eos>


def test_loss_uniform_logits_is_log_vocab():
    logits = Tensor(np.zeros((2, 3, 11), dtype=np.float64))
    targets = np.array([[1, 2, 3], [4, 5, 6]])
    mask = np.ones((2, 3))
    loss = cross_entropy_loss(logits, targets, mask)
    assert float(loss.data) == pytest.approx(np.log(11.0), abs=1e-9)


def test_loss_perfect_prediction_goes_to_zero():
    logits = np.full((1, 2, 5), -1e4, dtype=np.float64)
    logits[0, 0, 3] = 1e4
    logits[0, 1, 1] = 1e4
    loss = cross_entropy_loss(Tensor(logits), np.array([[3, 1]]), np.ones((1, 2)))
    assert float(loss.data) == pytest.approx(0.0, abs=1e-9)


def test_loss_matches_float64_logsumexp_oracle(rng):
    logits = rng.normal(size=(2, 4, 9))
    targets = rng.integers(0, 9, size=(2, 4))
    mask = (rng.random(size=(2, 4)) > 0.3).astype(np.float64)
    mask[0, 0] = 1.0
    loss = float(cross_entropy_loss(Tensor(logits), targets, mask).data)
    total = 0.0
    for i in range(2):
        for j in range(4):
            if mask[i, j]:
                z = logits[i, j] - logits[i, j].max()
                total += -(z[targets[i, j]] - np.log(np.exp(z).sum()))
    assert loss == pytest.approx(total / mask.sum(), abs=1e-9)


def test_loss_empty_mask_is_error():
    with pytest.raises(ValueError, match="mask"):
        cross_entropy_loss(Tensor(np.zeros((1, 2, 3))), np.zeros((1, 2), dtype=int), np.zeros((1, 2)))


def test_loss_mask_blocks_prefix_gradients(rng):
    """Positions outside the mask contribute exactly zero gradient."""
    logits = Tensor(rng.normal(size=(1, 4, 7)), requires_grad=True)
    targets = np.array([[1, 2, 3, 4]])
    mask = np.array([[0.0, 1.0, 1.0, 0.0]])
    loss = cross_entropy_loss(logits, targets, mask)
    loss.backward()
    np.testing.assert_array_equal(logits.grad[0, 0], np.zeros(7))
    np.testing.assert_array_equal(logits.grad[0, 3], np.zeros(7))
    assert np.abs(logits.grad[0, 1]).max() > 0


def test_caption_logits_slice_alignment(model, rng):
    """The <bos> position predicts the first caption token."""
    prefix_len, cap_len = 5, 4
    sl = caption_logits_slice(prefix_len, cap_len)
    assert sl == slice(5, 9)
    # end-to-end: gradients only flow from masked positions
    visual = rng.normal(size=(prefix_len, 16)).astype(np.float32)
    input_ids, targets, mask, _ = caption_segment([4, 5], 4)
    emb = model.embed_tokens_t(input_ids[None])
    full = ag.concat([Tensor(visual[None].astype(np.float32)), emb], axis=1)
    logits = model.forward_embeds_t(full)
    sliced = ag.getitem(logits, (slice(None), caption_logits_slice(prefix_len, 4)))
    assert sliced.shape == (1, 4, 17)


def test_frozen_layers_excluded_from_trainables():
    model = DecoderModel(vocab_size=9, d_model=8, n_layers=4, n_heads=2,
                         max_context=8, seed=0)
    assert model.frozen_below == 2
    names = set(model.trainable_parameters())
    assert not any(n.startswith(("layer0.", "layer1.")) for n in names)
    assert any(n.startswith("layer2.") for n in names)
    assert "tok_emb" in names
