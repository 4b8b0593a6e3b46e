"""Finite-difference checks for every autograd primitive."""

import numpy as np
import pytest

from retrocap import autograd as ag
from retrocap.autograd import Tensor


def fd_check(build, params, eps=1e-6, tol=1e-6):
    """Compare analytic grads of scalar build(params) with central differences."""
    tensors = [Tensor(np.asarray(p, dtype=np.float64), requires_grad=True) for p in params]
    loss = build(*tensors)
    loss.backward()
    for t in tensors:
        flat = t.data.ravel()
        grad = t.grad.ravel()
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp = float(build(*tensors).data)
            flat[i] = old - eps
            lm = float(build(*tensors).data)
            flat[i] = old
            fd = (lp - lm) / (2 * eps)
            assert abs(fd - grad[i]) <= tol * max(abs(fd), abs(grad[i]), 1.0), (
                f"param {i}: fd={fd} analytic={grad[i]}"
            )


def test_add_mul_broadcast(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4,))
    fd_check(lambda x, y: ag.tsum(ag.mul(ag.add(x, y), ag.add(x, 2.0))), [a, b])


def test_matmul_batched(rng):
    a = rng.normal(size=(2, 3, 4))
    b = rng.normal(size=(4, 5))
    fd_check(lambda x, y: ag.tsum(ag.matmul(x, y)), [a, b])


def test_activations(rng):
    x = rng.normal(size=(2, 5))
    for op in (ag.exp, ag.tanh, ag.sigmoid, ag.softplus, ag.silu, ag.gelu):
        fd_check(lambda t, op=op: ag.tsum(ag.mul(op(t), op(t))), [x])


def test_log_and_power(rng):
    x = np.abs(rng.normal(size=(2, 3))) + 0.5
    fd_check(lambda t: ag.tsum(ag.log(t)), [x])
    fd_check(lambda t: ag.tsum(ag.power(t, -0.5)), [x])


def test_softmax_and_log_softmax(rng):
    x = rng.normal(size=(2, 6))
    w = rng.normal(size=(2, 6))
    fd_check(lambda t: ag.tsum(ag.mul(ag.softmax(t), w)), [x])
    fd_check(lambda t: ag.tsum(ag.mul(ag.log_softmax(t), w)), [x])


def test_reshape_transpose_concat_getitem(rng):
    a = rng.normal(size=(2, 6))
    b = rng.normal(size=(3, 6))

    def build(x, y):
        cat = ag.concat([x, y], axis=0)          # (5, 6)
        t = ag.transpose(cat, (1, 0))            # (6, 5)
        r = ag.reshape(t, (3, 10))
        return ag.tsum(ag.mul(ag.getitem(r, (slice(0, 2), slice(None))), 1.5))

    fd_check(build, [a, b])


def test_reductions(rng):
    x = rng.normal(size=(3, 4))
    fd_check(lambda t: ag.tsum(ag.mul(ag.tmean(t, axis=-1, keepdims=True), t)), [x])
    fd_check(lambda t: ag.tsum(ag.mul(ag.tsum(t, axis=0), ag.tsum(t, axis=0))), [x])


def test_embedding_and_gather(rng):
    w = rng.normal(size=(7, 4))
    ids = np.array([[1, 3, 1], [0, 6, 2]])
    sel = np.array([[2, 0, 1], [3, 3, 0]])

    def build(t):
        e = ag.embedding(t, ids)               # (2, 3, 4)
        return ag.tsum(ag.take_along_last(e, sel))

    fd_check(build, [w])


def test_norms(rng):
    x = rng.normal(size=(2, 3, 8))
    g = np.abs(rng.normal(size=8)) + 0.5
    b = rng.normal(size=8)
    fd_check(lambda t, gg: ag.tsum(ag.mul(ag.rmsnorm(t, gg), t)), [x, g])
    fd_check(lambda t, gg, bb: ag.tsum(ag.mul(ag.layernorm(t, gg, bb), t)), [x, g, b])


def test_zero_upstream_gives_zero_grads(rng):
    x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    y = ag.mul(ag.matmul(x, x), 1.0)
    y.backward(np.zeros_like(y.data))
    np.testing.assert_array_equal(x.grad, np.zeros_like(x.data))


def test_grad_accumulates_across_backward_calls(rng):
    x = Tensor(rng.normal(size=(2,)), requires_grad=True)
    loss1 = ag.tsum(x)
    loss1.backward()
    first = x.grad.copy()
    loss2 = ag.tsum(ag.mul(x, 2.0))
    loss2.backward()
    np.testing.assert_allclose(x.grad, first + 2.0)


def test_no_grad_blocks_graph(rng):
    x = Tensor(rng.normal(size=(2,)), requires_grad=True)
    with ag.no_grad():
        y = ag.mul(x, 3.0)
    assert y._parents == () and not y.requires_grad


def test_dtype_preserved_through_ops(rng):
    x = Tensor(rng.normal(size=(2, 3)).astype(np.float32), requires_grad=True)
    y = ag.tsum(ag.mul(ag.gelu(ag.matmul(x, ag.transpose(x, (1, 0)))), 0.5))
    assert y.dtype == np.float32
    y.backward()
    assert x.grad.dtype == np.float32
