"""Selective state-space mapping network.

Expands one image embedding into a short token sequence, then refines it
with stacked gated SSM blocks. Each block projects its input into
per-channel step sizes and shared input/output couplings, discretizes the
(strictly negative) transition row with a zero-order hold, and runs the
scan recurrence through the compiled kernel (or its NumPy fallback).

Conventions: per-channel scalar step delta (d_model of them), shared
b_t, c_t in R^n_state, transition a in R^(d_model x n_state), hidden
state h in R^(d_model x n_state); the readout sums over n_state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import kernels
from .autograd import Tensor, _make


@dataclass
class ScanState:
    h: np.ndarray  # (d_model, n_state)
    t: int


def selective_scan_op(u: Tensor, delta: Tensor, b: Tensor, c: Tensor,
                      a: Tensor, d_res: Tensor) -> Tensor:
    """Differentiable scan over (B, L, D) inputs; custom forward/backward."""
    dtype = u.data.dtype
    args = (u.data, delta.data, b.data, c.data, a.data, d_res.data)
    args = tuple(np.ascontiguousarray(x, dtype=dtype) for x in args)
    y, h_all = kernels.scan_forward(*args)

    def vjp(g):
        return kernels.scan_backward(np.ascontiguousarray(g, dtype=dtype), *args, h_all)

    return _make(y, (u, delta, b, c, a, d_res), vjp)


def _inv_softplus(y: np.ndarray) -> np.ndarray:
    return np.log(np.expm1(y))


class SsmBlockParams:
    """Learnable tensors of one block.

    The input projection realizes the scan's input map: its output is the
    per-channel scalar injected into the recurrence (broadcast over
    n_state). The transition a stays strictly negative so exp(a * delta)
    lies in (0, 1) for positive delta.
    """

    def __init__(self, d_model: int, n_state: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.d_model = d_model
        self.n_state = n_state

        def p(arr):
            return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)

        self.a = p(np.tile(-np.arange(1.0, n_state + 1.0), (d_model, 1)))
        self.w_delta = p(rng.normal(0.0, 0.02, (d_model, d_model)))
        # softplus(b_delta) spans ~0.01..0.1 at init
        self.b_delta = p(_inv_softplus(np.exp(rng.uniform(np.log(0.01), np.log(0.1), d_model))))
        self.w_b = p(rng.normal(0.0, d_model**-0.5, (n_state, d_model)))
        self.b_b = p(np.zeros(n_state))
        self.w_c = p(rng.normal(0.0, d_model**-0.5, (n_state, d_model)))
        self.b_c = p(np.zeros(n_state))
        self.d = p(np.ones(d_model))
        self.in_proj = p(rng.normal(0.0, 0.02, (d_model, d_model)))
        self.gate_proj = p(rng.normal(0.0, 0.02, (d_model, d_model)))
        self.out_proj = p(rng.normal(0.0, 0.02, (d_model, d_model)))
        self.norm_scale = p(np.ones(d_model))

    _FIELDS = ("a", "w_delta", "b_delta", "w_b", "b_b", "w_c", "b_c", "d",
               "in_proj", "gate_proj", "out_proj", "norm_scale")

    def named_parameters(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in self._FIELDS}


def project_dynamics_t(u: Tensor, p: SsmBlockParams) -> tuple[Tensor, Tensor, Tensor]:
    """Input-dependent scan couplings for a (B, L, D) sequence."""
    delta = ag.softplus(ag.linear(u, p.w_delta, p.b_delta))
    b = ag.linear(u, p.w_b, p.b_b)
    c = ag.linear(u, p.w_c, p.b_c)
    return delta, b, c


def block_forward_t(x: Tensor, p: SsmBlockParams) -> Tensor:
    """Pre-norm gated block: x + out(scan(in(norm x)) * silu(gate(norm x)))."""
    xn = ag.rmsnorm(x, p.norm_scale)
    u = ag.linear(xn, p.in_proj)
    delta, b, c = project_dynamics_t(u, p)
    y = selective_scan_op(u, delta, b, c, p.a, p.d)
    gate = ag.silu(ag.linear(xn, p.gate_proj))
    return ag.add(x, ag.linear(ag.mul(y, gate), p.out_proj))


class MappingNetwork:
    """Image embedding -> (seq_len, d_model) visual-text embeddings."""

    def __init__(self, input_dim: int = 512, seq_len: int = 10, d_model: int = 768,
                 n_blocks: int = 10, n_state: int = 16, seed: int = 0,
                 dtype=np.float32):
        self.input_dim = input_dim
        self.seq_len = seq_len
        self.d_model = d_model
        self.n_state = n_state
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.expand_w = Tensor(
            rng.normal(0.0, input_dim**-0.5, (seq_len * d_model, input_dim)).astype(dtype),
            requires_grad=True,
        )
        self.expand_b = Tensor(np.zeros(seq_len * d_model, dtype=dtype), requires_grad=True)
        self.blocks = [SsmBlockParams(d_model, n_state, rng, dtype) for _ in range(n_blocks)]
        self._last_output: Tensor | None = None

    def named_parameters(self) -> dict[str, Tensor]:
        params = {"expand.w": self.expand_w, "expand.b": self.expand_b}
        for i, blk in enumerate(self.blocks):
            for name, t in blk.named_parameters().items():
                params[f"block{i}.{name}"] = t
        return params

    def clamp_transitions(self, ceiling: float = -1e-6) -> None:
        """Project every transition entry back below zero after an update.

        Keeps exp(a * delta) a contraction no matter what the optimizer
        did; a no-op while entries are already negative.
        """
        for blk in self.blocks:
            np.minimum(blk.a.data, ceiling, out=blk.a.data)

    def forward_t(self, x: Tensor) -> Tensor:
        """Graph forward for a (batch, input_dim) tensor."""
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input dim {x.shape[-1]} != expected {self.input_dim}")
        h = ag.linear(x, self.expand_w, self.expand_b)
        h = ag.reshape(h, (x.shape[0], self.seq_len, self.d_model))
        for blk in self.blocks:
            h = block_forward_t(h, blk)
        return h

    def forward(self, embs: np.ndarray) -> np.ndarray:
        """Forward for a (batch, input_dim) array, caching the graph."""
        x = Tensor(np.ascontiguousarray(embs, dtype=self.dtype))
        out = self.forward_t(x)
        self._last_output = out
        return out.data

    def backward(self, grad_out: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of the cached forward for every parameter tensor."""
        if self._last_output is None:
            raise RuntimeError("backward called before forward")
        for t in self.named_parameters().values():
            t.zero_grad()
        self._last_output.backward(np.asarray(grad_out, dtype=self.dtype))
        grads = {name: t.grad for name, t in self.named_parameters().items()}
        self._last_output = None
        return grads


def map_image_embedding(image_emb: np.ndarray, net: MappingNetwork) -> np.ndarray:
    """Map one image embedding to its (seq_len, d_model) token sequence."""
    emb = np.asarray(image_emb, dtype=net.dtype).ravel()
    if emb.shape[0] != net.input_dim:
        raise ValueError(f"embedding dim {emb.shape[0]} != network input dim {net.input_dim}")
    with ag.no_grad():
        out = net.forward_t(Tensor(emb[None, :]))
    return out.data[0]


# -- functional single-sequence surface (tests, inspection) -----------------

def project_dynamics(x_t: np.ndarray, p: SsmBlockParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """delta, b, c for a single d_model token."""
    x = np.asarray(x_t, dtype=p.w_delta.dtype).ravel()
    if x.shape[0] != p.d_model:
        raise ValueError(f"token dim {x.shape[0]} != d_model {p.d_model}")
    with ag.no_grad():
        delta, b, c = project_dynamics_t(Tensor(x[None, None, :]), p)
    return delta.data[0, 0], b.data[0, 0], c.data[0, 0]


def discretize(a_row: np.ndarray, delta: float, b_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold step for one channel: returns (a_bar, b_bar)."""
    a_row = np.asarray(a_row)
    b_t = np.asarray(b_t)
    if delta <= 0:
        raise ValueError("delta must be positive")
    z = a_row * delta
    a_bar = np.exp(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        coeff = np.where(np.abs(z) < kernels.SMALL_AD, delta, (a_bar - 1.0) / a_row)
    return a_bar, coeff * b_t


def selective_scan(u: np.ndarray, p: SsmBlockParams) -> tuple[np.ndarray, ScanState]:
    """Scan one (seq_len, d_model) sequence; returns outputs and final state."""
    u = np.ascontiguousarray(u, dtype=p.w_delta.dtype)
    with ag.no_grad():
        ut = Tensor(u[None])
        delta, b, c = project_dynamics_t(ut, p)
    y, h_all = kernels.scan_forward(
        u[None], np.ascontiguousarray(delta.data), np.ascontiguousarray(b.data),
        np.ascontiguousarray(c.data), np.ascontiguousarray(p.a.data),
        np.ascontiguousarray(p.d.data),
    )
    return y[0], ScanState(h=h_all[0, -1], t=u.shape[0])


def block_forward(x: np.ndarray, p: SsmBlockParams) -> np.ndarray:
    """Block forward for one (seq_len, d_model) sequence."""
    x = np.ascontiguousarray(x, dtype=p.w_delta.dtype)
    with ag.no_grad():
        out = block_forward_t(Tensor(x[None]), p)
    return out.data[0]
