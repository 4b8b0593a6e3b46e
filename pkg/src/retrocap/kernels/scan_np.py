"""Pure-NumPy selective-scan kernels (fallback backend).

Shapes: u, delta are (B, L, D); b, c are (B, L, N); a is (D, N) shared
across the batch; d_res is (D,). The time loop is sequential by nature;
everything inside a step is vectorized over (B, D, N). Semantics must
match the compiled backend.
"""

from __future__ import annotations

import numpy as np

SMALL_AD = 1e-8

name = "numpy"


def scan_forward(u, delta, b, c, a, d_res):
    """Run the discretized recurrence; returns (y, h_all).

    Per sample, channel ch, state i:
        a_bar = exp(a * delta[ch]);  b_bar = ((a_bar - 1) / a) * b
        (b_bar -> delta * b when |a * delta| < SMALL_AD)
        h[ch, i] = a_bar * h_prev[ch, i] + b_bar * u[ch]
        y[ch]    = sum_i c[i] * h[ch, i] + d_res[ch] * u[ch]

    h_all stacks h over time for the backward pass.
    """
    B, L, D = u.shape
    N = a.shape[1]
    y = np.empty_like(u)
    h_all = np.empty((B, L, D, N), dtype=u.dtype)
    h = np.zeros((B, D, N), dtype=u.dtype)
    for t in range(L):
        z = a[None] * delta[:, t, :, None]  # (B, D, N)
        a_bar = np.exp(z)
        small = np.abs(z) < SMALL_AD
        with np.errstate(divide="ignore", invalid="ignore"):
            coeff = np.where(small, delta[:, t, :, None], (a_bar - 1.0) / a[None])
        b_bar = coeff * b[:, t, None, :]
        h = a_bar * h + b_bar * u[:, t, :, None]
        h_all[:, t] = h
        y[:, t] = np.einsum("bdn,bn->bd", h, c[:, t]) + d_res[None] * u[:, t]
    return y, h_all


def scan_backward(gy, u, delta, b, c, a, d_res, h_all):
    """Exact gradients of scan_forward w.r.t. every input.

    The recurrence is reversed: the running state gradient gh picks up
    gy_t * c_t at each step and is propagated through a_bar. In the
    small-|a*delta| branch the forward computes delta * b exactly, so its
    derivative w.r.t. a is zero there by construction.
    """
    B, L, D = u.shape
    gu = np.zeros_like(u)
    gdelta = np.zeros_like(delta)
    gb = np.zeros_like(b)
    gc = np.zeros_like(c)
    ga = np.zeros_like(a)
    gd = np.zeros_like(d_res)
    gh = np.zeros_like(h_all[:, 0])  # (B, D, N)
    zero_h = np.zeros_like(gh)
    for t in range(L - 1, -1, -1):
        h_t = h_all[:, t]
        h_prev = h_all[:, t - 1] if t > 0 else zero_h
        gc[:, t] = np.einsum("bd,bdn->bn", gy[:, t], h_t)
        gd += (gy[:, t] * u[:, t]).sum(axis=0)
        gh += gy[:, t, :, None] * c[:, t, None, :]

        z = a[None] * delta[:, t, :, None]
        a_bar = np.exp(z)
        small = np.abs(z) < SMALL_AD
        with np.errstate(divide="ignore", invalid="ignore"):
            coeff = np.where(small, delta[:, t, :, None], (a_bar - 1.0) / a[None])
        b_bar = coeff * b[:, t, None, :]

        g_abar = gh * h_prev
        g_bbar = gh * u[:, t, :, None]

        gu[:, t] = gy[:, t] * d_res[None] + (gh * b_bar).sum(axis=2)
        gb[:, t] = (g_bbar * coeff).sum(axis=1)
        # d(coeff)/d(delta) = a_bar in the main branch, 1 in the limit branch
        dcoeff_ddelta = np.where(small, np.ones_like(a_bar), a_bar)
        gdelta[:, t] = (g_abar * a_bar * a[None] + g_bbar * b[:, t, None, :] * dcoeff_ddelta).sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            dcoeff_da = np.where(
                small,
                np.zeros_like(a_bar),
                (delta[:, t, :, None] * a_bar * a[None] - (a_bar - 1.0)) / (a[None] * a[None]),
            )
        ga += (g_abar * a_bar * delta[:, t, :, None] + g_bbar * b[:, t, None, :] * dcoeff_da).sum(axis=0)

        gh = gh * a_bar
    return gu, gdelta, gb, gc, ga, gd
