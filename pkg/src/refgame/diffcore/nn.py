"""Neural-network primitives with hand-written backward rules.

Each function is a single tape node, which keeps the per-step graph small
enough for pure-numpy training.  Shapes follow the conventions of the
agent architecture: batch first, channels second for images.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .tensor import (
    DegenerateBatchError,
    DimensionError,
    ParameterError,
    _apply,
    _apply_multi,
)

PROB_FLOOR = 1e-12
BATCHNORM_EPS = 1e-5
BATCHNORM_MOMENTUM = 0.1
LEAKY_SLOPE = 0.01


def linear(x, w, b):
    """Affine map ``x[B, I] @ w[O, I].T + b[O] -> [B, O]``."""
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1:
        raise DimensionError(f"linear: x{x.shape} w{w.shape} b{b.shape}")
    if x.shape[1] != w.shape[1] or b.shape[0] != w.shape[0]:
        raise DimensionError(
            f"linear: inner dims disagree, x{x.shape} w{w.shape} b{b.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd.T + b.data

    def backward(g):
        gx = g @ wd if x.requires_grad else None
        gw = g.T @ xd if w.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return (gx, gw, gb)

    return _apply((x, w, b), out, backward)


def leaky_relu(x):
    """Elementwise max(x, slope * x) with slope fixed at 0.01."""
    xd = x.data
    out = np.where(xd > 0, xd, LEAKY_SLOPE * xd)

    def backward(g):
        return (np.where(xd > 0, g, LEAKY_SLOPE * g),)

    return _apply((x,), out, backward)


def softmax(x, axis=-1):
    """Numerically stabilised exponential normalisation along ``axis``."""
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _apply((x,), out, backward)


def log_softmax(x, axis=-1):
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _apply((x,), out, backward)


def dropout(x, p, mode, rng):
    """Zero elements with probability ``p`` in train mode, identity in eval.

    Survivors are scaled by 1/(1-p) so the expectation is preserved.
    """
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        def backward(g):
            return (g,)

        return _apply((x,), x.data.copy(), backward)
    if mode != "train":
        raise ParameterError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    keep = rng.random(x.shape) >= p
    scale = 1.0 / (1.0 - p)
    mask = keep.astype(x.dtype) * np.asarray(scale, dtype=x.dtype)
    out = x.data * mask

    def backward(g):
        return (g * mask,)

    return _apply((x,), out, backward)


class LstmGradSink:
    """Collects per-step backward state of one unroll.

    Weight gradients of a recurrent unroll are identical step-wise sums,
    so deferring them to one batched matmul (run by the matching
    :func:`lstm_unroll` node) avoids materialising a full-size gradient
    array per step.
    """

    __slots__ = ("steps",)

    def __init__(self):
        self.steps = []


def lstm_unroll(h0, c0, w_ih, w_hh, b):
    """Open a weight-gradient-batching scope for an LSTM unroll.

    Returns ``(h0', c0', sink)``; thread ``sink`` through every
    :func:`lstm_step` of the unroll and start it from ``h0'``/``c0'``.
    The returned node is recorded before the steps, so its backward runs
    after all of theirs and can flush the batched weight gradients.
    """
    sink = LstmGradSink()

    def backward(gs):
        gh, gc = gs
        gwi = gwh = gb = None
        if sink.steps:
            dz_all = np.concatenate([s[0] for s in sink.steps], axis=0)
            if w_ih.requires_grad:
                x_all = np.concatenate([s[1] for s in sink.steps], axis=0)
                gwi = dz_all.T @ x_all
            if w_hh.requires_grad:
                h_all = np.concatenate([s[2] for s in sink.steps], axis=0)
                gwh = dz_all.T @ h_all
            if b.requires_grad:
                gb = dz_all.sum(axis=0)
        return (gh if h0.requires_grad else None,
                gc if c0.requires_grad else None, gwi, gwh, gb)

    h0p, c0p = _apply_multi((h0, c0, w_ih, w_hh, b), (h0.data, c0.data), backward)
    return h0p, c0p, sink


def lstm_step(x, h, c, w_ih, w_hh, b, sink=None):
    """One LSTM cell step; returns ``(h_next, c_next)``.

    Gate packing along the first axis of ``w_ih[4H, I]``, ``w_hh[4H, H]``
    and ``b[4H]`` is (input, forget, cell, output).  When ``sink`` comes
    from :func:`lstm_unroll`, weight gradients are deferred to it.
    """
    B, I = x.shape if x.ndim == 2 else (None, None)
    if B is None or h.ndim != 2 or c.ndim != 2:
        raise DimensionError(f"lstm_step: x{x.shape} h{h.shape} c{c.shape}")
    H = h.shape[1]
    if (h.shape != (B, H) or c.shape != (B, H) or w_ih.shape != (4 * H, I)
            or w_hh.shape != (4 * H, H) or b.shape != (4 * H,)):
        raise DimensionError(
            f"lstm_step: x{x.shape} h{h.shape} c{c.shape} "
            f"w_ih{w_ih.shape} w_hh{w_hh.shape} b{b.shape}")

    xd, hd, cd = x.data, h.data, c.data
    z = xd @ w_ih.data.T
    z += hd @ w_hh.data.T
    z += b.data
    gi = _sigmoid(z[:, :H])
    gf = _sigmoid(z[:, H:2 * H])
    gg = np.tanh(z[:, 2 * H:3 * H])
    go = _sigmoid(z[:, 3 * H:])
    c2 = gf * cd + gi * gg
    tc2 = np.tanh(c2)
    h2 = go * tc2

    def backward(gs):
        gh2, gc2 = gs
        if gh2 is None:
            d_go = np.zeros_like(go)
            dc2 = gc2.copy()
        else:
            d_go = gh2 * tc2
            dc2 = gh2 * go * (1.0 - tc2 * tc2)
            if gc2 is not None:
                dc2 += gc2
        gc = dc2 * gf if c.requires_grad else None
        dz = np.empty_like(z)
        np.multiply(dc2 * gg, gi * (1.0 - gi), out=dz[:, :H])
        np.multiply(dc2 * cd, gf * (1.0 - gf), out=dz[:, H:2 * H])
        np.multiply(dc2 * gi, 1.0 - gg * gg, out=dz[:, 2 * H:3 * H])
        np.multiply(d_go, go * (1.0 - go), out=dz[:, 3 * H:])
        gx = dz @ w_ih.data if x.requires_grad else None
        gh = dz @ w_hh.data if h.requires_grad else None
        if sink is not None:
            sink.steps.append((dz, xd, hd))
            return (gx, gh, gc, None, None, None)
        gwi = dz.T @ xd if w_ih.requires_grad else None
        gwh = dz.T @ hd if w_hh.requires_grad else None
        gb = dz.sum(axis=0) if b.requires_grad else None
        return (gx, gh, gc, gwi, gwh, gb)

    return _apply_multi((x, h, c, w_ih, w_hh, b), (h2, c2), backward)


def _sigmoid(z):
    return special.expit(z)


def lstm_unroll_pre(h0, c0, w_hh):
    """Like :func:`lstm_unroll` for unrolls of :func:`lstm_step_pre`."""
    sink = LstmGradSink()

    def backward(gs):
        gh, gc = gs
        gwh = None
        if sink.steps and w_hh.requires_grad:
            dz_all = np.concatenate([s[0] for s in sink.steps], axis=0)
            h_all = np.concatenate([s[1] for s in sink.steps], axis=0)
            gwh = dz_all.T @ h_all
        return (gh if h0.requires_grad else None,
                gc if c0.requires_grad else None, gwh)

    h0p, c0p = _apply_multi((h0, c0, w_hh), (h0.data, c0.data), backward)
    return h0p, c0p, sink


def lstm_step_pre(x_proj, h, c, w_hh, sink=None):
    """LSTM step whose input projection ``x @ w_ih.T + b`` is precomputed.

    Letting the caller batch the input projection of a whole sequence into
    one matmul removes the dominant per-step cost when inputs are known up
    front (as for the listener).  Gradients with respect to ``x_proj`` are
    exact, so the producing matmul node recovers the w_ih/bias gradients.
    """
    B, H = h.shape if h.ndim == 2 else (None, None)
    if B is None or x_proj.shape != (B, 4 * H) or c.shape != (B, H) \
            or w_hh.shape != (4 * H, H):
        raise DimensionError(
            f"lstm_step_pre: x_proj{x_proj.shape} h{h.shape} c{c.shape} w_hh{w_hh.shape}")
    hd, cd = h.data, c.data
    z = x_proj.data + hd @ w_hh.data.T
    gi = _sigmoid(z[:, :H])
    gf = _sigmoid(z[:, H:2 * H])
    gg = np.tanh(z[:, 2 * H:3 * H])
    go = _sigmoid(z[:, 3 * H:])
    c2 = gf * cd + gi * gg
    tc2 = np.tanh(c2)
    h2 = go * tc2

    def backward(gs):
        gh2, gc2 = gs
        if gh2 is None:
            d_go = np.zeros_like(go)
            dc2 = gc2.copy()
        else:
            d_go = gh2 * tc2
            dc2 = gh2 * go * (1.0 - tc2 * tc2)
            if gc2 is not None:
                dc2 += gc2
        gc = dc2 * gf if c.requires_grad else None
        dz = np.empty_like(z)
        np.multiply(dc2 * gg, gi * (1.0 - gi), out=dz[:, :H])
        np.multiply(dc2 * cd, gf * (1.0 - gf), out=dz[:, H:2 * H])
        np.multiply(dc2 * gi, 1.0 - gg * gg, out=dz[:, 2 * H:3 * H])
        np.multiply(d_go, go * (1.0 - go), out=dz[:, 3 * H:])
        gh = dz @ w_hh.data if h.requires_grad else None
        if sink is not None:
            sink.steps.append((dz, hd))
            return (dz.copy() if x_proj.requires_grad else None, gh, gc, None)
        gwh = dz.T @ hd if w_hh.requires_grad else None
        return (dz.copy() if x_proj.requires_grad else None, gh, gc, gwh)

    return _apply_multi((x_proj, h, c, w_hh), (h2, c2), backward)


def conv2d_s2(x, k, b):
    """3x3 cross-correlation, stride 2, zero padding 1.

    Halves both spatial dimensions: ``x[B, Cin, H, W] -> [B, Cout, H/2, W/2]``.
    Padding 1 is fixed so that four stacked applications map 32x32 inputs
    onto 2x2 feature maps.
    """
    if x.ndim != 4 or k.ndim != 4 or b.ndim != 1:
        raise DimensionError(f"conv2d_s2: x{x.shape} k{k.shape} b{b.shape}")
    B, Cin, H, W = x.shape
    Cout, Cin_k, kh, kw = k.shape
    if (kh, kw) != (3, 3) or Cin_k != Cin or b.shape[0] != Cout:
        raise DimensionError(f"conv2d_s2: x{x.shape} k{k.shape} b{b.shape}")
    if H % 2 or W % 2:
        raise DimensionError(f"conv2d_s2 requires even spatial dims, got {H}x{W}")
    Ho, Wo = H // 2, W // 2

    xp = np.zeros((B, Cin, H + 2, W + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    win = win[:, :, ::2, ::2, :, :]  # [B, Cin, Ho, Wo, 3, 3]
    out = np.einsum("bchwij,ocij->bohw", win, k.data, optimize=True) + b.data[None, :, None, None]

    def backward(g):
        gk = (np.einsum("bohw,bchwij->ocij", g, win, optimize=True)
              if k.requires_grad else None)
        gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
        gx = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for di in range(3):
                for dj in range(3):
                    patch = np.einsum("bohw,oc->bchw", g, k.data[:, :, di, dj], optimize=True)
                    gxp[:, :, di:di + 2 * Ho:2, dj:dj + 2 * Wo:2] += patch
            gx = gxp[:, :, 1:-1, 1:-1]
        return (gx, gk, gb)

    return _apply((x, k, b), out, backward)


def batch_norm2d(x, gamma, beta, running_mean, running_var, mode,
                 eps=BATCHNORM_EPS, momentum=BATCHNORM_MOMENTUM):
    """Per-channel batch normalisation over (B, H, W).

    Train mode normalises with batch statistics and updates the running
    arrays in place (unbiased variance, momentum 0.1).  Eval mode applies
    the stored running statistics.
    """
    if x.ndim != 4:
        raise DimensionError(f"batch_norm2d expects [B, C, H, W], got {x.shape}")
    B, C, H, W = x.shape
    if gamma.shape != (C,) or beta.shape != (C,):
        raise DimensionError(f"batch_norm2d: gamma{gamma.shape} beta{beta.shape} for C={C}")
    xd = x.data

    if mode == "train":
        if B < 2:
            raise DegenerateBatchError("batch_norm2d train mode requires a batch of at least 2")
        n = B * H * W
        mean = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mean
        running_var *= (1.0 - momentum)
        running_var += momentum * var * (n / max(n - 1, 1))
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (xd - mean[None, :, None, None]) * inv_std[None, :, None, None]
        out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

        def backward(g):
            g_gamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
            g_beta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
            gx = None
            if x.requires_grad:
                dxhat = g * gamma.data[None, :, None, None]
                s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
                s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = (inv_std[None, :, None, None] / n) * (n * dxhat - s1 - xhat * s2)
            return (gx, g_gamma, g_beta)

        return _apply((x, gamma, beta), out, backward)

    if mode != "eval":
        raise ParameterError(f"batch_norm2d mode must be 'train' or 'eval', got {mode!r}")
    inv_std = 1.0 / np.sqrt(running_var + eps)
    xhat = (xd - running_mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward(g):
        g_gamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        g_beta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = g * (gamma.data * inv_std)[None, :, None, None] if x.requires_grad else None
        return (gx, g_gamma, g_beta)

    return _apply((x, gamma, beta), out, backward)


def cross_entropy_loss(scores, target_index):
    """Mean negative log of the target entry of each probability row.

    ``scores[B, K]`` rows must already be probability distributions; the
    probability is floored at 1e-12 before the log.
    """
    if scores.ndim != 2:
        raise DimensionError(f"cross_entropy_loss expects [B, K] scores, got {scores.shape}")
    targets = np.asarray(target_index)
    B, K = scores.shape
    if targets.shape != (B,):
        raise DimensionError(f"cross_entropy_loss: {B} rows but targets shape {targets.shape}")
    if targets.min() < 0 or targets.max() >= K:
        raise IndexError(f"target indices out of range [0, {K})")
    row_sums = scores.data.sum(axis=1)
    if np.abs(row_sums - 1.0).max() > 1e-6:
        raise ParameterError("cross_entropy_loss rows must sum to 1 within 1e-6")
    picked = scores.data[np.arange(B), targets]
    floored = np.maximum(picked, PROB_FLOOR)
    out = np.asarray(-np.log(floored).mean(), dtype=scores.dtype)

    def backward(g):
        gs = np.zeros_like(scores.data)
        live = picked > PROB_FLOOR
        gs[np.arange(B), targets] = np.where(live, -1.0 / floored, 0.0) * (g.reshape(()) / B)
        return (gs,)

    return _apply((scores,), out, backward)


def dot_scores(h, cands):
    """Batched dot products ``h[B, D] x cands[B, K, D] -> [B, K]``."""
    if h.ndim != 2 or cands.ndim != 3 or h.shape[0] != cands.shape[0] \
            or h.shape[1] != cands.shape[2]:
        raise DimensionError(f"dot_scores: h{h.shape} cands{cands.shape}")
    hd, cd = h.data, cands.data
    out = np.einsum("bd,bkd->bk", hd, cd, optimize=True)

    def backward(g):
        gh = np.einsum("bk,bkd->bd", g, cd, optimize=True) if h.requires_grad else None
        gc = np.einsum("bk,bd->bkd", g, hd, optimize=True) if cands.requires_grad else None
        return (gh, gc)

    return _apply((h, cands), out, backward)
