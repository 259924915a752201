"""Straight-through Gumbel-Softmax communication channel.

The speaker samples a relaxed categorical symbol, discretises it to a
one-hot in the forward pass and lets gradients flow through the relaxed
sample in the backward pass.  The relaxation temperature is produced per
symbol position by a learned one-layer head on the decoder hidden state:
``tau(h) = 1 / (tau0 + softplus(alpha(h)))``, which keeps temperatures
inside ``(0, 1/tau0]`` for any finite hidden state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import ParameterError, Tensor
from .diffcore.tensor import _apply

TAU0_DEFAULT = 0.2
UNIFORM_CLAMP = 1e-20
UNIFORM_CLAMP_HIGH = 1e-16


def gumbel_noise(shape, rng, dtype=np.float64):
    """I.i.d. standard Gumbel samples ``g = -log(-log u)`` as a constant tensor.

    Uniform draws are clamped away from {0, 1} before the double log so
    the result is always finite.  The upper clamp sits at ``1 - 1e-16``
    because anything closer is indistinguishable from 1 in float64.
    """
    u = rng.random(shape)
    u = np.clip(u, UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP_HIGH)
    return Tensor((-np.log(-np.log(u))).astype(dtype))


def gumbel_softmax_relax(logits, tau, rng=None, noise=None):
    """Relaxed categorical sample ``softmax((logits + g) / tau)``.

    ``logits`` are log-probabilities up to an additive constant, which the
    softmax cancels.  The result is differentiable with respect to both
    ``logits`` and the per-row temperatures ``tau[B]``.  Pass ``noise`` to
    reuse pre-drawn Gumbel noise instead of sampling from ``rng``.
    """
    if tau.ndim != 1:
        raise ParameterError(f"tau must be a [B] vector, got shape {tau.shape}")
    if np.any(tau.data <= 0):
        raise ParameterError("temperatures must be strictly positive")
    if noise is None:
        if rng is None:
            raise ParameterError("gumbel_softmax_relax needs either rng or noise")
        noise = gumbel_noise(logits.shape, rng, dtype=logits.dtype)
    perturbed = dc.add(dc.log_softmax(logits), noise)
    return dc.softmax(dc.div_rows(perturbed, tau))


def straight_through_discretize(soft):
    """One-hot at the row argmax; gradients pass through unchanged.

    The forward value is exactly one-hot (ties broken toward the lowest
    index); the recorded backward rule is the identity, i.e. downstream
    gradients reach the logits as if the relaxed sample had been used.
    This is the biased straight-through estimator.
    """
    idx = np.argmax(soft.data, axis=1)
    hard = np.zeros_like(soft.data)
    hard[np.arange(soft.shape[0]), idx] = 1.0

    def backward(g):
        return (g,)

    return _apply((soft,), hard, backward)


@dataclass
class TemperatureHead:
    """Single affine map from hidden state to the temperature pre-activation."""

    w: dc.Parameter
    b: dc.Parameter
    tau0: float = TAU0_DEFAULT

    @classmethod
    def create(cls, hidden_dim, rng, tau0=TAU0_DEFAULT, dtype=np.float64):
        bound = 1.0 / np.sqrt(hidden_dim)
        w = dc.Parameter(rng.uniform(-bound, bound, size=(1, hidden_dim)), dtype=dtype)
        b = dc.Parameter(np.zeros(1), dtype=dtype)
        return cls(w=w, b=b, tau0=tau0)

    def parameters(self):
        return {"w": self.w, "b": self.b}


def learned_temperature(h, head):
    """Per-item temperature ``1 / (tau0 + softplus(alpha(h)))`` as a [B] vector."""
    pre = dc.linear(h, head.w, head.b)
    tau = dc.reciprocal_shift(dc.softplus(pre), head.tau0)
    return dc.reshape(tau, (h.shape[0],))


@dataclass
class RelaxedSymbol:
    """One channel sample: relaxed probabilities, one-hot, temperature."""

    soft: Tensor
    hard: Tensor
    temperature: Tensor

    def validate(self, atol=1e-9):
        soft = self.soft.data
        hard = self.hard.data
        if np.abs(soft.sum(axis=1) - 1.0).max() > atol:
            raise AssertionError("soft rows must sum to 1")
        if not np.array_equal(hard, np.eye(soft.shape[1])[np.argmax(soft, axis=1)]):
            raise AssertionError("hard rows must be one-hot at the soft argmax")
        if np.any(self.temperature.data <= 0):
            raise AssertionError("temperature must be positive")


def sample_symbol(logits, tau, rng=None, noise=None):
    """Draw one relaxed symbol and its straight-through discretisation."""
    soft = gumbel_softmax_relax(logits, tau, rng=rng, noise=noise)
    return RelaxedSymbol(soft=soft, hard=straight_through_discretize(soft), temperature=tau)
