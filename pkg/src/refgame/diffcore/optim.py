"""Trainable parameters and the Adam update."""

from __future__ import annotations

import numpy as np

from .tensor import StateError, Tensor

ADAM_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

try:  # single-pass fused kernel; the numpy path below is the reference
    import numba

    @numba.njit(cache=True, fastmath=True)
    def _adam_kernel(p, m, v, g, lr, beta1, beta2, eps, bc1, bc2):
        scale = lr / bc1
        inv_bc2 = 1.0 / bc2
        for i in range(p.size):
            gi = g[i]
            mi = beta1 * m[i] + (1.0 - beta1) * gi
            vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
            m[i] = mi
            v[i] = vi
            p[i] -= scale * mi / (np.sqrt(vi * inv_bc2) + eps)

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is normally available
    _HAVE_NUMBA = False


class Parameter(Tensor):
    """Tensor with ``requires_grad`` plus Adam moment buffers."""

    __slots__ = ("m", "v", "step_count")

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step_count = 0


def adam_step(params, lr=ADAM_LR, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """Apply one bias-corrected Adam update and clear gradients.

    Every parameter must carry a gradient from a completed backward pass.
    """
    for p in params:
        if p.grad is None:
            raise StateError("adam_step before any gradient was populated")
    for p in params:
        g = np.ascontiguousarray(p.grad, dtype=p.dtype)
        p.step_count += 1
        bc1 = 1.0 - beta1 ** p.step_count
        bc2 = 1.0 - beta2 ** p.step_count
        if _HAVE_NUMBA:
            _adam_kernel(p.data.reshape(-1), p.m.reshape(-1), p.v.reshape(-1),
                         g.reshape(-1), lr, beta1, beta2, eps, bc1, bc2)
        else:
            p.m *= beta1
            p.m += (1.0 - beta1) * g
            g *= g
            g *= 1.0 - beta2
            p.v *= beta2
            p.v += g
            denom = p.v / bc2
            np.sqrt(denom, out=denom)
            denom += eps
            update = p.m / denom
            update *= lr / bc1
            p.data -= update
        p.grad = None
