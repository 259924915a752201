"""Finite-difference gradient oracle.

Compares tape gradients against central finite differences.  The checked
function must be deterministic across calls: anything stochastic inside
it (channel noise, dropout masks) has to be frozen, e.g. by recreating an
identically seeded generator on every evaluation.  Dropout in train mode
without a frozen generator makes the check meaningless and is on the
caller to avoid.
"""

from __future__ import annotations

import numpy as np

from .tensor import ContractError, Tape, Tensor


def grad_check(f, point, step=1e-5):
    """Max relative error between tape and finite-difference gradients.

    ``point`` is a Tensor or a sequence of Tensors with ``requires_grad``;
    ``f`` is called as ``f(*point)`` and must return a scalar Tensor.  The
    relative error is the largest coordinate-wise discrepancy normalised
    by the overall gradient magnitude.
    """
    tensors = [point] if isinstance(point, Tensor) else list(point)
    for t in tensors:
        if not t.requires_grad:
            raise ContractError("grad_check points must have requires_grad set")
        t.grad = None

    with Tape() as tape:
        out = f(*tensors)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ContractError("grad_check requires a scalar-valued function")
    tape.backward(out)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]
    for t in tensors:
        t.grad = None

    numeric = [np.zeros_like(t.data) for t in tensors]
    for t, num in zip(tensors, numeric):
        flat = t.data.reshape(-1)
        num_flat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = f(*tensors).item()
            flat[i] = orig - step
            f_minus = f(*tensors).item()
            flat[i] = orig
            num_flat[i] = (f_plus - f_minus) / (2.0 * step)

    scale = max(max(np.abs(a).max() for a in analytic),
                max(np.abs(n).max() for n in numeric), 1e-12)
    worst = max(np.abs(a - n).max() for a, n in zip(analytic, numeric))
    return float(worst / scale)
