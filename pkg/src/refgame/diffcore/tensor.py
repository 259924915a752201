"""Minimal reverse-mode differentiable tensor core.

Only the primitives the referential-game agents need are provided.  Every
primitive records onto an explicit gradient :class:`Tape`; replaying the
tape in reverse recording order yields gradients for every reachable
``requires_grad`` leaf.  Recording order is always a valid topological
order because a primitive can only consume tensors that already exist.

Forward evaluation outside any tape context builds no graph and is safe
to share read-only across threads.  A (tensor, tape) pair is single
threaded during recording and backward.
"""

from __future__ import annotations

import numpy as np

LEAKY_SLOPE = 0.01


class DimensionError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class ParameterError(ValueError):
    """A scalar argument is outside its legal range."""


class StateError(RuntimeError):
    """Operation applied to an object in the wrong lifecycle state."""


class ContractError(TypeError):
    """A callable argument violates its contract."""


class DegenerateBatchError(ValueError):
    """Batch too small for the requested statistic."""


_DEBUG_CHECKS = False


def set_debug_checks(enabled):
    """Toggle NaN/Inf assertions on every primitive's forward output."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


class Tensor:
    """Shape-carrying real array, optionally tracked for gradients.

    ``grad`` is populated by :meth:`Tape.backward` for leaf tensors with
    ``requires_grad`` and always matches ``data`` in shape.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(()))

    def detach(self):
        """Same data, severed from any graph."""
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __neg__(self):
        return neg(self)


def _as_tensor(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


# ---------------------------------------------------------------------------
# Tape


_TAPE_STACK = []


class Tape:
    """Ordered record of primitive applications for one backward pass.

    Use as a context manager around the forward computation, then call
    :meth:`backward` exactly once on the scalar loss.
    """

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss):
        """Replay the tape in reverse, accumulating gradients.

        Leaf tensors (anything not produced under this tape) with
        ``requires_grad`` receive their gradient in ``.grad``,
        accumulating into any gradient already present.
        """
        if self._consumed:
            raise StateError("tape already consumed by a backward pass")
        self._consumed = True
        if loss.data.size != 1:
            raise DimensionError(f"backward requires a scalar loss, got shape {loss.shape}")

        grads = {id(loss): np.ones_like(loss.data)}
        holders = {id(loss): loss}
        produced = set()
        for _, outputs, _ in self._nodes:
            for out in outputs:
                produced.add(id(out))

        for inputs, outputs, backward in reversed(self._nodes):
            if len(outputs) == 1:
                og = grads.pop(id(outputs[0]), None)
                if og is None:
                    continue
                in_grads = backward(og)
            else:
                # Unused outputs of a multi-output primitive pass None.
                out_grads = [grads.pop(id(o), None) for o in outputs]
                if all(g is None for g in out_grads):
                    continue
                in_grads = backward(out_grads)
            if not isinstance(in_grads, tuple):
                in_grads = (in_grads,)
            for t, g in zip(inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                key = id(t)
                acc = grads.get(key)
                if acc is None:
                    grads[key] = g
                    holders[key] = t
                else:
                    # Closures hand out fresh arrays, so in-place is safe.
                    acc += g

        for key, g in grads.items():
            t = holders[key]
            if key in produced or not t.requires_grad:
                continue
            # Backward rules hand out fresh arrays, so no defensive copy.
            if t.grad is None:
                t.grad = g
            else:
                t.grad = t.grad + g


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _apply(inputs, out_data, backward):
    """Wrap a forward result, recording the node if a tape is active."""
    if _DEBUG_CHECKS and not np.isfinite(out_data).all():
        raise FloatingPointError("non-finite value produced by a forward primitive")
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        tape._nodes.append((tuple(inputs), (out,), backward))
    return out


def _apply_multi(inputs, out_datas, backward):
    """Like :func:`_apply` for primitives with several outputs."""
    if _DEBUG_CHECKS:
        for d in out_datas:
            if not np.isfinite(d).all():
                raise FloatingPointError("non-finite value produced by a forward primitive")
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    outs = tuple(Tensor(d, requires_grad=track) for d in out_datas)
    if track:
        tape._nodes.append((tuple(inputs), outs, backward))
    return outs


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and structural primitives


def add(a, b):
    out = a.data + b.data

    def backward(g):
        return (_unbroadcast(g, a.data.shape) if a.requires_grad else None,
                _unbroadcast(g, b.data.shape) if b.requires_grad else None)

    return _apply((a, b), out, backward)


def sub(a, b):
    out = a.data - b.data

    def backward(g):
        return (_unbroadcast(g, a.data.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.data.shape) if b.requires_grad else None)

    return _apply((a, b), out, backward)


def mul(a, b):
    ad, bd = a.data, b.data
    out = ad * bd

    def backward(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return _apply((a, b), out, backward)


def neg(a):
    def backward(g):
        return (-g,)

    return _apply((a,), -a.data, backward)


def sum_all(a):
    """Sum every element into a () scalar."""
    def backward(g):
        return (np.full_like(a.data, g.reshape(())),)

    return _apply((a,), np.asarray(a.data.sum(), dtype=a.dtype), backward)


def mean_all(a):
    n = a.data.size

    def backward(g):
        return (np.full_like(a.data, g.reshape(()) / n),)

    return _apply((a,), np.asarray(a.data.mean(), dtype=a.dtype), backward)


def reshape(a, shape):
    old = a.data.shape

    def backward(g):
        return (g.reshape(old),)

    return _apply((a,), a.data.reshape(shape), backward)


def pad_cols(a, n_extra):
    """Append ``n_extra`` zero columns to a 2-d tensor."""
    if a.ndim != 2:
        raise DimensionError(f"pad_cols expects a 2-d tensor, got shape {a.shape}")
    ncols = a.shape[1]
    out = np.zeros((a.shape[0], ncols + n_extra), dtype=a.dtype)
    out[:, :ncols] = a.data

    def backward(g):
        return (g[:, :ncols],)

    return _apply((a,), out, backward)


def concat_rows(tensors):
    """Stack 2-d tensors along axis 0."""
    datas = [t.data for t in tensors]
    sizes = [d.shape[0] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=0)
        return tuple(p if t.requires_grad else None for t, p in zip(tensors, pieces))

    return _apply(tuple(tensors), np.concatenate(datas, axis=0), backward)


def slice_rows(x, start, stop):
    """Rows ``start:stop`` of a 2-d tensor."""
    shape = x.data.shape

    def backward(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[start:stop] = g
        return (out,)

    return _apply((x,), x.data[start:stop], backward)


def div_rows(x, t):
    """Divide each row of ``x[B, V]`` by the matching scalar in ``t[B]``."""
    if x.ndim != 2 or t.ndim != 1 or x.shape[0] != t.shape[0]:
        raise DimensionError(f"div_rows: x{x.shape} vs t{t.shape}")
    td = t.data[:, None]
    out = x.data / td

    def backward(g):
        gx = g / td if x.requires_grad else None
        gt = -(g * x.data).sum(axis=1) / (t.data * t.data) if t.requires_grad else None
        return (gx, gt)

    return _apply((x, t), out, backward)


def softplus(x):
    """log(1 + exp(x)) computed without overflow."""
    xd = x.data
    out = np.log1p(np.exp(-np.abs(xd))) + np.maximum(xd, 0)

    def backward(g):
        return (g / (1.0 + np.exp(-xd)),)

    return _apply((x,), out, backward)


def reciprocal_shift(x, shift):
    """1 / (shift + x); ``shift`` is a plain positive constant."""
    denom = shift + x.data
    out = 1.0 / denom

    def backward(g):
        return (-g / (denom * denom),)

    return _apply((x,), out, backward)
