"""Speaker and listener agents.

Both agents pair a stimulus encoder (a four-layer strided CNN for visual
input, a single 256-unit affine + leaky ReLU for symbolic input) with a
one-layer LSTM language module of matching width.  The speaker decodes a
message autoregressively through the straight-through Gumbel-Softmax
channel; the listener embeds the message symbols (with heavy dropout),
consumes them from a zero initial state and scores candidate stimuli by
dot product with its own encoding of each.

The agents never share parameters.  Messages are discrete one-hots in
both train and eval mode; the relaxed (soft) message path exists only for
gradient verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel
from .diffcore import (
    DimensionError,
    Parameter,
    ParameterError,
    Tensor,
    batch_norm2d,
    concat_rows,
    conv2d_s2,
    dot_scores,
    dropout,
    leaky_relu,
    linear,
    lstm_step,
    lstm_step_pre,
    lstm_unroll_pre,
    lstm_unroll,
    pad_cols,
    reshape,
    slice_rows,
    softmax,
)

HIDDEN_DIM = 256
EOS_INDEX = 0
EMBED_DROPOUT_P = 0.8
FORGET_GATE_BIAS = 1.0
CONV_CHANNELS = (32, 32, 64, 64)


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _affine_params(rng, out_dim, in_dim, dtype):
    w = Parameter(_uniform(rng, (out_dim, in_dim), in_dim, dtype))
    b = Parameter(_uniform(rng, (out_dim,), in_dim, dtype))
    return w, b


class SymbolicEncoder:
    """256-unit affine + leaky ReLU over one-hot attribute concatenations."""

    def __init__(self, input_dim, rng, hidden_dim=HIDDEN_DIM, dtype=np.float64):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w, self.b = _affine_params(rng, hidden_dim, input_dim, dtype)

    def encode(self, x, mode="train"):
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(f"symbolic encoder expects [B, {self.input_dim}], got {x.shape}")
        return leaky_relu(linear(x, self.w, self.b))

    def parameters(self):
        return {"w": self.w, "b": self.b}

    def buffers(self):
        return {}


class VisualEncoder:
    """Four 3x3 stride-2 conv layers with batch norm and leaky ReLU.

    32x32 inputs shrink to 64x2x2 feature maps, flattened to 256.
    """

    def __init__(self, rng, dtype=np.float64, in_channels=1):
        self.hidden_dim = HIDDEN_DIM
        self.dtype = dtype
        self.layers = []
        cin = in_channels
        for cout in CONV_CHANNELS:
            k = Parameter(_uniform(rng, (cout, cin, 3, 3), cin * 9, dtype))
            kb = Parameter(_uniform(rng, (cout,), cin * 9, dtype))
            gamma = Parameter(np.ones(cout), dtype=dtype)
            beta = Parameter(np.zeros(cout), dtype=dtype)
            self.layers.append({
                "k": k, "kb": kb, "gamma": gamma, "beta": beta,
                "running_mean": np.zeros(cout, dtype=np.float64),
                "running_var": np.ones(cout, dtype=np.float64),
            })
            cin = cout

    def encode(self, x, mode="train"):
        if x.ndim != 4 or x.shape[2:] != (32, 32):
            raise DimensionError(f"visual encoder expects [B, C, 32, 32], got {x.shape}")
        h = x
        for layer in self.layers:
            h = conv2d_s2(h, layer["k"], layer["kb"])
            h = batch_norm2d(h, layer["gamma"], layer["beta"],
                             layer["running_mean"], layer["running_var"], mode)
            h = leaky_relu(h)
        return reshape(h, (x.shape[0], self.hidden_dim))

    def parameters(self):
        out = {}
        for i, layer in enumerate(self.layers, start=1):
            for key in ("k", "kb", "gamma", "beta"):
                out[f"conv{i}.{key}"] = layer[key]
        return out

    def buffers(self):
        out = {}
        for i, layer in enumerate(self.layers, start=1):
            out[f"conv{i}.running_mean"] = layer["running_mean"]
            out[f"conv{i}.running_var"] = layer["running_var"]
        return out


def make_encoder(stimulus_kind, rng, symbolic_dim=None, hidden_dim=HIDDEN_DIM,
                 dtype=np.float64):
    if stimulus_kind == "symbolic":
        if symbolic_dim is None:
            raise ParameterError("symbolic encoder needs the input dimension")
        return SymbolicEncoder(symbolic_dim, rng, hidden_dim=hidden_dim, dtype=dtype)
    if stimulus_kind == "visual":
        if hidden_dim != HIDDEN_DIM:
            raise ParameterError("the visual encoder is fixed to a 256-wide output")
        return VisualEncoder(rng, dtype=dtype)
    raise ParameterError(f"stimulus kind must be 'symbolic' or 'visual', got {stimulus_kind!r}")


def encode_stimulus(stimulus, encoder, mode="train"):
    """Encode a stimulus batch to [B, hidden] with either encoder kind."""
    return encoder.encode(stimulus, mode=mode)


def _lstm_params(rng, input_dim, hidden_dim, dtype):
    w_ih = Parameter(_uniform(rng, (4 * hidden_dim, input_dim), input_dim, dtype))
    w_hh = Parameter(_uniform(rng, (4 * hidden_dim, hidden_dim), hidden_dim, dtype))
    b = _uniform(rng, (4 * hidden_dim,), hidden_dim, dtype)
    b[hidden_dim:2 * hidden_dim] += FORGET_GATE_BIAS
    return w_ih, w_hh, Parameter(b)


@dataclass
class Message:
    """A batch of channel outputs.

    ``symbols`` holds the L per-position [B, V] tensors actually fed to
    the listener (one-hot in normal operation, relaxed in the gradient
    verification path).  ``indices`` are the discrete symbol choices and
    ``effective_length`` counts symbols up to and including the first
    end-of-sentence symbol (index 0), or L when there is none.
    """

    symbols: list
    indices: np.ndarray
    temperatures: np.ndarray
    relaxed: bool = False
    effective_length: np.ndarray = field(init=False)

    def __post_init__(self):
        B, L = self.indices.shape
        eff = np.full(B, L, dtype=int)
        for b in range(B):
            hits = np.flatnonzero(self.indices[b] == EOS_INDEX)
            if hits.size:
                eff[b] = hits[0] + 1
        self.effective_length = eff

    @property
    def max_length(self):
        return self.indices.shape[1]

    @property
    def vocab_size(self):
        return self.symbols[0].shape[1]

    def truncated(self):
        """Per-item symbol index tuples cut at the first EoS, EoS excluded."""
        out = []
        for b in range(self.indices.shape[0]):
            n = self.effective_length[b]
            seq = self.indices[b, :n]
            if seq.size and seq[-1] == EOS_INDEX:
                seq = seq[:-1]
            out.append(tuple(int(s) for s in seq))
        return out

    def as_array(self):
        """Stacked [B, L, V] array of the forwarded symbol rows."""
        return np.stack([s.data for s in self.symbols], axis=1)


class Speaker:
    """Observes the target stimulus and emits a fixed-unroll message.

    The decoder LSTM input has one slot more than the vocabulary: emitted
    one-hots occupy the first V slots while the extra slot carries the
    fixed start-of-sentence prompt, so all V symbols stay emittable.
    """

    def __init__(self, encoder, vocab_size, rng, hidden_dim=HIDDEN_DIM,
                 tau0=channel.TAU0_DEFAULT, dtype=np.float64):
        if vocab_size < 2:
            raise ParameterError(f"vocab size must be >= 2, got {vocab_size}")
        self.encoder = encoder
        self.vocab_size = vocab_size
        self.hidden_dim = hidden_dim
        self.dtype = dtype
        self.w_ih, self.w_hh, self.b = _lstm_params(rng, vocab_size + 1, hidden_dim, dtype)
        self.proj_w, self.proj_b = _affine_params(rng, vocab_size, hidden_dim, dtype)
        self.temperature_head = channel.TemperatureHead.create(hidden_dim, rng, tau0=tau0, dtype=dtype)

    def speak(self, stimuli, max_length, rng, mode="train", relaxed=False):
        """Autoregressively emit ``max_length`` symbols for a stimulus batch.

        The initial hidden state is the encoded target and the initial
        input is the start-of-sentence one-hot.  All positions are
        emitted; the effective length is derived from the first EoS.
        With ``relaxed=True`` the soft samples are forwarded instead of
        the one-hots (gradient verification only).
        """
        if max_length < 1:
            raise ParameterError("max_length must be >= 1")
        B = stimuli.shape[0]
        h = self.encoder.encode(stimuli, mode=mode)
        c = Tensor(np.zeros((B, self.hidden_dim), dtype=self.dtype))
        h, c, sink = lstm_unroll(h, c, self.w_ih, self.w_hh, self.b)
        sos = np.zeros((B, self.vocab_size + 1), dtype=self.dtype)
        sos[:, self.vocab_size] = 1.0
        x = Tensor(sos)

        symbols = []
        indices = np.empty((B, max_length), dtype=int)
        temperatures = np.empty((B, max_length))
        for i in range(max_length):
            h, c = lstm_step(x, h, c, self.w_ih, self.w_hh, self.b, sink=sink)
            logits = linear(h, self.proj_w, self.proj_b)
            tau = channel.learned_temperature(h, self.temperature_head)
            soft = channel.gumbel_softmax_relax(logits, tau, rng=rng)
            out = soft if relaxed else channel.straight_through_discretize(soft)
            symbols.append(out)
            indices[:, i] = np.argmax(soft.data, axis=1)
            temperatures[:, i] = tau.data
            x = pad_cols(out, 1)
        return Message(symbols=symbols, indices=indices, temperatures=temperatures,
                       relaxed=relaxed)

    def parameters(self):
        out = {f"encoder.{k}": v for k, v in self.encoder.parameters().items()}
        out.update({"lstm.w_ih": self.w_ih, "lstm.w_hh": self.w_hh, "lstm.b": self.b,
                    "proj.w": self.proj_w, "proj.b": self.proj_b})
        out.update({f"temperature.{k}": v for k, v in self.temperature_head.parameters().items()})
        return out

    def buffers(self):
        return {f"encoder.{k}": v for k, v in self.encoder.buffers().items()}


class Listener:
    """Consumes a message and scores candidate stimuli.

    Symbols are embedded by an affine map followed by dropout (train mode
    only), the LSTM starts from the null state, and the final hidden
    state is dotted with the listener's encoding of every candidate.
    """

    def __init__(self, encoder, vocab_size, rng, hidden_dim=HIDDEN_DIM,
                 dropout_p=EMBED_DROPOUT_P, dtype=np.float64):
        if vocab_size < 2:
            raise ParameterError(f"vocab size must be >= 2, got {vocab_size}")
        self.encoder = encoder
        self.vocab_size = vocab_size
        self.hidden_dim = hidden_dim
        self.dropout_p = dropout_p
        self.dtype = dtype
        self.embed_w, self.embed_b = _affine_params(rng, hidden_dim, vocab_size, dtype)
        self.w_ih, self.w_hh, self.b = _lstm_params(rng, hidden_dim, hidden_dim, dtype)

    def listen_and_score(self, message, candidates, rng, mode="train"):
        """Probability rows over the K+1 candidates of each batch item.

        ``candidates`` is a [B, K+1, ...] stimulus tensor; exactly one
        entry per row is the target, at a position only the game knows.
        """
        if candidates.shape[1] < 2:
            raise ParameterError("need at least 2 candidates (one target, one distractor)")
        B = candidates.shape[0]
        # One embedding matmul, one dropout mask and one input projection
        # for all L positions; only the recurrence runs step-wise.
        stacked = concat_rows(message.symbols)
        emb_all = dropout(linear(stacked, self.embed_w, self.embed_b),
                          self.dropout_p, mode, rng)
        proj_all = linear(emb_all, self.w_ih, self.b)
        h = Tensor(np.zeros((B, self.hidden_dim), dtype=self.dtype))
        c = Tensor(np.zeros((B, self.hidden_dim), dtype=self.dtype))
        h, c, sink = lstm_unroll_pre(h, c, self.w_hh)
        for i in range(len(message.symbols)):
            xp = slice_rows(proj_all, i * B, (i + 1) * B)
            h, c = lstm_step_pre(xp, h, c, self.w_hh, sink=sink)

        k1 = candidates.shape[1]
        flat = reshape(candidates, (B * k1,) + candidates.shape[2:])
        enc = self.encoder.encode(flat, mode=mode)
        enc = reshape(enc, (B, k1, self.hidden_dim))
        return softmax(dot_scores(h, enc))

    def parameters(self):
        out = {f"encoder.{k}": v for k, v in self.encoder.parameters().items()}
        out.update({"embed.w": self.embed_w, "embed.b": self.embed_b,
                    "lstm.w_ih": self.w_ih, "lstm.w_hh": self.w_hh, "lstm.b": self.b})
        return out

    def buffers(self):
        return {f"encoder.{k}": v for k, v in self.encoder.buffers().items()}
