"""Reverse-mode differentiable computation core."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .nn import (
    LstmGradSink,
    lstm_step_pre,
    lstm_unroll,
    lstm_unroll_pre,
    BATCHNORM_EPS,
    BATCHNORM_MOMENTUM,
    LEAKY_SLOPE,
    PROB_FLOOR,
    batch_norm2d,
    conv2d_s2,
    cross_entropy_loss,
    dot_scores,
    dropout,
    leaky_relu,
    linear,
    log_softmax,
    lstm_step,
    softmax,
)
from .optim import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, ADAM_LR, Parameter, adam_step
from .rng import GENERATOR_NAME, make_rng
from .tensor import (
    ContractError,
    DegenerateBatchError,
    DimensionError,
    ParameterError,
    StateError,
    Tape,
    Tensor,
    add,
    concat_rows,
    div_rows,
    mean_all,
    mul,
    neg,
    pad_cols,
    reciprocal_shift,
    reshape,
    set_debug_checks,
    slice_rows,
    softplus,
    sub,
    sum_all,
)

__all__ = [
    "ADAM_BETA1",
    "ADAM_BETA2",
    "ADAM_EPS",
    "ADAM_LR",
    "BATCHNORM_EPS",
    "BATCHNORM_MOMENTUM",
    "GENERATOR_NAME",
    "LEAKY_SLOPE",
    "PROB_FLOOR",
    "CheckpointError",
    "ContractError",
    "DegenerateBatchError",
    "DimensionError",
    "ParameterError",
    "Parameter",
    "LstmGradSink",
    "StateError",
    "Tape",
    "Tensor",
    "adam_step",
    "add",
    "batch_norm2d",
    "conv2d_s2",
    "concat_rows",
    "cross_entropy_loss",
    "div_rows",
    "dot_scores",
    "dropout",
    "grad_check",
    "leaky_relu",
    "linear",
    "load_checkpoint",
    "log_softmax",
    "lstm_step",
    "lstm_step_pre",
    "lstm_unroll",
    "lstm_unroll_pre",
    "make_rng",
    "mean_all",
    "mul",
    "neg",
    "pad_cols",
    "reciprocal_shift",
    "reshape",
    "save_checkpoint",
    "set_debug_checks",
    "slice_rows",
    "softmax",
    "softplus",
    "sub",
    "sum_all",
]
