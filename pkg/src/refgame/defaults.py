"""Registry of every default the implementation fixes by choice.

Anything listed here is a knob the experiments depend on but that is not
forced by the game definition itself.  Run manifests echo the whole
registry so results stay auditable; a test diff-checks manifests against
this dict.
"""

from __future__ import annotations

from . import agents, channel, game, metrics, stats, stimuli
from .diffcore import nn, rng

LEDGERED_DEFAULTS = {
    "diffcore.conv_padding": 1,
    "diffcore.leaky_relu_slope": nn.LEAKY_SLOPE,
    "diffcore.batchnorm_eps": nn.BATCHNORM_EPS,
    "diffcore.batchnorm_momentum": nn.BATCHNORM_MOMENTUM,
    "diffcore.prob_floor": nn.PROB_FLOOR,
    "diffcore.optimizer": "adam",
    "diffcore.adam_lr": game.ADAM_LR,
    "diffcore.adam_beta1": game.ADAM_BETAS[0],
    "diffcore.adam_beta2": game.ADAM_BETAS[1],
    "diffcore.adam_eps": game.ADAM_EPS,
    "diffcore.rng": rng.GENERATOR_NAME,
    "diffcore.train_precision": "float32",
    "diffcore.oracle_precision": "float64",
    "channel.tau0": channel.TAU0_DEFAULT,
    "channel.uniform_clamp": channel.UNIFORM_CLAMP,
    "channel.argmax_tiebreak": "lowest-index",
    "agents.hidden_dim": agents.HIDDEN_DIM,
    "agents.eos_index": agents.EOS_INDEX,
    "agents.sos_convention": "extra-input-slot",
    "agents.embed_dropout_p": agents.EMBED_DROPOUT_P,
    "agents.forget_gate_bias": agents.FORGET_GATE_BIAS,
    "agents.weight_init": "fan-in-uniform",
    "agents.conv_channels": "32,32,64,64",
    "stimuli.interpolation_phase": "odd-positions",
    "stimuli.center_px_range": f"{stimuli.CENTER_MIN_PX},{stimuli.CENTER_MAX_PX}",
    "stimuli.halfwidth_px_range": f"{stimuli.HALFWIDTH_MIN_PX},{stimuli.HALFWIDTH_MAX_PX}",
    "stimuli.default_halfwidth_px": stimuli.DEFAULT_HALFWIDTH_PX,
    "stimuli.supersample": stimuli.SUPERSAMPLE,
    "game.loss": "target-nll",
    "game.k_train": game.K_TRAIN,
    "game.k_test": game.K_TEST,
    "game.sample_budget": game.SAMPLE_BUDGET,
    "game.eval_rounds": game.EVAL_ROUNDS,
    "game.distractor_fill": "other-split",
    "game.divergence_policy": "abort-and-record",
    "metrics.meaning_distance": "hamming",
    "metrics.message_distance": "levenshtein",
    "metrics.correlation": "spearman",
    "metrics.max_pairwise_items": metrics.MAX_PAIRWISE_ITEMS,
    "stats.two_sided_exact_max_n": stats.EXACT_TWO_SIDED_MAX_N,
    "stats.one_sided_pvalue": "exp(-2*D^2*nm/(n+m))",
}
