"""The discriminative referential game: batches, loss, training, evaluation.

One round presents the speaker with a batch of target stimuli (the
speaker never sees the candidates: the game is partially observable);
the listener receives the resulting messages plus shuffled candidate
sets of K distractors and the target, and the shared loss is the
negative log likelihood of the target position under the listener's
score distribution.  One backward pass drives both agents, so each
receives gradient through the other's current weights.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import agents as agents_mod
from . import metrics, stimuli
from .channel import TAU0_DEFAULT
from .diffcore import (
    ParameterError,
    StateError,
    Tape,
    Tensor,
    adam_step,
    cross_entropy_loss,
    make_rng,
)
from .stats import UndefinedCorrelationError

K_TRAIN = 47
K_TEST = 63
SAMPLE_BUDGET = 480_000
EVAL_ROUNDS = 2000
# Training defaults; beta2 shorter than the textbook 0.999 because the
# desk-scale regime trains at batch 2, where the second moment must track
# very noisy gradients.
ADAM_LR = 1e-3
ADAM_BETAS = (0.9, 0.98)
ADAM_EPS = 1e-8
LOG_EVERY = 200

CHANNEL_PRESETS = ("complete", "overcomplete", "custom")


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; the run is aborted, not retried."""


@dataclass(frozen=True)
class GameConfig:
    """Fully specified run configuration.

    ``channel='complete'`` derives V=9 and L=n_attrs; ``'overcomplete'``
    derives V=100 and L=20; ``'custom'`` uses the explicit values.
    """

    n_attrs: int = 3
    strategy: str = "interpolation"
    stimulus: str = "symbolic"
    channel: str = "overcomplete"
    vocab_size: int = 0
    max_length: int = 0
    batch_size: int = 8
    seed: int = 0
    sample_budget: int = SAMPLE_BUDGET
    k_train: int = K_TRAIN
    k_test: int = K_TEST
    lr: float = ADAM_LR
    beta1: float = ADAM_BETAS[0]
    beta2: float = ADAM_BETAS[1]
    eps: float = ADAM_EPS
    tau0: float = TAU0_DEFAULT
    precision: str = "float32"
    eval_rounds: int = EVAL_ROUNDS
    log_every: int = LOG_EVERY

    def __post_init__(self):
        if self.n_attrs not in (2, 3, 4):
            raise ParameterError(f"n_attrs must be 2, 3 or 4, got {self.n_attrs}")
        if self.strategy not in stimuli.STRATEGIES:
            raise ParameterError(f"unknown strategy {self.strategy!r}")
        if self.stimulus not in ("symbolic", "visual"):
            raise ParameterError(f"unknown stimulus kind {self.stimulus!r}")
        if self.channel not in CHANNEL_PRESETS:
            raise ParameterError(f"unknown channel preset {self.channel!r}")
        if self.batch_size < 1:
            raise ParameterError("batch size must be >= 1")
        if self.sample_budget < 1:
            raise ParameterError("sample budget must be >= 1")
        if self.precision not in ("float32", "float64"):
            raise ParameterError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.channel == "complete":
            object.__setattr__(self, "vocab_size", 9)
            object.__setattr__(self, "max_length", self.n_attrs)
        elif self.channel == "overcomplete":
            object.__setattr__(self, "vocab_size", 100)
            object.__setattr__(self, "max_length", 20)
        elif self.vocab_size < 2 or self.max_length < 1:
            raise ParameterError("custom channel requires vocab_size >= 2 and max_length >= 1")

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    @property
    def steps(self):
        return self.sample_budget // self.batch_size

    def as_dict(self):
        out = {}
        for name in ("n_attrs", "strategy", "stimulus", "channel", "vocab_size",
                     "max_length", "batch_size", "seed", "sample_budget", "k_train",
                     "k_test", "lr", "beta1", "beta2", "eps", "tau0", "precision",
                     "eval_rounds", "log_every"):
            out[name] = getattr(self, name)
        return out


@dataclass
class RoundBatch:
    """Targets plus shuffled candidate sets; positions are game-private."""

    target_ids: np.ndarray
    candidate_ids: np.ndarray
    target_positions: np.ndarray


def sample_round(split_ids, batch_size, n_distractors, rng, fill_pool=None):
    """Draw a batch of targets and per-target shuffled candidate sets.

    Targets are uniform over ``split_ids``.  Distractors are drawn from
    the same split without replacement whenever it is large enough; when
    it is not, ``fill_pool`` (stimuli outside the split) tops the sets up,
    and only as a last resort are distractors drawn with replacement.
    """
    split_ids = np.asarray(split_ids)
    if split_ids.size == 0:
        raise StateError("cannot sample a round from an empty split")
    k1 = n_distractors + 1
    targets = split_ids[rng.integers(0, split_ids.size, size=batch_size)]
    candidates = np.empty((batch_size, k1), dtype=split_ids.dtype)
    for i, t in enumerate(targets):
        own = split_ids[split_ids != t]
        if own.size >= n_distractors:
            picked = own[rng.choice(own.size, size=n_distractors, replace=False)]
        else:
            extra = n_distractors - own.size
            if fill_pool is not None and fill_pool.size >= extra:
                fill = fill_pool[rng.choice(fill_pool.size, size=extra, replace=False)]
            elif own.size > 0:
                fill = own[rng.integers(0, own.size, size=extra)]
            else:
                raise StateError("split too small to form a candidate set")
            picked = np.concatenate([own, fill])
        row = np.concatenate([[t], picked])
        candidates[i] = row[rng.permutation(k1)]
    positions = np.argmax(candidates == targets[:, None], axis=1)
    return RoundBatch(target_ids=targets, candidate_ids=candidates,
                      target_positions=positions)


@dataclass
class TrainReport:
    """Everything a run produces besides the trained weights."""

    config: GameConfig
    losses: np.ndarray
    periodic_accuracy: list
    steps: int
    samples_seen: int
    coverage: float
    acc_train: float = float("nan")
    acc_test: float = float("nan")
    ts_train: float = float("nan")
    ts_test: float = float("nan")
    ts_undefined: bool = False
    wall_seconds: float = 0.0

    @property
    def acc_gap(self):
        return self.acc_test - self.acc_train

    @property
    def ts_gap(self):
        if self.ts_undefined:
            return float("nan")
        return self.ts_test - self.ts_train


class GameInstance:
    """A benchmark with its precomputed stimulus encodings and agents."""

    def __init__(self, config):
        self.config = config
        self.benchmark = stimuli.build_benchmark(config.n_attrs, config.strategy)
        spec = self.benchmark.spec
        all_meanings = self.benchmark.all_meanings
        if config.stimulus == "symbolic":
            enc = stimuli.encode_symbolic(all_meanings, spec)
        else:
            enc = stimuli.render_visual_batch(all_meanings, spec)
        self.encodings = enc.astype(config.dtype)
        self.meanings = all_meanings
        n_train = self.benchmark.train.shape[0]
        self.train_ids = np.arange(n_train)
        self.test_ids = np.arange(n_train, all_meanings.shape[0])

        init_rng = make_rng(config.seed, 0)
        dtype = config.dtype
        sym_dim = spec.symbolic_dim if config.stimulus == "symbolic" else None
        self.speaker = agents_mod.Speaker(
            agents_mod.make_encoder(config.stimulus, init_rng, symbolic_dim=sym_dim, dtype=dtype),
            config.vocab_size, init_rng, tau0=config.tau0, dtype=dtype)
        self.listener = agents_mod.Listener(
            agents_mod.make_encoder(config.stimulus, init_rng, symbolic_dim=sym_dim, dtype=dtype),
            config.vocab_size, init_rng, dtype=dtype)

    def stimulus_tensor(self, ids):
        return Tensor(self.encodings[ids])

    def parameters(self):
        params = []
        for prefix, agent in (("speaker", self.speaker), ("listener", self.listener)):
            for name, p in agent.parameters().items():
                params.append((f"{prefix}.{name}", p))
        return params


def play_and_loss(instance, round_batch, rng, mode="train", relaxed=False):
    """One game round: speak, listen, score.  Returns (loss, accuracy)."""
    cfg = instance.config
    targets = instance.stimulus_tensor(round_batch.target_ids)
    message = instance.speaker.speak(targets, cfg.max_length, rng, mode=mode, relaxed=relaxed)
    candidates = instance.stimulus_tensor(round_batch.candidate_ids)
    scores = instance.listener.listen_and_score(message, candidates, rng, mode=mode)
    loss = cross_entropy_loss(scores, round_batch.target_positions)
    predicted = np.argmax(scores.data, axis=1)
    acc = float((predicted == round_batch.target_positions).mean())
    return loss, acc


def evaluate(instance, split_ids, rng, n_distractors=K_TEST, n_rounds=EVAL_ROUNDS,
             batch_size=50):
    """Mean accuracy over ``n_rounds`` single-target eval games.

    Agents run in eval mode (dropout off, frozen normalisation
    statistics) but the channel forward is unchanged: messages stay
    discrete.  When the split cannot supply K distractors, the remaining
    candidates come from the rest of the meaning space.
    """
    split_ids = np.asarray(split_ids)
    all_ids = np.arange(instance.meanings.shape[0])
    fill_pool = np.setdiff1d(all_ids, split_ids)
    correct = 0
    done = 0
    while done < n_rounds:
        b = min(batch_size, n_rounds - done)
        rb = sample_round(split_ids, b, n_distractors, rng, fill_pool=fill_pool)
        _, acc = play_and_loss(instance, rb, rng, mode="eval")
        correct += acc * b
        done += b
    return correct / n_rounds


def language_sample(instance, split_ids, rng):
    """Speak once about every meaning in a split, EoS-truncated."""
    cfg = instance.config
    msgs = []
    for start in range(0, len(split_ids), 64):
        ids = split_ids[start:start + 64]
        message = instance.speaker.speak(
            instance.stimulus_tensor(ids), cfg.max_length, rng, mode="eval")
        msgs.extend(message.truncated())
    meanings = [tuple(int(v) for v in instance.meanings[i]) for i in split_ids]
    return metrics.LanguageSample(meanings=tuple(meanings), messages=tuple(msgs))


def split_toposim(instance, split_ids, rng):
    """Topographic similarity of the current language on a split.

    Returns (value, undefined_flag); a degenerate language reports
    ``(nan, True)`` rather than a fake zero.
    """
    sample = language_sample(instance, split_ids, rng)
    try:
        return metrics.topographic_similarity(sample, rng=rng), False
    except UndefinedCorrelationError:
        return float("nan"), True


def train(config, checkpoint_dir=None):
    """Run one full training under the sample budget; returns a TrainReport.

    The gradient-step count is ``sample_budget // batch_size``.  A
    non-finite loss aborts the run with a diagnostic (divergences are
    recorded, never silently restarted).  Identical (config, seed) runs
    produce identical reports apart from wall time.
    """
    t0 = time.perf_counter()
    instance = GameInstance(config)
    rng = make_rng(config.seed, 1)
    params = [p for _, p in instance.parameters()]
    steps = config.steps
    losses = np.empty(steps)
    periodic = []
    samples_seen = 0

    for step in range(steps):
        rb = sample_round(instance.train_ids, config.batch_size, config.k_train, rng)
        with Tape() as tape:
            loss, acc = play_and_loss(instance, rb, rng, mode="train")
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise DivergenceError(
                f"non-finite loss {loss_val} at step {step} "
                f"(seed={config.seed}, batch={config.batch_size})")
        tape.backward(loss)
        adam_step(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                  eps=config.eps)
        losses[step] = loss_val
        samples_seen += config.batch_size
        if step % config.log_every == 0 or step == steps - 1:
            periodic.append((step, acc))

    report = TrainReport(
        config=config, losses=losses, periodic_accuracy=periodic, steps=steps,
        samples_seen=samples_seen,
        coverage=config.batch_size / instance.train_ids.size)

    eval_rng = make_rng(config.seed, 2)
    report.acc_train = evaluate(instance, instance.train_ids, eval_rng,
                                n_distractors=config.k_test, n_rounds=config.eval_rounds)
    report.acc_test = evaluate(instance, instance.test_ids, eval_rng,
                               n_distractors=config.k_test, n_rounds=config.eval_rounds)
    ts_train, undef_train = split_toposim(instance, instance.train_ids, eval_rng)
    ts_test, undef_test = split_toposim(instance, instance.test_ids, eval_rng)
    report.ts_train = ts_train
    report.ts_test = ts_test
    report.ts_undefined = bool(undef_train or undef_test)
    report.wall_seconds = time.perf_counter() - t0

    if checkpoint_dir is not None:
        from .diffcore import save_checkpoint
        from pathlib import Path

        out = Path(checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, agent in (("speaker", instance.speaker), ("listener", instance.listener)):
            arrays = {k: np.asarray(p.data, dtype=np.float64)
                      for k, p in agent.parameters().items()}
            arrays.update({f"buffer.{k}": v for k, v in agent.buffers().items()})
            save_checkpoint(arrays, out / f"{name}.rgl")
    return report


def derive_config(base, **overrides):
    """A copy of ``base`` with fields replaced (re-validates presets)."""
    data = base.as_dict()
    data.update(overrides)
    if data.get("channel") in ("complete", "overcomplete"):
        data["vocab_size"] = 0
        data["max_length"] = 0
    return GameConfig(**data)
