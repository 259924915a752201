"""Iterated-learning stability analytics.

Closed-form expressivity of holistic versus compositional languages under
a transmission bottleneck, plus a Monte Carlo oracle for both, and the
relative stability of compositional languages.

Observation model: a learner sees ``R`` i.i.d. uniform draws (with
replacement) from the ``N`` environment objects; by default ``N`` equals
the meaning-space size ``M = V^F`` and every meaning labels exactly one
object.  A holistic language can only express meanings that were observed
verbatim; a compositional one expresses any meaning whose every attribute
value appeared somewhere in the observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import ParameterError


class UndefinedStabilityError(ValueError):
    """Relative stability undefined because both expressivities are zero."""


@dataclass(frozen=True)
class IlmEnv:
    """Environment: N objects over an F-feature, V-values-per-feature space."""

    n_features: int
    n_values: int
    n_observations: int
    n_objects: int = 0  # 0 means "equal to the meaning-space size"

    def __post_init__(self):
        if self.n_features < 1 or self.n_values < 1 or self.n_observations < 0:
            raise ParameterError("IlmEnv requires F >= 1, V >= 1, R >= 0")
        if self.n_objects == 0:
            object.__setattr__(self, "n_objects", self.n_meanings)
        if self.n_objects < 1:
            raise ParameterError("IlmEnv requires at least one object")

    @property
    def n_meanings(self):
        return self.n_values ** self.n_features

    @property
    def coverage(self):
        """Observations per object; the inverse of the bottleneck severity."""
        return self.n_observations / self.n_objects


def expressivity_holistic(env):
    """Expected number of meanings expressible by pure memorisation.

    With ``U = min(N, M)`` distinct meanings in use, each draw observes a
    particular one with probability 1/U, so the expected number observed
    at least once after R draws is ``U * (1 - (1 - 1/U)^R)``.
    """
    if env.n_observations == 0:
        return 0.0
    u = min(env.n_objects, env.n_meanings)
    return float(u * (1.0 - (1.0 - 1.0 / u) ** env.n_observations))


def expressivity_compositional(env):
    """Expected number of meanings expressible through their parts.

    Each observation exposes one value on every feature axis, so a value
    is seen with probability ``q = 1 - (1 - 1/V)^R``; a meaning is
    expressible when all F of its values were seen, giving ``N * q^F``
    expressible meanings among those labelling the environment.
    """
    if env.n_observations == 0:
        return 0.0
    q = 1.0 - (1.0 - 1.0 / env.n_values) ** env.n_observations
    return float(min(env.n_objects, env.n_meanings) * q ** env.n_features)


def relative_stability(env):
    """Stability of compositional relative to holistic languages, in [0, 1].

    Absolute stabilities are proportional to expressivity per object with
    a shared constant, which cancels: ``S = E_c / (E_c + E_h)``.
    """
    e_c = expressivity_compositional(env)
    e_h = expressivity_holistic(env)
    if e_c + e_h == 0.0:
        raise UndefinedStabilityError("no observations: stability undefined")
    return e_c / (e_c + e_h)


def monte_carlo_expressivity(env, language, trials, rng, chunk=2000):
    """Simulated (mean, standard error) of either expressivity.

    Each trial simulates one learner lifetime of R uniform meaning draws.
    The holistic count is the number of distinct meanings observed; the
    compositional count multiplies the per-axis numbers of observed
    values, which equals the number of meanings whose every value was
    seen.  Only the default ``N = M`` labelling is simulated.
    """
    if language not in ("holistic", "compositional"):
        raise ParameterError(f"language must be 'holistic' or 'compositional', got {language!r}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if env.n_objects != env.n_meanings:
        raise ParameterError("the Monte Carlo oracle only supports N == M")
    r = env.n_observations
    if r == 0:
        return 0.0, 0.0

    counts = np.empty(trials)
    filled = 0
    while filled < trials:
        t = min(chunk, trials - filled)
        draws = rng.integers(0, env.n_meanings, size=(t, r))
        if language == "holistic":
            srt = np.sort(draws, axis=1)
            counts[filled:filled + t] = 1 + (np.diff(srt, axis=1) != 0).sum(axis=1)
        else:
            per_axis = np.ones(t)
            vals = draws
            for _ in range(env.n_features):
                axis_vals = np.sort(vals % env.n_values, axis=1)
                distinct = 1 + (np.diff(axis_vals, axis=1) != 0).sum(axis=1)
                per_axis = per_axis * distinct
                vals = vals // env.n_values
            counts[filled:filled + t] = per_axis
        filled += t
    mean = float(counts.mean())
    stderr = float(counts.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return mean, stderr
