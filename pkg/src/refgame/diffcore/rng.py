"""Deterministic random-number plumbing.

Every stochastic component draws from a :class:`numpy.random.Generator`
backed by the named PCG64 bit generator, so a (seed, stream) pair fully
determines a run.  Derived streams use ``SeedSequence`` spawn keys, which
keeps independent runs independent without coordination.
"""

from __future__ import annotations

import numpy as np

GENERATOR_NAME = "pcg64"


def make_rng(seed, *stream):
    """Generator for ``seed``, optionally on a derived ``stream`` key."""
    if stream:
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    else:
        ss = np.random.SeedSequence(entropy=int(seed))
    return np.random.Generator(np.random.PCG64(ss))
