"""Two-sample Kolmogorov-Smirnov and Spearman rank-order tests.

Both tests report asymptotic p-values, which is what standard library
routines produce at the sample sizes the experiments use; small-sample
accuracy is checked against exhaustive permutation oracles in the test
suite.  Ties are handled by evaluating both empirical CDFs at the pooled
sorted points (KS) and by average ranks (Spearman).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy import special

from .diffcore import ParameterError

ALTERNATIVES = ("two_sided", "greater", "less")


class UndefinedCorrelationError(ValueError):
    """Correlation undefined because one sample has zero rank variance."""


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    alternative: str
    n: int
    m: int


def _ecdf_at(sample, points):
    sample = np.sort(sample)
    return np.searchsorted(sample, points, side="right") / sample.size


# Below this per-sample size the two-sided p-value is computed exactly by
# lattice path counting, which coincides with a full permutation test for
# untied data; the asymptotic Kolmogorov distribution is too coarse there.
EXACT_TWO_SIDED_MAX_N = 25


def _exact_two_sided_p(d, n, m):
    """P(D >= d) under the null by counting monotone lattice paths.

    Paths from (0, 0) to (n, m) correspond to interleavings of the pooled
    sample; a path realises D < d iff it never leaves the band
    ``|i/n - j/m| < d``.  Exact integer arithmetic throughout (assumes a
    tie-free pooled sample, the standard continuity convention).
    """
    if d <= 0:
        return 1.0
    dnm = int(round(d * n * m))
    prev = [0] * (m + 1)
    for i in range(n + 1):
        cur = [0] * (m + 1)
        for j in range(m + 1):
            if abs(i * m - j * n) >= dnm:
                continue
            if i == 0 and j == 0:
                cur[j] = 1
                continue
            c = prev[j] if i > 0 else 0
            if j > 0:
                c += cur[j - 1]
            cur[j] = c
        prev = cur
    return float(1.0 - prev[m] / comb(n + m, n))


def ks_two_sample(a, b, alternative="two_sided"):
    """Two-sample KS test.

    ``alternative='greater'`` tests whether values in ``a`` tend to be
    greater than values in ``b`` (statistic ``sup(F_b - F_a)``), and
    symmetrically for ``'less'``.  One-sided p-values use the asymptotic
    ``exp(-2 D^2 nm / (n+m))``.  Two-sided p-values use the asymptotic
    Kolmogorov distribution, except for small samples where the exact
    path-counting distribution is used instead.
    """
    if alternative not in ALTERNATIVES:
        raise ParameterError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ParameterError("ks_two_sample requires non-empty samples")
    n, m = a.size, b.size
    pooled = np.concatenate([a, b])
    fa = _ecdf_at(a, pooled)
    fb = _ecdf_at(b, pooled)
    if alternative == "two_sided":
        d = float(np.abs(fa - fb).max())
        if max(n, m) <= EXACT_TWO_SIDED_MAX_N:
            p = _exact_two_sided_p(d, n, m)
        else:
            en = np.sqrt(n * m / (n + m))
            p = float(np.clip(special.kolmogorov(en * d), 0.0, 1.0))
    elif alternative == "greater":
        d = float((fb - fa).max())
        p = float(np.clip(np.exp(-2.0 * d * d * n * m / (n + m)), 0.0, 1.0))
    else:
        d = float((fa - fb).max())
        p = float(np.clip(np.exp(-2.0 * d * d * n * m / (n + m)), 0.0, 1.0))
    p = float(np.clip(p, 0.0, 1.0))
    return TestResult(statistic=d, p_value=p, alternative=alternative, n=n, m=m)


def rank_average(values):
    """Ranks 1..n with ties replaced by their average rank."""
    values = np.asarray(values, dtype=float).reshape(-1)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=float)
    ranks[order] = np.arange(1, values.size + 1, dtype=float)
    uniq, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    if uniq.size != values.size:
        sums = np.zeros(uniq.size)
        np.add.at(sums, inverse, ranks)
        ranks = (sums / counts)[inverse]
    return ranks


def spearman(x, y):
    """Spearman rank-order correlation with a Student-t p-value.

    The coefficient is the Pearson correlation of average-ranked data.
    Identical (reversed) rank vectors short-circuit to exactly +1 (-1),
    and ``|rho| = 1`` maps to ``p = 0`` by convention.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != y.size:
        raise ParameterError(f"spearman requires equal lengths, got {x.size} and {y.size}")
    n = x.size
    if n < 3:
        raise ParameterError(f"spearman requires at least 3 pairs, got {n}")
    rx = rank_average(x)
    ry = rank_average(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise UndefinedCorrelationError("zero rank variance: correlation undefined")
    if np.array_equal(rx, ry):
        rho = 1.0
    elif np.array_equal(rx, (n + 1.0) - ry):
        rho = -1.0
    else:
        ax = rx - rx.mean()
        ay = ry - ry.mean()
        rho = float((ax * ay).sum() / np.sqrt((ax * ax).sum() * (ay * ay).sum()))
        rho = float(np.clip(rho, -1.0, 1.0))
    if abs(rho) == 1.0:
        p = 0.0
    else:
        t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
        p = float(np.clip(2.0 * special.stdtr(n - 2, -abs(t)), 0.0, 1.0))
    return TestResult(statistic=rho, p_value=p, alternative="two_sided", n=n, m=n)
