"""Compositionality and generalisation measurement.

Topographic similarity is the Spearman rank correlation between pairwise
meaning distances (Hamming over attribute indices) and pairwise message
distances (Levenshtein over symbol indices, computed on sequences already
truncated at their first end-of-sentence symbol, EoS excluded).  A
degenerate language (zero distance variance) raises
``UndefinedCorrelationError`` rather than reporting 0: an uncorrelated
language and an unmeasurable one are different findings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import ParameterError
from .stats import UndefinedCorrelationError, spearman

MAX_PAIRWISE_ITEMS = 1500
_PAIR_CHUNK = 200_000


@dataclass(frozen=True)
class LanguageSample:
    """Parallel lists of meanings and EoS-truncated messages."""

    meanings: tuple
    messages: tuple

    def __post_init__(self):
        object.__setattr__(self, "meanings", tuple(tuple(int(v) for v in m) for m in self.meanings))
        object.__setattr__(self, "messages", tuple(tuple(int(s) for s in m) for m in self.messages))
        if len(self.meanings) != len(self.messages):
            raise ParameterError("meanings and messages must be parallel lists")
        if len(self.meanings) < 2:
            raise ParameterError("need at least 2 items to measure similarity")


@dataclass(frozen=True)
class GapRecord:
    """Test-minus-train difference for one metric; negative = degradation."""

    train_value: float
    test_value: float
    metric: str = "accuracy"
    gap: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "gap", self.test_value - self.train_value)


def accuracy(predictions, targets):
    """Fraction of exact matches between two equal-length index arrays."""
    predictions = np.asarray(predictions).reshape(-1)
    targets = np.asarray(targets).reshape(-1)
    if predictions.size == 0:
        raise ParameterError("accuracy of an empty prediction list is undefined")
    if predictions.size != targets.size:
        raise ParameterError(
            f"prediction/target length mismatch: {predictions.size} vs {targets.size}")
    return float((predictions == targets).mean())


def test_train_gap(train_value, test_value, metric="accuracy"):
    """Gap record for finite train/test values of one metric."""
    if not (np.isfinite(train_value) and np.isfinite(test_value)):
        raise ParameterError("gap requires finite train and test values")
    return GapRecord(train_value=float(train_value), test_value=float(test_value), metric=metric)


def pairwise_hamming(meanings):
    """Condensed vector of Hamming distances over attribute indices."""
    arr = np.asarray(meanings, dtype=np.int64)
    iu, ju = np.triu_indices(arr.shape[0], k=1)
    return (arr[iu] != arr[ju]).sum(axis=1).astype(np.int64)


def levenshtein(a, b):
    """Plain quadratic edit distance between two symbol sequences."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def pairwise_levenshtein(messages):
    """Condensed vector of edit distances between all message pairs.

    Duplicated messages are collapsed before the distance computation and
    the dynamic program runs column-vectorised over pair blocks, which
    keeps the largest splits tractable.
    """
    keys = [tuple(int(s) for s in m) for m in messages]
    uniq = {}
    inverse = np.empty(len(keys), dtype=np.int64)
    for i, k in enumerate(keys):
        inverse[i] = uniq.setdefault(k, len(uniq))
    seqs = [None] * len(uniq)
    for k, idx in uniq.items():
        seqs[idx] = k

    square = _unique_square_distances(seqs)
    iu, ju = np.triu_indices(len(keys), k=1)
    return square[inverse[iu], inverse[ju]]


def _unique_square_distances(seqs):
    u = len(seqs)
    lens = np.array([len(s) for s in seqs], dtype=np.int64)
    lmax = int(lens.max()) if u else 0
    padded = np.full((u, max(lmax, 1)), -1, dtype=np.int64)
    for i, s in enumerate(seqs):
        padded[i, : len(s)] = s

    square = np.zeros((u, u), dtype=np.int64)
    iu, ju = np.triu_indices(u, k=1)
    offsets = np.arange(lmax + 1, dtype=np.int64)
    for start in range(0, iu.size, _PAIR_CHUNK):
        sl = slice(start, start + _PAIR_CHUNK)
        ia, ib = iu[sl], ju[sl]
        a_pad, b_pad = padded[ia], padded[ib]
        la, lb = lens[ia], lens[ib]
        out = np.empty(ia.size, dtype=np.int64)
        done = la == 0
        out[done] = lb[done]
        d_prev = np.broadcast_to(offsets, (ia.size, lmax + 1)).copy()
        for i in range(1, lmax + 1):
            sub = d_prev[:, :-1] + (a_pad[:, i - 1 : i] != b_pad)
            d_cur = np.empty_like(d_prev)
            d_cur[:, 0] = i
            np.minimum(sub, d_prev[:, 1:] + 1, out=d_cur[:, 1:])
            # Insertion closure: x_j = min_k<=j (x_k + j - k) via a running min.
            d_cur -= offsets
            np.minimum.accumulate(d_cur, axis=1, out=d_cur)
            d_cur += offsets
            harvest = la == i
            if harvest.any():
                out[harvest] = d_cur[harvest, lb[harvest]]
            d_prev = d_cur
        square[ia, ib] = out
        square[ib, ia] = out
    return square


def topographic_similarity(sample, max_items=MAX_PAIRWISE_ITEMS, rng=None):
    """Spearman correlation between meaning and message distance vectors.

    All unordered pairs are compared exactly up to ``max_items`` items;
    larger samples are subsampled uniformly, which requires ``rng`` so the
    subsample is reproducible from the run seed.
    """
    meanings = sample.meanings
    messages = sample.messages
    n = len(meanings)
    if n > max_items:
        if rng is None:
            raise ParameterError(
                f"sample of {n} items exceeds max_items={max_items}; pass rng to subsample")
        keep = np.sort(rng.choice(n, size=max_items, replace=False))
        meanings = tuple(meanings[i] for i in keep)
        messages = tuple(messages[i] for i in keep)
    dm = pairwise_hamming(meanings)
    dmsg = pairwise_levenshtein(messages)
    if np.all(dm == dm[0]) or np.all(dmsg == dmsg[0]):
        raise UndefinedCorrelationError(
            "constant distance vector: topographic similarity undefined")
    return spearman(dm, dmsg).statistic
