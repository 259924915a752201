"""Structured meaning spaces, stimulus encoders and train/test splits.

The meaning space nests position (X, Y), orientation and scale axes of a
sprite scene.  Position and orientation axes are subsampled to 8 evenly
spaced values out of 32 and 40 respectively; the 6-valued scale axis is
kept whole.  Visual stimuli are procedurally rendered 32x32 rasters of a
heart sprite, so no external dataset archive is needed; the properties
the experiments rely on (determinism, injectivity, latent faithfulness)
are enforced by tests rather than pixel equality with any archive.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffcore import ParameterError

STRATEGIES = ("interpolation", "extrapolation")

# Heart sprite geometry: centres sweep [8, 24] px, half-widths [4, 10] px,
# orientation covers the full original axis proportionally.
CENTER_MIN_PX = 8.0
CENTER_MAX_PX = 24.0
HALFWIDTH_MIN_PX = 4.0
HALFWIDTH_MAX_PX = 10.0
DEFAULT_HALFWIDTH_PX = 7.0
SUPERSAMPLE = 4
IMAGE_SIDE = 32
# Max radius of the implicit heart curve, used to normalise half-widths.
HEART_RADIUS = 1.30


@dataclass(frozen=True)
class AxisSpec:
    """One latent axis: its original cardinality and the kept value indices."""

    name: str
    full_cardinality: int
    values: tuple

    def __post_init__(self):
        vals = tuple(self.values)
        if list(vals) != sorted(set(vals)):
            raise ParameterError(f"axis {self.name}: values must be strictly increasing")
        if vals and (vals[0] < 0 or vals[-1] >= self.full_cardinality):
            raise ParameterError(f"axis {self.name}: values outside [0, {self.full_cardinality})")
        object.__setattr__(self, "values", vals)

    @property
    def cardinality(self):
        return len(self.values)


@dataclass(frozen=True)
class LatentSpec:
    """Ordered axes of a meaning space."""

    axes: tuple

    @property
    def n_attrs(self):
        return len(self.axes)

    @property
    def cardinalities(self):
        return tuple(a.cardinality for a in self.axes)

    @property
    def n_meanings(self):
        return int(np.prod(self.cardinalities))

    @property
    def symbolic_dim(self):
        return int(sum(self.cardinalities))


def latent_spec(n_attrs):
    """The nested 2/3/4-attribute meaning spaces.

    2 attributes are the X and Y positions; 3 adds orientation; 4 adds
    scale.  Position axes keep every 4th of 32 values, orientation every
    5th of 40, scale all 6.
    """
    if n_attrs not in (2, 3, 4):
        raise ParameterError(f"n_attrs must be 2, 3 or 4, got {n_attrs}")
    axes = [
        AxisSpec("x", 32, tuple(range(0, 32, 4))),
        AxisSpec("y", 32, tuple(range(0, 32, 4))),
    ]
    if n_attrs >= 3:
        axes.append(AxisSpec("orientation", 40, tuple(range(0, 40, 5))))
    if n_attrs >= 4:
        axes.append(AxisSpec("scale", 6, tuple(range(6))))
    return LatentSpec(axes=tuple(axes))


def testing_mask(spec, strategy):
    """Per-axis boolean masks flagging the testing-purpose value positions.

    Half the values on each axis are testing-purpose.  Interpolation
    flags every second position starting at 1, so position 0 stays in
    train under both strategies; extrapolation flags the first half.
    """
    if strategy not in STRATEGIES:
        raise ParameterError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    masks = []
    for axis in spec.axes:
        card = axis.cardinality
        mask = np.zeros(card, dtype=bool)
        if strategy == "interpolation":
            mask[1::2] = True
        else:
            mask[: card // 2] = True
        masks.append(mask)
    return tuple(masks)


def is_test_meaning(meaning, masks):
    """True iff the meaning combines two or more testing-purpose values."""
    hits = sum(int(masks[i][v]) for i, v in enumerate(meaning))
    return hits >= 2


@dataclass(frozen=True)
class Benchmark:
    """A train/test partition of a structured meaning space.

    ``train`` and ``test`` are integer arrays of shape [n, n_attrs] whose
    entries index into each axis's subsampled value list.  Their union is
    the full cartesian product and they never overlap.
    """

    spec: LatentSpec
    strategy: str
    train: np.ndarray
    test: np.ndarray
    masks: tuple

    @property
    def all_meanings(self):
        return np.concatenate([self.train, self.test], axis=0)


def build_benchmark(n_attrs, strategy):
    """Enumerate the meaning space and split it by testing-purpose count.

    A meaning with two or more testing-purpose values goes to test;
    everything else (including meanings with exactly one, which keep the
    agents familiar with every value) goes to train.
    """
    spec = latent_spec(n_attrs)
    masks = testing_mask(spec, strategy)
    grids = np.meshgrid(*[np.arange(c) for c in spec.cardinalities], indexing="ij")
    meanings = np.stack([g.reshape(-1) for g in grids], axis=1)
    hits = np.zeros(meanings.shape[0], dtype=int)
    for i, mask in enumerate(masks):
        hits += mask[meanings[:, i]]
    is_test = hits >= 2
    return Benchmark(
        spec=spec,
        strategy=strategy,
        train=meanings[~is_test],
        test=meanings[is_test],
        masks=masks,
    )


def encode_symbolic(meanings, spec):
    """Concatenated per-axis one-hot encodings.

    Accepts a single meaning or an [n, n_attrs] batch; returns float64
    arrays of width ``spec.symbolic_dim``.
    """
    arr = np.atleast_2d(np.asarray(meanings, dtype=int))
    out = np.zeros((arr.shape[0], spec.symbolic_dim))
    offset = 0
    for i, axis in enumerate(spec.axes):
        out[np.arange(arr.shape[0]), offset + arr[:, i]] = 1.0
        offset += axis.cardinality
    if np.asarray(meanings).ndim == 1:
        return out[0]
    return out


def _geometry(meaning, spec):
    """Map a meaning to (cx, cy, angle, half_width) in pixel units."""
    by_name = {a.name: (a, meaning[i]) for i, a in enumerate(spec.axes)}

    def original(name):
        axis, idx = by_name[name]
        return axis, axis.values[idx]

    ax, vx = original("x")
    cx = CENTER_MIN_PX + (CENTER_MAX_PX - CENTER_MIN_PX) * vx / (ax.full_cardinality - 1)
    ay, vy = original("y")
    cy = CENTER_MIN_PX + (CENTER_MAX_PX - CENTER_MIN_PX) * vy / (ay.full_cardinality - 1)
    if "orientation" in by_name:
        ao, vo = original("orientation")
        angle = 2.0 * np.pi * vo / ao.full_cardinality
    else:
        angle = 0.0
    if "scale" in by_name:
        asc, vs = original("scale")
        hw = HALFWIDTH_MIN_PX + (HALFWIDTH_MAX_PX - HALFWIDTH_MIN_PX) * vs / (asc.full_cardinality - 1)
    else:
        hw = DEFAULT_HALFWIDTH_PX
    return cx, cy, angle, hw


def render_visual(meaning, spec):
    """Grayscale [1, 32, 32] raster of the heart sprite for one meaning.

    The implicit curve (x^2 + y^2 - 1)^3 - x^2 y^3 <= 0 is evaluated on a
    4x supersampled grid, rotated and scaled per the meaning, then box
    downsampled, which antialiases the edges.  Deterministic per meaning.
    """
    cx, cy, angle, hw = _geometry(np.asarray(meaning, dtype=int), spec)
    side = IMAGE_SIDE * SUPERSAMPLE
    coords = (np.arange(side) + 0.5) / SUPERSAMPLE
    px, py = np.meshgrid(coords, coords, indexing="xy")
    # Normalise so the sprite's max radius equals the requested half-width.
    scale = hw / HEART_RADIUS
    dx = (px - cx) / scale
    dy = (cy - py) / scale  # image rows grow downward; flip to math orientation
    ca, sa = np.cos(angle), np.sin(angle)
    hx = ca * dx + sa * dy
    hy = -sa * dx + ca * dy
    r2 = hx * hx + hy * hy
    inside = (r2 - 1.0) ** 3 - (hx * hx) * (hy ** 3) <= 0.0
    img = inside.astype(np.float64)
    img = img.reshape(IMAGE_SIDE, SUPERSAMPLE, IMAGE_SIDE, SUPERSAMPLE).mean(axis=(1, 3))
    return np.clip(img, 0.0, 1.0)[None, :, :]


def render_visual_batch(meanings, spec):
    """Stack of rasters, shape [n, 1, 32, 32]."""
    arr = np.atleast_2d(np.asarray(meanings, dtype=int))
    return np.stack([render_visual(m, spec) for m in arr], axis=0)


def write_splits(benchmark, out_dir):
    """Write ``train.csv``/``test.csv`` (one meaning per row) plus a summary.

    The summary ``manifest.json`` records the counts and the per-axis
    testing-purpose positions.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in (("train.csv", benchmark.train), ("test.csv", benchmark.test)):
        with open(out / name, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for row in rows:
                writer.writerow([int(v) for v in row])
    summary = {
        "n_attrs": benchmark.spec.n_attrs,
        "strategy": benchmark.strategy,
        "train_count": int(benchmark.train.shape[0]),
        "test_count": int(benchmark.test.shape[0]),
        "axes": [
            {
                "name": axis.name,
                "full_cardinality": axis.full_cardinality,
                "subsampled_values": list(axis.values),
                "testing_positions": [int(i) for i in np.flatnonzero(mask)],
            }
            for axis, mask in zip(benchmark.spec.axes, benchmark.masks)
        ],
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary
