"""Meaning spaces, split algorithms and stimulus encoders."""

import itertools
import json

import numpy as np
import pytest

from refgame import stimuli
from refgame.diffcore import ParameterError

CARDINALITIES = {2: (48, 16), 3: (256, 256), 4: (960, 2112)}


@pytest.mark.parametrize("n_attrs", [2, 3, 4])
@pytest.mark.parametrize("strategy", ["interpolation", "extrapolation"])
def test_split_cardinalities_exact(n_attrs, strategy):
    bench = stimuli.build_benchmark(n_attrs, strategy)
    train, test = CARDINALITIES[n_attrs]
    assert bench.train.shape[0] == train
    assert bench.test.shape[0] == test


@pytest.mark.parametrize("n_attrs", [2, 3, 4])
@pytest.mark.parametrize("strategy", ["interpolation", "extrapolation"])
def test_partition_is_exact_and_disjoint(n_attrs, strategy):
    bench = stimuli.build_benchmark(n_attrs, strategy)
    full = set(itertools.product(*[range(c) for c in bench.spec.cardinalities]))
    train = {tuple(m) for m in bench.train}
    test = {tuple(m) for m in bench.test}
    assert train | test == full
    assert not (train & test)


@pytest.mark.parametrize("n_attrs", [2, 3, 4])
@pytest.mark.parametrize("strategy", ["interpolation", "extrapolation"])
def test_familiarization_every_testing_value_trains(n_attrs, strategy):
    bench = stimuli.build_benchmark(n_attrs, strategy)
    for axis_idx, mask in enumerate(bench.masks):
        for value in np.flatnonzero(mask):
            assert np.any(bench.train[:, axis_idx] == value), (axis_idx, value)


def test_test_membership_rule():
    bench = stimuli.build_benchmark(3, "interpolation")
    for m in bench.test:
        assert stimuli.is_test_meaning(m, bench.masks)
        hits = sum(int(bench.masks[i][v]) for i, v in enumerate(m))
        assert hits >= 2
    for m in bench.train:
        assert not stimuli.is_test_meaning(m, bench.masks)
        hits = sum(int(bench.masks[i][v]) for i, v in enumerate(m))
        assert hits <= 1


def test_is_test_meaning_cases():
    masks = (np.array([False, True]), np.array([False, True]), np.array([False, True]))
    assert not stimuli.is_test_meaning((0, 0, 0), masks)
    assert not stimuli.is_test_meaning((1, 0, 0), masks)
    assert stimuli.is_test_meaning((1, 1, 0), masks)


def test_strategies_differ_only_in_membership():
    inter = stimuli.build_benchmark(3, "interpolation")
    extra = stimuli.build_benchmark(3, "extrapolation")
    assert inter.train.shape == extra.train.shape
    assert {tuple(m) for m in inter.test} != {tuple(m) for m in extra.test}


def test_interpolation_mask_alternates_extrapolation_first_half():
    spec = stimuli.latent_spec(4)
    inter = stimuli.testing_mask(spec, "interpolation")
    extra = stimuli.testing_mask(spec, "extrapolation")
    np.testing.assert_array_equal(inter[0], [False, True] * 4)
    np.testing.assert_array_equal(extra[0], [True] * 4 + [False] * 4)
    # scale: 6 values -> 3 testing
    np.testing.assert_array_equal(inter[3], [False, True, False, True, False, True])
    np.testing.assert_array_equal(extra[3], [True, True, True, False, False, False])


def test_subsampled_axes_match_source_layout():
    spec = stimuli.latent_spec(4)
    assert spec.axes[0].values == tuple(range(0, 32, 4))
    assert spec.axes[2].values == tuple(range(0, 40, 5))
    assert spec.axes[3].values == tuple(range(6))
    assert spec.cardinalities == (8, 8, 8, 6)


class TestSymbolicEncoding:
    def test_dimensions(self):
        assert stimuli.latent_spec(2).symbolic_dim == 16
        assert stimuli.latent_spec(3).symbolic_dim == 24
        assert stimuli.latent_spec(4).symbolic_dim == 30

    def test_origin_meaning_positions(self):
        spec = stimuli.latent_spec(2)
        enc = stimuli.encode_symbolic((0, 0), spec)
        assert enc.shape == (16,)
        assert enc[0] == 1.0 and enc[8] == 1.0 and enc.sum() == 2.0

    def test_brute_force_construction(self):
        spec = stimuli.latent_spec(3)
        for m in [(1, 2, 3), (7, 0, 5)]:
            enc = stimuli.encode_symbolic(m, spec)
            expect = np.zeros(24)
            expect[m[0]] = 1.0
            expect[8 + m[1]] = 1.0
            expect[16 + m[2]] = 1.0
            np.testing.assert_array_equal(enc, expect)

    def test_injective_over_full_product(self):
        bench = stimuli.build_benchmark(3, "interpolation")
        enc = stimuli.encode_symbolic(bench.all_meanings, bench.spec)
        assert len({row.tobytes() for row in enc}) == enc.shape[0]


class TestVisualRendering:
    def test_shape_and_range(self):
        spec = stimuli.latent_spec(2)
        img = stimuli.render_visual((3, 4), spec)
        assert img.shape == (1, 32, 32)
        assert img.min() >= 0.0 and img.max() <= 1.0
        assert img.sum() > 0

    def test_deterministic(self):
        spec = stimuli.latent_spec(4)
        a = stimuli.render_visual((1, 2, 3, 4), spec)
        b = stimuli.render_visual((1, 2, 3, 4), spec)
        np.testing.assert_array_equal(a, b)

    def test_single_axis_steps_change_pixels(self):
        spec = stimuli.latent_spec(4)
        base = (3, 3, 2, 3)
        base_img = stimuli.render_visual(base, spec)
        for axis in range(4):
            stepped = list(base)
            stepped[axis] += 1
            img = stimuli.render_visual(tuple(stepped), spec)
            assert np.any(img != base_img), f"axis {axis} step left raster unchanged"

    @pytest.mark.slow
    def test_pairwise_distinct_over_full_4attr_space(self):
        bench = stimuli.build_benchmark(4, "interpolation")
        seen = {}
        for m in bench.all_meanings:
            key = stimuli.render_visual(m, bench.spec).tobytes()
            assert key not in seen, (tuple(m), seen.get(key))
            seen[key] = tuple(m)

    def test_x_neighbours_differ_everywhere(self):
        spec = stimuli.latent_spec(2)
        for x in range(7):
            for y in range(8):
                a = stimuli.render_visual((x, y), spec)
                b = stimuli.render_visual((x + 1, y), spec)
                assert np.any(a != b)


def test_write_splits_files(tmp_path):
    bench = stimuli.build_benchmark(2, "extrapolation")
    summary = stimuli.write_splits(bench, tmp_path)
    train_rows = (tmp_path / "train.csv").read_text().strip().splitlines()
    test_rows = (tmp_path / "test.csv").read_text().strip().splitlines()
    assert len(train_rows) == 48 and len(test_rows) == 16
    assert all(len(r.split(",")) == 2 for r in train_rows)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["train_count"] == 48
    assert manifest["axes"][0]["testing_positions"] == [0, 1, 2, 3]
    assert summary["test_count"] == 16


def test_invalid_attrs_rejected():
    with pytest.raises(ParameterError):
        stimuli.build_benchmark(5, "interpolation")
    with pytest.raises(ParameterError):
        stimuli.build_benchmark(2, "sideways")
