"""Config parsing, presets, CSV emission and preset analyses."""

import json

import numpy as np
import pytest

from refgame import exprunner, game, stats


def desk_base(**over):
    base = dict(n_attrs=2, strategy="interpolation", stimulus="symbolic",
                channel="custom", vocab_size=6, max_length=3, batch_size=8,
                sample_budget=240, eval_rounds=40, precision="float64")
    base.update(over)
    return base


class TestConfigParsing:
    def test_minimal_file_materializes_defaults(self):
        cfg = exprunner.parse_config_text(
            "attrs = 3\nstrategy = interpolation\nchannel = overcomplete\n"
            "batch = 8\nseed = 1\n")
        assert cfg.n_attrs == 3
        assert cfg.vocab_size == 100 and cfg.max_length == 20
        assert cfg.lr == game.ADAM_LR
        assert cfg.tau0 == 0.2
        assert cfg.sample_budget == 480000

    def test_complete_channel_derives_sizes(self):
        cfg = exprunner.parse_config_text("channel = complete\nattrs = 3\n")
        assert cfg.vocab_size == 9 and cfg.max_length == 3

    def test_unknown_key_is_hard_error_with_line(self):
        with pytest.raises(exprunner.ConfigError, match=":2"):
            exprunner.parse_config_text("attrs = 3\nbatchsize = 8\n")

    def test_zero_batch_rejected(self):
        with pytest.raises(exprunner.ConfigError):
            exprunner.parse_config_text("batch = 0\n")

    def test_sections_and_comments_allowed(self):
        text = "[game]\nattrs = 2  # two axes\n\n[optim]\nlr = 0.002\n"
        cfg = exprunner.parse_config_text(text)
        assert cfg.n_attrs == 2 and cfg.lr == 0.002

    def test_unknown_section_rejected(self):
        with pytest.raises(exprunner.ConfigError):
            exprunner.parse_config_text("[misc]\nattrs = 2\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(exprunner.ConfigError, match="duplicate"):
            exprunner.parse_config_text("attrs = 2\nattrs = 3\n")

    def test_env_seed_fallback(self, monkeypatch):
        monkeypatch.setenv("REFGAME_SEED", "91")
        cfg = exprunner.parse_config_text("attrs = 2\n")
        assert cfg.seed == 91

    def test_load_config_roundtrip(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("attrs = 2\nbatch = 4\nseed = 5\n")
        cfg = exprunner.load_config(path)
        assert cfg.batch_size == 4 and cfg.seed == 5


class TestPresets:
    def test_all_presets_expand(self):
        for name in ("exp1_split", "exp2_batchsize", "exp3_struct_capacity",
                     "exp4_correlation"):
            preset = exprunner.build_preset(name, seeds=2)
            assert preset.cells
            runs = preset.runs()
            assert len(runs) == len(preset.cells) * 2
            assert len({rid for rid, _ in runs}) == len(runs)

    def test_exp2_grid_matches_batch_sweeps(self):
        preset = exprunner.build_preset("exp2_batchsize", seeds=1)
        batches_3 = {c.batch_size for c in preset.cells if c.n_attrs == 3}
        assert batches_3 == set(exprunner.BATCH_SWEEPS[3])

    def test_exp3_includes_capacity_traversals(self):
        preset = exprunner.build_preset("exp3_struct_capacity", seeds=1)
        lengths = {c.max_length for c in preset.cells if c.vocab_size == 9}
        assert set(exprunner.LENGTH_SWEEP) <= lengths
        vocabs = {c.vocab_size for c in preset.cells if c.max_length == 10}
        assert vocabs == set(exprunner.VOCAB_SWEEP)

    def test_budget_override(self):
        preset = exprunner.build_preset("exp1_split", seeds=1, budget=999)
        assert all(c.sample_budget == 999 for c in preset.cells)

    def test_unknown_preset_rejected(self):
        from refgame.diffcore import ParameterError

        with pytest.raises(ParameterError):
            exprunner.build_preset("exp9_fantasy")


class TestWriteResults:
    def _record(self, **over):
        cfg = game.GameConfig(**desk_base(seed=over.pop("seed", 1)))
        values = dict(run_id="r-1", preset="custom", config=cfg, steps=30,
                      coverage=8 / 48, acc_train=0.5, acc_test=0.25,
                      ts_train=0.412345678, ts_test=0.3, ts_undefined=False,
                      wall_s=1.25)
        values.update(over)
        return exprunner.RunRecord(**values)

    def test_empty_record_list_writes_header_only(self, tmp_path):
        path = tmp_path / "runs.csv"
        exprunner.write_results([], path)
        assert path.read_text() == exprunner.CSV_HEADER + "\n"

    def test_six_significant_digits(self, tmp_path):
        path = tmp_path / "runs.csv"
        exprunner.write_results([self._record()], path)
        row = path.read_text().splitlines()[1]
        assert "0.412346" in row  # 6 significant digits

    def test_undefined_toposim_sentinel(self, tmp_path):
        rec = self._record(ts_train=float("nan"), ts_test=float("nan"),
                           ts_undefined=True)
        path = tmp_path / "runs.csv"
        exprunner.write_results([rec], path)
        row = path.read_text().splitlines()[1].split(",")
        header = exprunner.CSV_HEADER.split(",")
        assert row[header.index("ts_undefined")] == "1"
        assert row[header.index("ts_train")] == ""
        assert row[header.index("ts_test")] == ""
        assert row[header.index("ts_gap")] == ""

    def test_coverage_example(self, tmp_path):
        cfg = game.GameConfig(n_attrs=3, channel="overcomplete", batch_size=8)
        rec = self._record(config=cfg, coverage=8 / 256)
        path = tmp_path / "runs.csv"
        exprunner.write_results([rec], path)
        row = path.read_text().splitlines()[1].split(",")
        assert row[exprunner.CSV_HEADER.split(",").index("coverage")] == "0.03125"

    def test_read_results_roundtrip(self, tmp_path):
        path = tmp_path / "runs.csv"
        exprunner.write_results([self._record()], path)
        rows = exprunner.read_results(path)
        assert rows[0]["acc_train"] == 0.5
        assert rows[0]["ts_undefined"] == 0
        np.testing.assert_allclose(rows[0]["ts_train"], 0.412346)


class TestRunPreset:
    def _tiny_preset(self, seeds=2):
        cells = tuple(game.GameConfig(**desk_base(batch_size=b))
                      for b in (4, 8))
        return exprunner.ExperimentPreset(
            name="custom", cells=cells, seeds=seeds,
            analyses=(("ks_matrix", {"metric": "acc_train", "group_by": "batch",
                                     "alternative": "greater"}),
                      ("pooled_spearman", {"x": "acc_train", "y": "acc_test"})))

    def test_outputs_written_and_deterministic(self, tmp_path):
        preset = self._tiny_preset()
        out1, out2 = tmp_path / "a", tmp_path / "b"
        exprunner.run_preset(preset, out1)
        exprunner.run_preset(preset, out2)
        strip = lambda p: [",".join(c for i, c in enumerate(line.split(","))
                                    if i != len(exprunner.CSV_HEADER.split(",")) - 1)
                           for line in (p / "runs.csv").read_text().splitlines()]
        assert strip(out1) == strip(out2)
        assert (out1 / "analysis.json").exists()
        assert (out1 / "manifest.txt").exists()

    def test_ks_matrix_square_with_blank_diagonal(self, tmp_path):
        preset = self._tiny_preset()
        _, analysis = exprunner.run_preset(preset, tmp_path / "out")
        key = next(iter(analysis["ks_matrix"]))
        matrix = analysis["ks_matrix"][key]["matrix"]
        groups = analysis["ks_matrix"][key]["groups"]
        assert len(matrix) == len(groups)
        for i, row in enumerate(matrix):
            assert len(row) == len(groups)
            assert row[i] is None

    def test_analysis_round_trips_from_csv(self, tmp_path):
        preset = self._tiny_preset()
        _, analysis = exprunner.run_preset(preset, tmp_path / "out")
        rows = exprunner.read_results(tmp_path / "out" / "runs.csv")
        xs = [r["acc_train"] for r in rows]
        ys = [r["acc_test"] for r in rows]
        got = analysis["pooled_spearman"]
        try:
            expect = stats.spearman(xs, ys)
        except stats.UndefinedCorrelationError:
            assert got["error"] == "undefined correlation"
        else:
            assert got["statistic"] == f"{expect.statistic:.6g}"
            assert got["p_value"] == f"{expect.p_value:.6g}"

    def test_failures_recorded_preset_continues(self, tmp_path, monkeypatch):
        preset = self._tiny_preset(seeds=1)
        real_train = game.train

        def flaky(config, checkpoint_dir=None):
            if config.batch_size == 4:
                raise RuntimeError("synthetic failure")
            return real_train(config, checkpoint_dir)

        monkeypatch.setattr(game, "train", flaky)
        records, _ = exprunner.run_preset(preset, tmp_path / "out")
        assert len(records) == 1
        failures = (tmp_path / "out" / "failures.txt").read_text()
        assert "synthetic failure" in failures

    def test_parallel_execution_matches_serial(self, tmp_path):
        preset = self._tiny_preset(seeds=1)
        exprunner.run_preset(preset, tmp_path / "serial", parallelism=1)
        exprunner.run_preset(preset, tmp_path / "parallel", parallelism=2)
        wall_idx = exprunner.CSV_HEADER.split(",").index("wall_s")

        def rows_without_wall(path):
            lines = (path / "runs.csv").read_text().splitlines()
            return [",".join(c for i, c in enumerate(line.split(","))
                             if i != wall_idx) for line in lines]

        assert rows_without_wall(tmp_path / "serial") == \
            rows_without_wall(tmp_path / "parallel")

    def test_manifest_lists_every_ledgered_default(self, tmp_path):
        from refgame.defaults import LEDGERED_DEFAULTS

        preset = self._tiny_preset(seeds=1)
        exprunner.run_preset(preset, tmp_path / "out")
        manifest = (tmp_path / "out" / "manifest.txt").read_text()
        keys = {line.split(" = ")[0] for line in manifest.splitlines()}
        for default_key in LEDGERED_DEFAULTS:
            assert f"default.{default_key}" in keys, default_key


def test_analysis_json_is_valid_json(tmp_path):
    cells = (game.GameConfig(**desk_base()),)
    preset = exprunner.ExperimentPreset(name="custom", cells=cells, seeds=2)
    exprunner.run_preset(preset, tmp_path / "out")
    parsed = json.loads((tmp_path / "out" / "analysis.json").read_text())
    assert parsed["preset"] == "custom"
    assert parsed["n_rows"] == 2
