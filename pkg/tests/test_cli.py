"""End-to-end CLI coverage through the main entry point."""

import json

import pytest

from refgame import cli, exprunner


def test_splits_command(tmp_path, capsys):
    out = tmp_path / "splits"
    assert cli.main(["splits", "--attrs", "3", "--strategy", "extrapolation",
                     "--out", str(out)]) == 0
    assert (out / "train.csv").exists()
    assert (out / "test.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["train_count"] == 256 and manifest["test_count"] == 256
    assert "256" in capsys.readouterr().out


def test_ilm_point_command(capsys):
    assert cli.main(["ilm", "--features", "3", "--values", "8",
                     "--observations", "64", "--mc", "500"]) == 0
    out = capsys.readouterr().out
    assert "E_h" in out and "E_c" in out and "S" in out
    assert "monte-carlo" in out


def test_ilm_sweep_writes_csv_and_figure(tmp_path, capsys):
    out = tmp_path / "sweep"
    assert cli.main(["ilm", "--features", "2", "--values", "8",
                     "--sweep", "R=2..64", "--out", str(out)]) == 0
    lines = (out / "ilm_sweep.csv").read_text().splitlines()
    assert lines[0] == "R,b,E_h,E_c,S"
    assert len(lines) > 3
    assert (out / "ilm_sweep.png").stat().st_size > 0


def test_ilm_requires_observations_or_sweep():
    with pytest.raises(SystemExit):
        cli.main(["ilm", "--features", "2", "--values", "4"])


def test_stats_command_ks(tmp_path, capsys):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("\n".join(str(x) for x in range(10)))
    b.write_text("\n".join(str(x + 5) for x in range(10)))
    assert cli.main(["stats", "--test", "ks", "--a", str(a), "--b", str(b),
                     "--alt", "greater"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("D = ")
    assert "p = " in out


def test_stats_command_spearman(tmp_path, capsys):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("1\n2\n3\n4\n")
    b.write_text("10\n20\n30\n40\n")
    assert cli.main(["stats", "--test", "spearman", "--a", str(a), "--b", str(b)]) == 0
    out = capsys.readouterr().out
    assert "rho = 1" in out


def test_train_command_and_outputs(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text("attrs = 2\nchannel = custom\nvocab = 5\nlength = 2\n"
                   "batch = 4\nbudget = 120\nseed = 6\neval_rounds = 30\n"
                   "precision = float64\n")
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "runs.csv").exists()
    assert (out / "manifest.txt").exists()
    assert (out / "speaker.rgl").exists()
    rows = exprunner.read_results(out / "runs.csv")
    assert len(rows) == 1
    assert rows[0]["steps"] == 30


def test_preset_command_tiny(tmp_path, capsys, monkeypatch):
    # shrink a preset to a desk-scale smoke run
    import refgame.exprunner as ex

    real_build = ex.build_preset

    def tiny_build(name, seeds=5, budget=None, base=None):
        from refgame import game
        cells = (game.GameConfig(n_attrs=2, channel="custom", vocab_size=5,
                                 max_length=2, batch_size=4, sample_budget=80,
                                 eval_rounds=20, precision="float64"),)
        return ex.ExperimentPreset(name="custom", cells=cells, seeds=seeds)

    monkeypatch.setattr(ex, "build_preset", tiny_build)
    out = tmp_path / "preset"
    assert cli.main(["preset", "--name", "custom", "--out", str(out),
                     "--seeds", "2"]) == 0
    rows = exprunner.read_results(out / "runs.csv")
    assert len(rows) == 2


def test_report_command(tmp_path):
    from refgame import game

    cfg = game.GameConfig(n_attrs=2, channel="custom", vocab_size=5, max_length=2,
                          batch_size=4, sample_budget=80, eval_rounds=20,
                          seed=1, precision="float64")
    report = game.train(cfg)
    rec = exprunner.RunRecord.from_report("r-0", "custom", report)
    runs = tmp_path / "runs.csv"
    exprunner.write_results([rec], runs)
    out = tmp_path / "figs"
    assert cli.main(["report", "--runs", str(runs), "--out", str(out)]) == 0
    assert (out / "summary.csv").exists()
    assert (out / "accuracy_distributions.png").stat().st_size > 0
    assert (out / "toposim_vs_accuracy.png").exists()
