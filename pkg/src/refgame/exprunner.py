"""Experiment configuration, presets, batch execution and result files.

Config files are line-based ``key = value`` with optional ``[section]``
headers (sections are cosmetic; keys are globally unique).  Unknown keys
are hard errors so typos cannot silently fall back to defaults.

Presets expand to grids of game configurations mirroring the study's
four experiments; each (preset, seed) pair is fully deterministic, and
every analysis is computed from the emitted CSV so results can always be
re-derived from the artifacts alone.
"""

from __future__ import annotations

import json
import multiprocessing
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import game as game_mod
from .defaults import LEDGERED_DEFAULTS
from .diffcore import ParameterError
from .stats import UndefinedCorrelationError, ks_two_sample, spearman

CSV_HEADER = ("run_id,preset,attrs,strategy,stimulus,V,L,batch,coverage,seed,"
              "steps,acc_train,acc_test,acc_gap,ts_train,ts_test,ts_gap,"
              "ts_undefined,wall_s")

PRESET_NAMES = ("exp1_split", "exp2_batchsize", "exp3_struct_capacity",
                "exp4_correlation", "custom")

# Batch size giving roughly 4% coverage per benchmark, the regime the
# batch-size sweep singles out as most compositional.
LOW_COVERAGE_BATCH = {2: 2, 3: 8, 4: 40}
BATCH_SWEEPS = {2: (2, 4, 8, 16, 32), 3: (8, 16, 32, 64, 128)}
LENGTH_SWEEP = (3, 6, 10, 20)
VOCAB_SWEEP = (9, 20, 50, 100)
LENGTH_SWEEP_VOCABS = (9, 20)
VOCAB_SWEEP_LENGTHS = (10, 20)


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


_CONFIG_KEYS = {
    "attrs": int,
    "strategy": str,
    "stimulus": str,
    "channel": str,
    "vocab": int,
    "length": int,
    "batch": int,
    "seed": int,
    "budget": int,
    "lr": float,
    "beta1": float,
    "beta2": float,
    "eps": float,
    "tau0": float,
    "precision": str,
    "eval_rounds": int,
    "log_every": int,
}

_SECTIONS = ("game", "channel", "optim", "eval")


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines into a validated GameConfig."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {value!r}") from exc

    mapped = {
        "n_attrs": values.get("attrs", 3),
        "strategy": values.get("strategy", "interpolation"),
        "stimulus": values.get("stimulus", "symbolic"),
        "channel": values.get("channel", "overcomplete"),
        "vocab_size": values.get("vocab", 0),
        "max_length": values.get("length", 0),
        "batch_size": values.get("batch", 8),
        "seed": values.get("seed", _env_seed()),
        "sample_budget": values.get("budget", game_mod.SAMPLE_BUDGET),
        "lr": values.get("lr", game_mod.ADAM_LR),
        "beta1": values.get("beta1", game_mod.ADAM_BETAS[0]),
        "beta2": values.get("beta2", game_mod.ADAM_BETAS[1]),
        "eps": values.get("eps", game_mod.ADAM_EPS),
        "tau0": values.get("tau0", LEDGERED_DEFAULTS["channel.tau0"]),
        "precision": values.get("precision", "float32"),
        "eval_rounds": values.get("eval_rounds", game_mod.EVAL_ROUNDS),
        "log_every": values.get("log_every", game_mod.LOG_EVERY),
    }
    try:
        return game_mod.GameConfig(**mapped)
    except ParameterError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path):
    return parse_config_text(Path(path).read_text(encoding="utf-8"), source=str(path))


def _env_seed():
    return int(os.environ.get("REFGAME_SEED", "0"))


@dataclass(frozen=True)
class ExperimentPreset:
    """A named grid of configurations with seeds per cell."""

    name: str
    cells: tuple  # of GameConfig (seed field is a placeholder)
    seeds: int
    analyses: tuple = ()

    def runs(self):
        """(run_id, config) pairs; seed offsets keep cells disjoint."""
        out = []
        for cell_idx, cell in enumerate(self.cells):
            for s in range(self.seeds):
                cfg = game_mod.derive_config(cell, seed=cell.seed + s)
                out.append((f"{self.name}-c{cell_idx:03d}-s{cfg.seed}", cfg))
        return out


def build_preset(name, seeds=5, budget=None, base=None):
    """Expand a named preset into its configuration grid.

    ``budget`` overrides the per-run sample budget (desk-scale runs);
    ``base`` supplies field overrides applied to every cell.
    """
    if name not in PRESET_NAMES:
        raise ParameterError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    base = dict(base or {})
    if budget is not None:
        base["sample_budget"] = int(budget)

    def cfg(**kw):
        merged = dict(base)
        merged.update(kw)
        return game_mod.derive_config(game_mod.GameConfig(), **merged)

    cells = []
    analyses = []
    if name == "exp1_split":
        for stimulus in ("symbolic", "visual"):
            for strategy in ("interpolation", "extrapolation"):
                for chan in ("complete", "overcomplete"):
                    cells.append(cfg(n_attrs=3, strategy=strategy, stimulus=stimulus,
                                     channel=chan, batch_size=LOW_COVERAGE_BATCH[3]))
        analyses.append(("gap_by_cell", {}))
    elif name == "exp2_batchsize":
        for attrs, stimulus in ((3, "symbolic"), (3, "visual"), (2, "visual")):
            for batch in BATCH_SWEEPS[attrs]:
                cells.append(cfg(n_attrs=attrs, strategy="interpolation",
                                 stimulus=stimulus, channel="overcomplete",
                                 batch_size=batch))
        analyses.append(("ks_matrix", {"metric": "ts_train", "group_by": "batch",
                                       "alternative": "greater"}))
    elif name == "exp3_struct_capacity":
        for attrs in (2, 3, 4):
            for strategy in ("interpolation", "extrapolation"):
                for chan in ("complete", "overcomplete"):
                    cells.append(cfg(n_attrs=attrs, strategy=strategy, stimulus="visual",
                                     channel=chan, batch_size=LOW_COVERAGE_BATCH[attrs]))
        for strategy in ("interpolation", "extrapolation"):
            for vocab in LENGTH_SWEEP_VOCABS:
                for length in LENGTH_SWEEP:
                    cells.append(cfg(n_attrs=3, strategy=strategy, stimulus="visual",
                                     channel="custom", vocab_size=vocab,
                                     max_length=length, batch_size=LOW_COVERAGE_BATCH[3]))
            for length in VOCAB_SWEEP_LENGTHS:
                for vocab in VOCAB_SWEEP:
                    cells.append(cfg(n_attrs=3, strategy=strategy, stimulus="visual",
                                     channel="custom", vocab_size=vocab,
                                     max_length=length, batch_size=LOW_COVERAGE_BATCH[3]))
        analyses.append(("capacity_spearman", {}))
    elif name == "exp4_correlation":
        for attrs in (2, 3, 4):
            for strategy in ("interpolation", "extrapolation"):
                for chan in ("complete", "overcomplete"):
                    cells.append(cfg(n_attrs=attrs, strategy=strategy, stimulus="visual",
                                     channel=chan, batch_size=LOW_COVERAGE_BATCH[attrs]))
        analyses.append(("pooled_spearman", {"x": "ts_train", "y": "acc_test"}))
    else:  # custom: a single cell from base overrides
        cells.append(cfg())
    return ExperimentPreset(name=name, cells=tuple(cells), seeds=seeds,
                            analyses=tuple(analyses))


# ---------------------------------------------------------------------------
# Result records and CSV emission


def _fmt(x):
    """Reals at 6 significant digits, '.' decimal separator."""
    if isinstance(x, float):
        if np.isnan(x):
            return ""
        return f"{x:.6g}"
    return str(x)


@dataclass
class RunRecord:
    run_id: str
    preset: str
    config: game_mod.GameConfig
    steps: int
    coverage: float
    acc_train: float
    acc_test: float
    ts_train: float
    ts_test: float
    ts_undefined: bool
    wall_s: float

    @classmethod
    def from_report(cls, run_id, preset, report):
        return cls(
            run_id=run_id, preset=preset, config=report.config,
            steps=report.steps, coverage=report.coverage,
            acc_train=report.acc_train, acc_test=report.acc_test,
            ts_train=report.ts_train, ts_test=report.ts_test,
            ts_undefined=report.ts_undefined, wall_s=report.wall_seconds)

    def csv_row(self):
        cfg = self.config
        undefined = self.ts_undefined or np.isnan(self.ts_train) or np.isnan(self.ts_test)
        ts_cols = (["", "", ""] if undefined else
                   [_fmt(self.ts_train), _fmt(self.ts_test),
                    _fmt(self.ts_test - self.ts_train)])
        cells = [
            self.run_id, self.preset, cfg.n_attrs, cfg.strategy, cfg.stimulus,
            cfg.vocab_size, cfg.max_length, cfg.batch_size, _fmt(self.coverage),
            cfg.seed, self.steps, _fmt(self.acc_train), _fmt(self.acc_test),
            _fmt(self.acc_test - self.acc_train), *ts_cols,
            1 if undefined else 0, _fmt(self.wall_s),
        ]
        return ",".join(str(c) for c in cells)


def write_results(records, path):
    """Write the fixed-schema runs CSV (UTF-8, LF, 6 significant digits)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")


def read_results(path):
    """Parse a runs CSV back into a list of column dicts (typed)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigError(f"{path}: unexpected header")
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        if not line:
            continue
        cells = line.split(",")
        row = dict(zip(header, cells))
        for key in ("attrs", "V", "L", "batch", "seed", "steps", "ts_undefined"):
            row[key] = int(row[key])
        for key in ("coverage", "acc_train", "acc_test", "acc_gap", "wall_s"):
            row[key] = float(row[key])
        for key in ("ts_train", "ts_test", "ts_gap"):
            row[key] = float(row[key]) if row[key] != "" else float("nan")
        out.append(row)
    return out


def write_manifest(path, config=None, extra=None):
    """key=value manifest echoing the config plus every ledgered default."""
    lines = []
    if config is not None:
        for key, value in sorted(config.as_dict().items()):
            lines.append(f"config.{key} = {value}")
    for key, value in sorted(LEDGERED_DEFAULTS.items()):
        lines.append(f"default.{key} = {value}")
    for key, value in sorted((extra or {}).items()):
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Preset execution


def _execute_run(args):
    run_id, preset_name, config = args
    try:
        report = game_mod.train(config)
        return run_id, RunRecord.from_report(run_id, preset_name, report), None
    except Exception as exc:  # recorded, preset continues
        return run_id, None, f"{type(exc).__name__}: {exc}"


def run_preset(preset, out_dir, parallelism=1):
    """Execute a preset grid and write runs.csv, analysis.json, manifest.

    Individual run failures are recorded in ``failures.txt`` and the rest
    of the preset continues.  Output rows are sorted by run id, so two
    invocations differ only in wall-time columns.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = preset.runs()
    jobs = [(run_id, preset.name, cfg) for run_id, cfg in runs]
    results = []
    failures = []
    if parallelism > 1:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(parallelism) as pool:
            for run_id, rec, err in pool.imap_unordered(_execute_run, jobs):
                (results if rec is not None else failures).append((run_id, rec or err))
    else:
        for job in jobs:
            run_id, rec, err = _execute_run(job)
            (results if rec is not None else failures).append((run_id, rec or err))

    results.sort(key=lambda pair: pair[0])
    records = [rec for _, rec in results]
    write_results(records, out / "runs.csv")
    if failures:
        failures.sort(key=lambda pair: pair[0])
        with open(out / "failures.txt", "w", encoding="utf-8") as fh:
            for run_id, err in failures:
                fh.write(f"{run_id}: {err}\n")

    rows = read_results(out / "runs.csv")
    analysis = analyze_preset(preset, rows)
    with open(out / "analysis.json", "w", encoding="utf-8") as fh:
        json.dump(analysis, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(out / "manifest.txt",
                   config=preset.cells[0] if preset.cells else None,
                   extra={"preset.name": preset.name,
                          "preset.cells": len(preset.cells),
                          "preset.seeds": preset.seeds,
                          "preset.runs": len(runs),
                          "preset.failures": len(failures)})
    return records, analysis


# ---------------------------------------------------------------------------
# Preset-level analyses (always computed from the emitted CSV rows)


def _defined(rows, key):
    return [r for r in rows if not np.isnan(r[key])]


def ks_matrix(rows, metric, group_by, alternative="greater"):
    """Pairwise one-sided KS tests between groups of a metric.

    Entry [i][j] tests whether group i's distribution is greater than
    group j's; the diagonal is blank (null).
    """
    groups = sorted({r[group_by] for r in rows})
    matrix = []
    for gi in groups:
        row = []
        for gj in groups:
            if gi == gj:
                row.append(None)
                continue
            a = [r[metric] for r in _defined(rows, metric) if r[group_by] == gi]
            b = [r[metric] for r in _defined(rows, metric) if r[group_by] == gj]
            if not a or not b:
                row.append(None)
                continue
            res = ks_two_sample(a, b, alternative)
            row.append({"statistic": _fmt(res.statistic), "p_value": _fmt(res.p_value)})
        matrix.append(row)
    return {"groups": groups, "metric": metric, "alternative": alternative,
            "matrix": matrix}


def pooled_spearman(rows, x, y):
    """One Spearman test between two CSV columns over defined rows."""
    pairs = [(r[x], r[y]) for r in rows
             if not np.isnan(r[x]) and not np.isnan(r[y])]
    if len(pairs) < 3:
        return {"x": x, "y": y, "n": len(pairs), "error": "too few defined rows"}
    xs, ys = zip(*pairs)
    try:
        res = spearman(xs, ys)
    except UndefinedCorrelationError:
        return {"x": x, "y": y, "n": len(pairs), "error": "undefined correlation"}
    return {"x": x, "y": y, "n": res.n,
            "statistic": _fmt(res.statistic), "p_value": _fmt(res.p_value)}


def capacity_spearman(rows):
    """Capacity-traversal correlations: metric vs L at fixed V and vice versa."""
    out = {}
    for strategy in sorted({r["strategy"] for r in rows}):
        srows = [r for r in rows if r["strategy"] == strategy]
        table = {}
        for metric in ("ts_train", "ts_test", "acc_train", "acc_test"):
            entries = {}
            for vocab in LENGTH_SWEEP_VOCABS:
                sub = [r for r in srows if r["V"] == vocab and r["L"] in LENGTH_SWEEP]
                entries[f"V={vocab}"] = pooled_spearman(
                    [dict(r, _x=float(r["L"])) for r in sub], "_x", metric)
            for length in VOCAB_SWEEP_LENGTHS:
                sub = [r for r in srows if r["L"] == length and r["V"] in VOCAB_SWEEP]
                entries[f"L={length}"] = pooled_spearman(
                    [dict(r, _x=float(r["V"])) for r in sub], "_x", metric)
            table[metric] = entries
        out[strategy] = table
    return out


def gap_by_cell(rows):
    """Median accuracy/toposim gaps per (attrs, strategy, stimulus, channel)."""
    cells = sorted({(r["attrs"], r["strategy"], r["stimulus"], r["V"], r["L"])
                    for r in rows})
    out = []
    for attrs, strategy, stimulus, vocab, length in cells:
        sub = [r for r in rows if (r["attrs"], r["strategy"], r["stimulus"],
                                   r["V"], r["L"]) == (attrs, strategy, stimulus, vocab, length)]
        acc_gaps = [r["acc_gap"] for r in sub]
        ts_gaps = [r["ts_gap"] for r in _defined(sub, "ts_gap")]
        out.append({
            "attrs": attrs, "strategy": strategy, "stimulus": stimulus,
            "V": vocab, "L": length, "n": len(sub),
            "median_acc_gap": _fmt(float(np.median(acc_gaps))) if acc_gaps else None,
            "median_ts_gap": _fmt(float(np.median(ts_gaps))) if ts_gaps else None,
        })
    return out


def analyze_preset(preset, rows):
    analysis = {"preset": preset.name, "n_rows": len(rows)}
    for kind, kwargs in preset.analyses:
        if kind == "ks_matrix":
            analysis["ks_matrix"] = {}
            for attrs in sorted({r["attrs"] for r in rows}):
                for stim in sorted({r["stimulus"] for r in rows}):
                    sub = [r for r in rows if r["attrs"] == attrs and r["stimulus"] == stim]
                    if sub:
                        analysis["ks_matrix"][f"attrs{attrs}-{stim}"] = ks_matrix(sub, **kwargs)
        elif kind == "pooled_spearman":
            analysis["pooled_spearman"] = pooled_spearman(rows, **kwargs)
        elif kind == "capacity_spearman":
            traversal = [r for r in rows if r["V"] in VOCAB_SWEEP or r["L"] in LENGTH_SWEEP]
            analysis["capacity_spearman"] = capacity_spearman(traversal)
        elif kind == "gap_by_cell":
            analysis["gap_by_cell"] = gap_by_cell(rows)
    return analysis
