"""Command-line interface.

Subcommands: ``train`` (one configured run), ``preset`` (experiment
grids), ``splits`` (train/test split files), ``ilm`` (stability
analytics), ``stats`` (KS / Spearman on value files) and ``report``
(figures + summary from a runs CSV).  ``REFGAME_SEED`` provides the seed
when a config does not.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np


def main(argv=None):
    parser = argparse.ArgumentParser(prog="refgame",
                                     description="Referential-game laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default="refgame_out")

    p_preset = sub.add_parser("preset", help="run an experiment preset grid")
    p_preset.add_argument("--name", required=True)
    p_preset.add_argument("--out", required=True)
    p_preset.add_argument("--seeds", type=int, default=5)
    p_preset.add_argument("--parallel", type=int, default=1)
    p_preset.add_argument("--budget", type=int, default=None,
                          help="override the per-run sample budget")

    p_splits = sub.add_parser("splits", help="write train/test split files")
    p_splits.add_argument("--attrs", type=int, required=True, choices=(2, 3, 4))
    p_splits.add_argument("--strategy", required=True,
                          choices=("interpolation", "extrapolation"))
    p_splits.add_argument("--out", required=True)

    p_ilm = sub.add_parser("ilm", help="iterated-learning stability analytics")
    p_ilm.add_argument("--features", type=int, required=True)
    p_ilm.add_argument("--values", type=int, required=True)
    p_ilm.add_argument("--observations", type=int, default=None)
    p_ilm.add_argument("--objects", type=int, default=0)
    p_ilm.add_argument("--mc", type=int, default=0,
                       help="Monte Carlo trials for confidence intervals")
    p_ilm.add_argument("--seed", type=int, default=0)
    p_ilm.add_argument("--sweep", default=None, metavar="R=a..b",
                       help="emit a CSV over a range of observation counts")
    p_ilm.add_argument("--out", default=None,
                       help="directory for sweep CSV and figure")

    p_stats = sub.add_parser("stats", help="two-sample tests on value files")
    p_stats.add_argument("--test", required=True, choices=("ks", "spearman"))
    p_stats.add_argument("--a", required=True)
    p_stats.add_argument("--b", required=True)
    p_stats.add_argument("--alt", default="two_sided",
                         choices=("two_sided", "greater", "less"))

    p_report = sub.add_parser("report", help="summary CSV and figures from runs.csv")
    p_report.add_argument("--runs", required=True)
    p_report.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    return _COMMANDS[args.command](args)


def _cmd_train(args):
    from . import exprunner, game

    config = exprunner.load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = game.train(config, checkpoint_dir=out)
    record = exprunner.RunRecord.from_report("train-0", "custom", report)
    exprunner.write_results([record], out / "runs.csv")
    exprunner.write_manifest(out / "manifest.txt", config=config,
                             extra={"run.steps": report.steps,
                                    "run.samples_seen": report.samples_seen})
    print(f"steps: {report.steps}")
    print(f"train accuracy: {report.acc_train:.4f}")
    print(f"test accuracy: {report.acc_test:.4f}")
    if report.ts_undefined:
        print("topographic similarity: undefined (degenerate language)")
    else:
        print(f"train toposim: {report.ts_train:.4f}")
        print(f"test toposim: {report.ts_test:.4f}")
    print(f"outputs in {out}")
    return 0


def _cmd_preset(args):
    from . import exprunner

    preset = exprunner.build_preset(args.name, seeds=args.seeds, budget=args.budget)
    records, _ = exprunner.run_preset(preset, args.out, parallelism=args.parallel)
    print(f"{len(records)} runs completed; results in {args.out}")
    return 0


def _cmd_splits(args):
    from . import stimuli

    benchmark = stimuli.build_benchmark(args.attrs, args.strategy)
    summary = stimuli.write_splits(benchmark, args.out)
    print(f"train: {summary['train_count']}  test: {summary['test_count']}  -> {args.out}")
    return 0


def _parse_sweep(spec):
    if not spec.startswith("R="):
        raise SystemExit(f"bad sweep spec {spec!r}; expected R=a..b")
    lo, _, hi = spec[2:].partition("..")
    try:
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise SystemExit(f"bad sweep spec {spec!r}; expected R=a..b") from None
    if lo < 0 or hi < lo:
        raise SystemExit(f"bad sweep range {spec!r}")
    return lo, hi


def _cmd_ilm(args):
    from . import ilm
    from .diffcore import make_rng

    if args.sweep is None and args.observations is None:
        raise SystemExit("ilm requires --observations or --sweep")

    def analytics(r):
        env = ilm.IlmEnv(args.features, args.values, r, n_objects=args.objects)
        e_h = ilm.expressivity_holistic(env)
        e_c = ilm.expressivity_compositional(env)
        try:
            s = ilm.relative_stability(env)
        except ilm.UndefinedStabilityError:
            s = float("nan")
        return env, e_h, e_c, s

    if args.sweep is not None:
        lo, hi = _parse_sweep(args.sweep)
        rows = []
        r = max(lo, 1)
        while r <= hi:
            env, e_h, e_c, s = analytics(r)
            rows.append({"R": r, "b": env.coverage, "E_h": e_h, "E_c": e_c, "S": s})
            r *= 2

        def emit(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["R", "b", "E_h", "E_c", "S"])
            for row in rows:
                writer.writerow([row["R"], f"{row['b']:.6g}", f"{row['E_h']:.6g}",
                                 f"{row['E_c']:.6g}", f"{row['S']:.6g}"])

        if args.out is None:
            emit(sys.stdout)
        else:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "ilm_sweep.csv", "w", newline="", encoding="utf-8") as fh:
                emit(fh)
            from . import report

            fig = report.render_ilm_sweep(rows, args.out)
            print(f"sweep CSV and {fig.name} in {args.out}")
        return 0

    env, e_h, e_c, s = analytics(args.observations)
    print(f"meanings M = {env.n_meanings}, objects N = {env.n_objects}, "
          f"coverage b = {env.coverage:.6g}")
    print(f"holistic expressivity      E_h = {e_h:.6g}")
    print(f"compositional expressivity E_c = {e_c:.6g}")
    print(f"relative stability         S   = {s:.6g}")
    if args.mc > 0:
        rng = make_rng(args.seed)
        for label, lang in (("E_h", "holistic"), ("E_c", "compositional")):
            mean, se = ilm.monte_carlo_expressivity(env, lang, args.mc, rng)
            print(f"monte-carlo {label}: {mean:.6g} +/- {1.96 * se:.3g} (95% CI)")
    return 0


def _cmd_stats(args):
    from . import stats

    a = np.loadtxt(args.a, ndmin=1)
    b = np.loadtxt(args.b, ndmin=1)
    if args.test == "ks":
        res = stats.ks_two_sample(a, b, args.alt)
        print(f"D = {res.statistic:.6g}")
    else:
        try:
            res = stats.spearman(a, b)
        except stats.UndefinedCorrelationError as exc:
            raise SystemExit(f"undefined correlation: {exc}")
        print(f"rho = {res.statistic:.6g}")
    print(f"p = {res.p_value:.6g}")
    return 0


def _cmd_report(args):
    from . import report

    written = report.render_report(args.runs, args.out)
    for path in written:
        print(path)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "preset": _cmd_preset,
    "splits": _cmd_splits,
    "ilm": _cmd_ilm,
    "stats": _cmd_stats,
    "report": _cmd_report,
}


if __name__ == "__main__":
    sys.exit(main())
