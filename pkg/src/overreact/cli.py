"""Batch command line: ingest, synth, label, train, backtest, report, run.

Exit codes: 0 success (no-trade outcomes included), 1 configuration
error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import backtest as bt
from .analytics import annualization_factor, jobson_korkie, perf_report, write_jk_csv
from .emotions import FeatureScaler, read_tweets_csv, write_tweets_csv
from .errors import ConfigError, DataError, OverreactError, ParameterError
from .experiment import (HOLDING_CHOICES, ExperimentConfig, StageError, default_output_dir,
                         emit_reports, fit_cell, labelled_rows, parse_holding,
                         prepare_frequency, run_experiment)
from .labeling import LabelParams, label, rolling_volatility, write_labels_csv
from .market_data import (Frequency, clean_bars, filter_session, log_returns, read_bars_csv,
                          resample, write_bars_csv)
from .modeling import SplitSpec, chronological_split, model_from_json
from .synth import STRONG_MOMENTUM, ScenarioConfig, generate, write_corpus

log = logging.getLogger("overreact")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
PRESETS = {"default": {}, "strong_momentum": STRONG_MOMENTUM}


def _out(args) -> Path:
    return Path(args.out or default_output_dir())


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True), encoding="utf-8")


def _load_clean(path, minutes):
    bars, rep = read_bars_csv(path, Frequency.of(minutes))
    bars, rep2 = clean_bars(bars)
    return filter_session(bars), rep + rep2


def cmd_ingest(args) -> int:
    bars, report = _load_clean(args.bars, args.source_frequency)
    target = Frequency.of(args.frequency or args.source_frequency)
    if target != bars.frequency:
        bars = resample(bars, target)
    out = _out(args)
    write_bars_csv(bars, out / "bars.csv")
    (out / "clean_report.json").write_text(report.to_json(), encoding="utf-8")
    if args.tweets:
        cfg = ExperimentConfig(bars_path=args.bars, tweets_path=args.tweets, frequencies=(target.minutes,))
        tweets = read_tweets_csv(args.tweets)
        write_tweets_csv(tweets, out / "tweets.csv")
        fd = prepare_frequency(bars, tweets, target, cfg)
        fd.features.to_frame().to_csv(out / "features.csv", float_format="%.17g")
    log.info("ingested %d bars -> %s", len(bars), out)
    return EXIT_OK


def _scenario(args) -> ScenarioConfig:
    kw = dict(PRESETS[args.preset])
    for name in ("seed", "days", "frequency", "effect", "spike_rate", "effect_strength",
                 "effect_sign", "effect_duration", "spike_return", "base_vol", "persistence"):
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = val
    return ScenarioConfig(**kw)


def cmd_synth(args) -> int:
    cfg = _scenario(args)
    paths = write_corpus(generate(cfg), _out(args), cfg)
    log.info("synthetic corpus written: %s", ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_label(args) -> int:
    bars, _ = _load_clean(args.bars, args.frequency)
    returns = log_returns(bars)
    vols = rolling_volatility(returns, args.window, args.include_current_return)
    labels = label(returns, vols, LabelParams(args.theta, args.tc, args.window,
                                              args.include_current_return))
    path = _out(args) / "labels.csv"
    write_labels_csv(labels, path)
    log.info("%d labels -> %s", len(labels.states), path)
    return EXIT_OK


def _data_config(args, **extra) -> ExperimentConfig:
    return ExperimentConfig(bars_path=args.bars, tweets_path=args.tweets,
                            source_frequency=args.frequency, frequencies=(args.frequency,),
                            tc=args.tc, window=args.window, seed=args.seed, **extra)


def _prepared(cfg: ExperimentConfig):
    cfg.validate_paths()
    bars, _ = _load_clean(cfg.bars_path, cfg.source_frequency)
    freq = Frequency.of(cfg.frequencies[0])
    return prepare_frequency(bars, read_tweets_csv(cfg.tweets_path), freq, cfg)


def cmd_train(args) -> int:
    cfg = _data_config(args, thetas=(args.theta,), families=(args.family,), n_iter=args.n_iter,
                       cv_folds=args.cv_folds)
    fd = _prepared(cfg)
    cell = fit_cell(cfg, fd, args.theta, args.family, key=f"{fd.freq.minutes}m_theta{args.theta:g}_{args.family}")
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(cell.model.to_json(), encoding="utf-8")
    cell.search.write_csv(out / "cv.csv")
    _write_json(out / "split.json", {"train": len(cell.split.train),
                                     "validation": len(cell.split.validation),
                                     "test": len(cell.split.test),
                                     "best_params": cell.search.best.params,
                                     "train_distribution": cell.distribution.tolist()})
    log.info("trained %s -> %s", args.family, out)
    return EXIT_OK


def cmd_backtest(args) -> int:
    model = model_from_json(Path(args.model).read_text(encoding="utf-8"))
    scaler = FeatureScaler.from_dict(model.metadata["scaler"])
    theta = float(model.metadata.get("theta", args.theta))
    cfg = _data_config(args)
    fd = _prepared(cfg)
    rows, _ = labelled_rows(fd, LabelParams(theta, args.tc, args.window))
    if args.segment != "all":
        split = chronological_split(len(rows), SplitSpec())
        rows = rows.take(getattr(split, args.segment))
    if len(rows) < 2:
        raise DataError("segment has fewer than two rows")
    seg = fd.bars.between(rows.timestamps[0], rows.timestamps[-1])
    sig = np.zeros(len(seg), dtype=np.int8)
    sig[np.searchsorted(seg.timestamps, rows.timestamps)] = bt.generate_signals(
        model.predict_proba(scaler.transform(rows)), args.c)
    result = bt.simulate(seg, sig, parse_holding(args.holding, args.c), args.tc)
    out = _out(args)
    result.equity.write_csv(out / "equity.csv")
    bt.write_trades_csv(result.trades, out / "trades.csv")
    rep = perf_report(result.equity, fd.freq, n_trades=len(result.trades))
    (out / "perf.json").write_text(rep.to_json(), encoding="utf-8")
    log.info("backtest status %s, %d trades", result.status, len(result.trades))
    return EXIT_OK


def cmd_report(args) -> int:
    out = _out(args)
    freq = Frequency.of(args.frequency)
    curves = {}
    for p in args.equity:
        name, k = Path(p).stem, 1
        while name in curves:
            k += 1
            name = f"{Path(p).stem}_{k}"
        curves[name] = bt.EquityCurve.read_csv(p)
    for name, eq in curves.items():
        (out / "perf").mkdir(parents=True, exist_ok=True)
        (out / "perf" / f"{name}.json").write_text(perf_report(eq, freq).to_json(), encoding="utf-8")
    names = list(curves)
    rows = []
    for other in names[1:]:
        res = jobson_korkie(curves[names[0]], curves[other], annualization_factor(freq),
                            labels=(names[0], other))
        rows.append({"timeframe": str(freq), "comparison": f"{names[0]} vs. {other}",
                     "model": names[0], "ml_sharpe": res.sr1_annualized,
                     "over_sharpe": res.sr2_annualized, "z": res.z, "p": res.p,
                     "winner": res.winner})
    if rows:
        write_jk_csv(rows, out / "jk.csv")
    return EXIT_OK


def _run_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_toml(args.config)
    elif args.bars:
        cfg = ExperimentConfig(bars_path=args.bars, tweets_path=args.tweets,
                               source_frequency=args.source_frequency)
    else:
        cfg = ExperimentConfig(synth=_scenario(args))
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    for name in ("frequencies", "thetas", "families", "holdings"):
        val = getattr(args, name)
        if val:
            over[name] = tuple(val)
    if args.n_iter is not None:
        over["n_iter"] = args.n_iter
    return replace(cfg, **over) if over else cfg


def cmd_run(args) -> int:
    cfg = _run_config(args)
    report = run_experiment(cfg)
    out = Path(args.out or cfg.output_dir or default_output_dir())
    emit_reports(report, out)
    statuses = sorted({c["status"] for c in report.cells.values()})
    log.info("run complete (%s) -> %s", ", ".join(statuses) or "empty", out)
    return EXIT_OK


def _add_data(p, need_tweets=True):
    p.add_argument("--bars", required=True, help="bars CSV")
    if need_tweets:
        p.add_argument("--tweets", required=True, help="tweet emotion CSV")
    p.add_argument("--frequency", type=int, default=5, help="bar minutes")
    p.add_argument("--tc", type=float, default=0.001)
    p.add_argument("--window", type=int, default=20)


def _add_scenario(p):
    p.add_argument("--preset", choices=sorted(PRESETS), default="default")
    p.add_argument("--days", type=int)
    p.add_argument("--effect", choices=("none", "momentum", "mean_revert"))
    p.add_argument("--spike-rate", type=float)
    p.add_argument("--effect-strength", type=float)
    p.add_argument("--effect-sign", type=int, choices=(-1, 0, 1))
    p.add_argument("--effect-duration", type=int)
    p.add_argument("--spike-return", type=float)
    p.add_argument("--base-vol", type=float)
    p.add_argument("--persistence", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="overreact", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", help="output directory (default: $OVERREACT_OUTPUT_DIR)")
        p.set_defaults(fn=fn)
        return p

    p = command("ingest", cmd_ingest, "clean, session-filter and resample a bars CSV")
    p.add_argument("--bars", required=True)
    p.add_argument("--tweets")
    p.add_argument("--source-frequency", type=int, default=1)
    p.add_argument("--frequency", type=int)

    p = command("synth", cmd_synth, "write a seeded synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frequency", type=int)
    _add_scenario(p)

    p = command("label", cmd_label, "volatility-scaled overreaction labels")
    _add_data(p, need_tweets=False)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--include-current-return", action="store_true")

    p = command("train", cmd_train, "fit one model family on the training segment")
    _add_data(p)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--family", default="gbt")
    p.add_argument("--n-iter", type=int, default=20)
    p.add_argument("--cv-folds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    p = command("backtest", cmd_backtest, "simulate a saved model's signals")
    _add_data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--theta", type=float, default=1.5)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--holding", choices=HOLDING_CHOICES, default="fixed1")
    p.add_argument("--segment", choices=("train", "validation", "test", "all"), default="test")
    p.add_argument("--seed", type=int, default=0)

    p = command("report", cmd_report, "performance reports and Sharpe comparisons for equity CSVs")
    p.add_argument("--equity", nargs="+", required=True)
    p.add_argument("--frequency", type=int, default=5)

    p = command("run", cmd_run, "end-to-end experiment grid")
    p.add_argument("--config", help="TOML experiment file")
    p.add_argument("--bars")
    p.add_argument("--tweets")
    p.add_argument("--source-frequency", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--frequency", type=int, dest="frequency")
    p.add_argument("--frequencies", type=int, nargs="+")
    p.add_argument("--thetas", type=float, nargs="+")
    p.add_argument("--families", nargs="+")
    p.add_argument("--holdings", nargs="+", choices=HOLDING_CHOICES)
    p.add_argument("--n-iter", type=int)
    _add_scenario(p)
    return ap


def exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, (ConfigError, ParameterError)):
        return EXIT_CONFIG
    if isinstance(cause, (DataError, OSError)):
        return EXIT_DATA
    return EXIT_INTERNAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (OverreactError, OSError, ValueError) as exc:
        code = exit_code(exc)
        print(f"overreact {args.command}: {exc}", file=sys.stderr)
        return code
    except Exception as exc:  # noqa: BLE001
        print(f"overreact {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
