"""End-to-end experiment grid: label -> train -> select -> backtest -> report.

Grid order is frequency -> theta -> model family. Every cell draws its
seed from ``derive_seed(master, frequency, theta, family)`` so cells are
independent of evaluation order. The test segment of each cell is read
exactly once, after the threshold and holding policy are fixed.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import backtest as bt
from .analytics import (annualization_factor, jobson_korkie, perf_report, shap_summary,
                        write_jk_csv)
from .analytics.metrics import sharpe
from .emotions import (FeatureTable, aggregate_emotions, assemble_features, descriptive_stats,
                       fit_scaler, read_tweets_csv, transform)
from .errors import (ConfigError, InsufficientDataError, NoSignalError, OverreactError,
                     UndefinedMetricError)
from .labeling import (LabelParams, State, class_distribution, label, rolling_volatility,
                       theta_grid)
from .market_data import (BarSeries, CleanReport, Frequency, clean_bars, filter_session,
                          log_returns, read_bars_csv, resample)
from .modeling import (ClassifierSpec, chronological_split, class_weights, classification_report,
                       derive_seed, expanding_cv_folds, predicted_states, randomized_search,
                       train)
from .modeling.validation import SplitSpec
from .synth import ScenarioConfig, generate

log = logging.getLogger(__name__)

OUTPUT_ENV = "OVERREACT_OUTPUT_DIR"
HOLDING_CHOICES = ("fixed1", "fixed5", "fixed10", "fixed15", "until_opposite")


def parse_holding(name: str, c: float = 0.5) -> bt.SignalRule:
    if name == "until_opposite":
        return bt.SignalRule(c, "until_opposite")
    if name.startswith("fixed"):
        return bt.SignalRule(c, "fixed", int(name[5:]))
    raise ConfigError(f"unknown holding policy {name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    bars_path: str | None = None
    tweets_path: str | None = None
    synth: ScenarioConfig | None = None
    source_frequency: int = 1
    frequencies: tuple = (5,)
    thetas: tuple = tuple(theta_grid())
    tc: float = 0.001
    window: int = 20
    include_current_return: bool = False
    forward_fill_emotions: bool = False
    split: SplitSpec = SplitSpec()
    families: tuple = ("gbt",)
    n_iter: int = 20
    cv_folds: int = 3
    cv_metric: str = "macro_f1"
    search_spaces: dict = field(default_factory=dict)
    model_params: dict = field(default_factory=dict)
    c_grid: tuple = bt.THRESHOLD_GRID
    holdings: tuple = HOLDING_CHOICES
    contrarian_benchmark: bool = False
    seed: int = 0
    shap_rows: int = 20
    shap_background: int = 50
    output_dir: str | None = None

    def __post_init__(self):
        has_paths = self.bars_path is not None
        if has_paths == (self.synth is not None):
            raise ConfigError("configure exactly one of bars_path or synth")
        if has_paths and self.tweets_path is None:
            raise ConfigError("tweets_path is required with bars_path")
        if any(t <= 0 for t in self.thetas):
            raise ConfigError("theta values must be positive")
        if not self.thetas or not self.families or not self.frequencies:
            raise ConfigError("thetas, families and frequencies must be non-empty")
        for h in self.holdings:
            parse_holding(h)

    def validate_paths(self):
        for p in (self.bars_path, self.tweets_path):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"input path does not exist: {p}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        return _jsonable(d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if d.get("synth") is not None:
            d["synth"] = ScenarioConfig(**d["synth"])
        if isinstance(d.get("split"), dict):
            d["split"] = SplitSpec(**d["split"])
        for key in ("frequencies", "thetas", "families", "c_grid", "holdings"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.datetime64, dt.date, dt.time)):
        return str(obj)
    return obj


class StageError(OverreactError):
    def __init__(self, stage, key, cause):
        self.stage, self.key, self.cause = stage, key, cause
        super().__init__(f"stage {stage} failed for {key}: {cause}")


class OneTouch:
    """Holds the test segment; ``read`` may be called once."""

    def __init__(self, X, y, key):
        self._X, self._y, self.key = X, y, key
        self.reads = 0

    def read(self):
        if self.reads:
            raise RuntimeError(f"test segment for {self.key} read twice")
        self.reads += 1
        return self._X, self._y


@dataclass
class StrategyResult:
    name: str
    key: tuple  # (frequency, theta, family or None, kind)
    result: bt.SimulationResult
    perf: object


@dataclass
class ExperimentReport:
    config: ExperimentConfig | None = None
    strategies: dict = field(default_factory=dict)
    cells: dict = field(default_factory=dict)
    jk_rows: list = field(default_factory=list)
    descriptive: dict = field(default_factory=dict)
    shap: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    cv_tables: dict = field(default_factory=dict)
    clean_report: CleanReport | None = None
    test_reads: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)


@dataclass
class FrequencyData:
    freq: Frequency
    bars: BarSeries
    returns: object
    vols: object
    features: FeatureTable


def load_inputs(cfg: ExperimentConfig):
    if cfg.synth is not None:
        corpus = generate(cfg.synth)
        bars, tweets = corpus.bars, corpus.tweets
        report = CleanReport()
    else:
        cfg.validate_paths()
        bars, report = read_bars_csv(cfg.bars_path, Frequency.of(cfg.source_frequency))
        tweets = read_tweets_csv(cfg.tweets_path)
    bars, rep2 = clean_bars(bars)
    return filter_session(bars), tweets, report + rep2


def prepare_frequency(bars: BarSeries, tweets, freq: Frequency, cfg: ExperimentConfig) -> FrequencyData:
    b = resample(bars, freq) if bars.frequency != freq else bars
    b = filter_session(b, b.session)
    returns = log_returns(b)
    vols = rolling_volatility(returns, cfg.window, cfg.include_current_return)
    emo = aggregate_emotions(tweets, b.timestamps, freq, cfg.forward_fill_emotions)
    feats = assemble_features(returns, b, vols, emo)
    return FrequencyData(freq, b, returns, vols, feats)


def _sharpe_or_none(result: bt.SimulationResult, A):
    try:
        return sharpe(result.equity.returns, A)
    except (UndefinedMetricError, InsufficientDataError):
        return None


def _bar_positions(bars: BarSeries, ts: np.ndarray) -> np.ndarray:
    return np.searchsorted(bars.timestamps, ts)


def _segment(fd: FrequencyData, row_ts: np.ndarray):
    seg = fd.bars.between(row_ts[0], row_ts[-1])
    return seg, _bar_positions(seg, row_ts)


def _signals_for(seg: BarSeries, pos: np.ndarray, sig: np.ndarray) -> np.ndarray:
    out = np.zeros(len(seg), dtype=np.int8)
    out[pos] = sig
    return out


def _cell_key(freq, theta, family):
    return f"{freq.minutes}m_theta{theta:g}_{family}"


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    report = ExperimentReport(config=cfg)
    t0 = time.perf_counter()
    try:
        bars, tweets, clean = load_inputs(cfg)
    except OverreactError as exc:
        raise StageError("ingest", "inputs", exc) from exc
    report.clean_report = clean
    best_ml, best_over = {}, {}
    for minutes in cfg.frequencies:
        freq = Frequency.of(minutes)
        try:
            fd = prepare_frequency(bars, tweets, freq, cfg)
        except OverreactError as exc:
            raise StageError("features", str(freq), exc) from exc
        report.descriptive[str(freq)] = descriptive_stats(fd.features)
        for theta in cfg.thetas:
            for family in cfg.families:
                key = _cell_key(freq, theta, family)
                try:
                    _run_cell(cfg, fd, float(theta), family, key, report, best_ml, best_over)
                except OverreactError as exc:
                    raise StageError("cell", key, exc) from exc
        _add_jk(report, str(freq), best_ml.get(str(freq)), best_over.get(str(freq)))
    # global comparison: single best cells across the whole grid
    ml = [s for s in best_ml.values() if s is not None]
    over = [s for s in best_over.values() if s is not None]
    g_ml = max(ml, key=lambda s: s.perf.sharpe, default=None)
    g_over = max(over, key=lambda s: s.perf.sharpe, default=None)
    if report.cells:
        _add_jk(report, "GLOBAL", g_ml, g_over)
    report.timing["total_seconds"] = time.perf_counter() - t0
    return report


def _better(cur, new):
    if new.perf.sharpe is None:
        return cur
    if cur is None or new.perf.sharpe > cur.perf.sharpe:
        return new
    return cur


def _add_jk(report, timeframe, ml, over):
    row = {"timeframe": timeframe, "comparison": "Best ML vs. Best Over",
           "model": ml.key[2] if ml else None,
           "ml_sharpe": ml.perf.sharpe if ml else None,
           "over_sharpe": over.perf.sharpe if over else None,
           "z": None, "p": None, "winner": "undefined"}
    if ml is not None and over is not None:
        A = annualization_factor(ml.key[0])
        try:
            res = jobson_korkie(ml.result.equity, over.result.equity, A, labels=("ml", "over"))
            row.update(z=res.z, p=res.p, winner=res.winner)
        except (UndefinedMetricError, InsufficientDataError) as exc:
            row["winner"] = f"undefined: {exc}"
    report.jk_rows.append(row)


@dataclass
class FittedCell:
    rows: FeatureTable
    y: np.ndarray
    split: object
    scaler: object
    search: object
    model: object
    distribution: np.ndarray
    seed: int


def labelled_rows(fd: FrequencyData, params: LabelParams):
    """Feature rows that carry a label, with their states."""
    labels = label(fd.returns, fd.vols, params)
    _, fi, li = np.intersect1d(fd.features.ret_index, labels.origin, return_indices=True)
    return fd.features.take(fi), labels.states[li].astype(np.int8)


def fit_cell(cfg: ExperimentConfig, fd: FrequencyData, theta: float, family: str,
             key: str = "") -> FittedCell:
    """Split, scale, search and fit one (frequency, theta, family) cell on train only."""
    params = LabelParams(theta, cfg.tc, cfg.window, cfg.include_current_return)
    rows, y = labelled_rows(fd, params)
    split = chronological_split(len(y), cfg.split)
    seed = derive_seed(cfg.seed, fd.freq.minutes, theta, family)
    scaler = fit_scaler(rows.take(split.train))
    X_tr = transform(scaler, rows.take(split.train))
    y_tr = y[split.train]
    dist = class_distribution(y_tr)
    folds = expanding_cv_folds(len(y_tr), cfg.cv_folds, cfg.split.embargo)
    search = randomized_search(family, cfg.search_spaces.get(family), X_tr, y_tr, folds,
                               cfg.n_iter, seed, cfg.cv_metric, cfg.model_params.get(family))
    model = train(search.best, X_tr, y_tr, class_weights(dist), feature_names=rows.names)
    model.metadata["scaler"] = scaler.to_dict()
    model.metadata["cell"] = key
    model.metadata["theta"] = theta
    model.metadata["frequency"] = fd.freq.minutes
    return FittedCell(rows, y, split, scaler, search, model, dist, seed)


def _run_cell(cfg, fd: FrequencyData, theta, family, key, report, best_ml, best_over):
    freq = fd.freq
    A = annualization_factor(freq)
    params = LabelParams(theta, cfg.tc, cfg.window, cfg.include_current_return)
    cell = fit_cell(cfg, fd, theta, family, key)
    rows, y, split, scaler, search, model = (cell.rows, cell.y, cell.split, cell.scaler,
                                             cell.search, cell.model)
    seed, dist = cell.seed, cell.distribution
    X_tr = transform(scaler, rows.take(split.train))
    X_va = transform(scaler, rows.take(split.validation))
    test_rows = rows.take(split.test)
    guard = OneTouch(transform(scaler, test_rows), y[split.test], key)

    seg_tr, pos_tr = _segment(fd, rows.timestamps[split.train])
    seg_va, pos_va = _segment(fd, rows.timestamps[split.validation])
    P_tr, P_va = model.predict_proba(X_tr), model.predict_proba(X_va)
    candidates = []
    for hname in cfg.holdings:
        for c in cfg.c_grid:
            rule = parse_holding(hname, c)
            r_tr = bt.simulate(seg_tr, _signals_for(seg_tr, pos_tr, bt.generate_signals(P_tr, c)),
                               rule, cfg.tc)
            r_va = bt.simulate(seg_va, _signals_for(seg_va, pos_va, bt.generate_signals(P_va, c)),
                               rule, cfg.tc)
            candidates.append(bt.Candidate(c, rule, _sharpe_or_none(r_tr, A),
                                           _sharpe_or_none(r_va, A), len(r_tr.trades)))
    try:
        choice = bt.select_threshold(candidates)
        selection = {"c": choice.c, "holding": choice.rule.label, "confirmed": choice.confirmed,
                     "status": "ok"}
        rule = choice.rule
    except NoSignalError:
        rule = parse_holding(cfg.holdings[0], max(cfg.c_grid))
        selection = {"c": rule.c, "holding": rule.label, "confirmed": False,
                     "status": "no_train_signal"}

    # benchmark holding chosen on training Sharpe only
    over_rule, over_best = None, None
    for hname in cfg.holdings:
        r = parse_holding(hname, rule.c)
        res = bt.benchmark_overreaction(fd.returns, fd.vols, params, r, seg_tr, cfg.tc,
                                        cfg.contrarian_benchmark)
        s = _sharpe_or_none(res, A)
        if over_rule is None or (s is not None and (over_best is None or s > over_best)):
            over_rule, over_best = r, s

    # the single test read
    X_te, y_te = guard.read()
    report.test_reads[key] = guard.reads
    seg_te, pos_te = _segment(fd, test_rows.timestamps)
    P_te = model.predict_proba(X_te)
    sig_te = _signals_for(seg_te, pos_te, bt.generate_signals(P_te, rule.c))
    res_model = bt.simulate(seg_te, sig_te, rule, cfg.tc)
    res_bh = bt.benchmark_buy_hold(seg_te, cfg.tc)
    res_rand = bt.benchmark_random(seg_te, dist, rule, cfg.tc, derive_seed(seed, "random"))
    res_over = bt.benchmark_overreaction(fd.returns, fd.vols, params, over_rule, seg_te, cfg.tc,
                                         cfg.contrarian_benchmark)

    clf = classification_report(model, X_te, y_te)
    prior_pred = predicted_states(np.tile(dist, (len(y_te), 1)))
    baseline_acc = float((prior_pred == y_te).mean())

    strategies = {}
    for kind, res in (("model", res_model), ("buy_hold", res_bh), ("random", res_rand),
                      ("overreaction", res_over)):
        name = f"{key}/{kind}"
        s = StrategyResult(name, (freq, theta, family, kind), res,
                           perf_report(res.equity, freq, n_trades=len(res.trades)))
        report.strategies[name] = s
        strategies[kind] = s
    f = str(freq)
    best_ml[f] = _better(best_ml.get(f), strategies["model"])
    best_over[f] = _better(best_over.get(f), strategies["overreaction"])

    # Shapley summary on a seeded sample of the (already read) test rows
    rng = np.random.default_rng(derive_seed(seed, "shap"))
    bg = X_tr[np.sort(rng.choice(len(X_tr), min(cfg.shap_background, len(X_tr)), replace=False))]
    pick = np.sort(rng.choice(len(X_te), min(cfg.shap_rows, len(X_te)), replace=False))
    summary = shap_summary(model, X_te[pick], bg, names=rows.names) if cfg.shap_rows > 0 else None
    if summary is not None:
        report.shap[key] = (summary, test_rows.values[pick])

    report.models[key] = model
    report.cv_tables[key] = search
    report.cells[key] = {
        "frequency": freq.minutes,
        "theta": theta,
        "family": family,
        "seed": seed,
        "n_rows": int(len(y)),
        "split": {"train": int(len(split.train)), "validation": int(len(split.validation)),
                  "test": int(len(split.test)), "embargoed": int(len(split.embargoed))},
        "train_distribution": dist.tolist(),
        "best_params": search.best.params,
        "selection": selection,
        "overreaction_holding": over_rule.label,
        "test_classification": clf.to_dict(),
        "baseline_accuracy": baseline_acc,
        "status": res_model.status,
        "shap_ranking": summary.ranking() if summary is not None else None,
        "performance": {k: s.perf.to_dict() for k, s in strategies.items()},
    }


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def emit_reports(report: ExperimentReport, out_dir) -> list[Path]:
    """Write the bundle; returns written paths (timing.json excluded from determinism)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []

    def put(rel, text):
        p = out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        written.append(p)

    for name, s in report.strategies.items():
        base = name.replace("/", "__")
        s.result.equity.write_csv(out / "equity" / f"{base}.csv")
        bt.write_trades_csv(s.result.trades, out / "trades" / f"{base}.csv")
        written += [out / "equity" / f"{base}.csv", out / "trades" / f"{base}.csv"]
        put(f"perf/{base}.json", s.perf.to_json())
    if report.strategies:
        write_jk_csv(report.jk_rows, out / "jk.csv")
        written.append(out / "jk.csv")
    for key, cell in report.cells.items():
        put(f"cells/{key}.json", _dump(cell))
    for key, model in report.models.items():
        put(f"models/{key}.json", model.to_json())
    for key, search in report.cv_tables.items():
        search.write_csv(out / "cv" / f"{key}.csv")
        written.append(out / "cv" / f"{key}.csv")
    for key, (summary, raw) in report.shap.items():
        summary.write_csv(out / "shap" / f"{key}.csv", feature_values=raw)
        written.append(out / "shap" / f"{key}.csv")
    for f, table in report.descriptive.items():
        table.to_csv(out / f"descriptive_{f}.csv", float_format="%.17g")
        written.append(out / f"descriptive_{f}.csv")
    if report.clean_report is not None:
        put("clean_report.json", report.clean_report.to_json())
    manifest = {
        "package_version": _version(),
        "config": report.config.to_dict() if report.config else None,
        "config_hash": report.config.config_hash() if report.config else None,
        "master_seed": report.config.seed if report.config else None,
        "cells": {k: {"seed": c["seed"], "status": c["status"]} for k, c in report.cells.items()},
        "test_reads": report.test_reads,
        "annualization_note": "N_i per frequency: 1m=390, 5m=78, 10m=39, 15m=26 (6.5 h basis)",
        "files": sorted(str(p.relative_to(out)) for p in written),
    }
    put("manifest.json", _dump(manifest))
    if report.timing:
        (out / "timing.json").write_text(_dump(report.timing), encoding="utf-8")
    return written


def _version():
    from . import __version__

    return __version__


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "overreact-out")
