import dataclasses
import json

import numpy as np
import pytest

from overreact import cli, experiment
from overreact.analytics import perf_report
from overreact.backtest import benchmark_buy_hold
from overreact.errors import ConfigError
from overreact.experiment import (ExperimentConfig, ExperimentReport, StageError,
                                  StrategyResult, emit_reports, run_experiment)
from overreact.market_data import Frequency
from overreact.synth import STRONG_MOMENTUM, ScenarioConfig

from conftest import make_bars

SMALL = ScenarioConfig(seed=3, days=6, **STRONG_MOMENTUM)


def small_config(**kw):
    base = dict(synth=SMALL, thetas=(1.5,), families=("logistic",), n_iter=1, seed=2,
                shap_rows=3, shap_background=5)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_invariants(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig()
    with pytest.raises(ConfigError):
        ExperimentConfig(synth=SMALL, bars_path="x.csv", tweets_path="y.csv")
    with pytest.raises(ConfigError):
        ExperimentConfig(synth=SMALL, thetas=(0.0,))
    cfg = ExperimentConfig(bars_path=str(tmp_path / "missing.csv"), tweets_path="t.csv")
    with pytest.raises(ConfigError):
        cfg.validate_paths()


def test_config_hash_tracks_fields():
    base = small_config()
    assert base.config_hash() == small_config().config_hash()
    mutations = {"thetas": (2.0,), "tc": 0.002, "window": 10, "families": ("gbt",), "n_iter": 2,
                 "seed": 3, "c_grid": (0.5,), "holdings": ("fixed1",),
                 "synth": dataclasses.replace(SMALL, seed=4)}
    hashes = {base.config_hash()}
    for name, value in mutations.items():
        h = dataclasses.replace(base, **{name: value}).config_hash()
        assert h not in hashes, name
        hashes.add(h)
    # output location is not part of the experiment identity
    assert dataclasses.replace(base, output_dir="/elsewhere").config_hash() == base.config_hash()


def test_toml_loading(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text('thetas = [1.5, 2.0]\nfamilies = ["gbt"]\nseed = 7\n'
                 '[synth]\nseed = 1\ndays = 4\n[split]\ntrain = 0.6\nvalidation = 0.2\n'
                 'test = 0.2\nembargo = 1\n')
    cfg = ExperimentConfig.from_toml(p)
    assert cfg.thetas == (1.5, 2.0) and cfg.synth.days == 4 and cfg.seed == 7
    bad = tmp_path / "bad.toml"
    bad.write_text("nonsense_key = 1\n[synth]\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_toml(bad)


def test_empty_bundle_writes_manifest_only(tmp_path):
    emit_reports(ExperimentReport(), tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json"]


def test_two_strategies_give_two_curves_and_one_jk(tmp_path):
    bars = make_bars(100 * np.exp(np.cumsum(np.random.default_rng(0).normal(0, 0.01, 60))))
    rep = ExperimentReport()
    freq = Frequency.of(5)
    for name in ("a", "b"):
        res = benchmark_buy_hold(bars, 0.001 if name == "a" else 0.002)
        rep.strategies[name] = StrategyResult(name, (freq, 1.5, "gbt", name), res,
                                              perf_report(res.equity, freq))
    emit_reports(rep, tmp_path)
    assert len(list((tmp_path / "equity").glob("*.csv"))) == 2
    assert (tmp_path / "jk.csv").exists()


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_reports(ExperimentReport(), blocker / "sub")


def test_run_structure_and_one_touch(tmp_path, monkeypatch):
    reads = []

    class Counting(experiment.OneTouch):
        def read(self):
            reads.append(self.key)
            return super().read()

    monkeypatch.setattr(experiment, "OneTouch", Counting)
    cfg = small_config(thetas=(1.5, 2.0), families=("logistic", "prior"))
    rep = run_experiment(cfg)
    assert sorted(reads) == sorted(rep.cells) and len(reads) == 4
    assert all(v == 1 for v in rep.test_reads.values())
    cell = next(iter(rep.cells))
    kinds = sorted(n.split("/")[1] for n in rep.strategies if n.startswith(cell + "/"))
    assert kinds == ["buy_hold", "model", "overreaction", "random"]
    assert [r["timeframe"] for r in rep.jk_rows] == ["5min", "GLOBAL"]
    emit_reports(rep, tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config_hash"] == cfg.config_hash()
    assert set(man["cells"]) == set(rep.cells)


def test_guard_refuses_second_read():
    g = experiment.OneTouch(np.zeros((2, 2)), np.zeros(2), "k")
    g.read()
    with pytest.raises(RuntimeError):
        g.read()


def test_prior_model_yields_no_trades_status(tmp_path):
    cfg = small_config(families=("prior",))
    rep = run_experiment(cfg)
    (cell,) = rep.cells.values()
    assert cell["status"] == "no_trades"
    assert cell["selection"]["status"] == "no_train_signal"
    code = cli.main(["run", "--days", "6", "--preset", "strong_momentum", "--thetas", "1.5",
                     "--families", "prior", "--n-iter", "1", "--out", str(tmp_path)])
    assert code == 0


def test_stage_error_names_key():
    cfg = small_config(window=5000)
    with pytest.raises(StageError) as info:
        run_experiment(cfg)
    assert info.value.stage == "features" and "5min" in str(info.value)
