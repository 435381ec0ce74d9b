"""Signal generation, cost-aware execution and benchmark strategies.

Timing: a signal stamped at bar t is decided at t's close and executed at
the open of bar t+1 (previous close if the open is missing). Positions
never stay open across a day boundary or past the last bar; both force a
close at that bar's close.

Costs, in log-return units: each ordinary entry or exit leg costs ``tc``,
so a round trip costs 2*tc. A direct reversal (long -> short or back) is
charged 2*tc for the closing leg plus 2*tc for the opening leg, 4*tc in
the bar where it happens.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, NoSignalError, ParameterError
from .labeling import LabelParams, VolatilitySeries, label
from .market_data import BarSeries, ReturnSeries

LONG, FLAT, SHORT = 1, 0, -1
THRESHOLD_GRID = tuple(round(0.2 + 0.1 * k, 1) for k in range(7))
HOLDING_PERIODS = (1, 5, 10, 15)


@dataclass(frozen=True)
class SignalRule:
    c: float = 0.5
    holding: str = "fixed"  # "fixed" or "until_opposite"
    h: int = 1

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ParameterError(f"threshold c must be in (0, 1), got {self.c}")
        if self.holding not in ("fixed", "until_opposite"):
            raise ParameterError(f"unknown holding policy {self.holding!r}")
        if self.holding == "fixed" and self.h < 1:
            raise ParameterError("fixed holding period must be >= 1")

    @property
    def label(self) -> str:
        return f"fixed{self.h}" if self.holding == "fixed" else "until_opposite"


def generate_signals(probs, c: float) -> np.ndarray:
    """Long if p_up > c, short if p_down > c; when both clear c the larger
    wins and an exact tie stays flat. ``probs`` columns: (down, neutral, up)."""
    p = np.asarray(probs, dtype=float)
    down, up = p[:, 0], p[:, 2]
    long_ = up > c
    short = down > c
    both = long_ & short
    sig = np.zeros(len(p), dtype=np.int8)
    sig[long_ & ~short] = LONG
    sig[short & ~long_] = SHORT
    sig[both & (up > down)] = LONG
    sig[both & (down > up)] = SHORT
    return sig


@dataclass(frozen=True)
class Trade:
    side: int
    entry_ts: np.datetime64
    entry_px: float
    exit_ts: np.datetime64
    exit_px: float
    gross: float
    cost: float
    net: float


@dataclass(frozen=True, eq=False)
class EquityCurve:
    timestamps: np.ndarray
    position: np.ndarray
    returns: np.ndarray  # net per-interval log return
    costs: np.ndarray
    n_trades: int = 0

    def __len__(self):
        return len(self.returns)

    @property
    def cumulative_value(self) -> np.ndarray:
        return np.exp(np.cumsum(self.returns))

    @property
    def value_path(self) -> np.ndarray:
        """Cumulative value with the initial V_0 = 1 prepended."""
        return np.r_[1.0, self.cumulative_value]

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        cum = self.cumulative_value
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("timestamp", "position", "interval_return", "cumulative_value"))
            for i in range(len(self)):
                w.writerow((np.datetime_as_string(self.timestamps[i], unit="s"),
                            int(self.position[i]), repr(float(self.returns[i])), repr(float(cum[i]))))

    @classmethod
    def read_csv(cls, path) -> "EquityCurve":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([r["timestamp"] for r in rows], dtype="datetime64[s]"),
                   np.array([int(r["position"]) for r in rows], dtype=np.int8),
                   np.array([float(r["interval_return"]) for r in rows]),
                   np.zeros(len(rows)))


@dataclass
class SimulationResult:
    equity: EquityCurve
    trades: list = field(default_factory=list)

    @property
    def status(self) -> str:
        return "ok" if self.trades else "no_trades"

    @property
    def total_cost(self) -> float:
        return float(self.equity.costs.sum())


def write_trades_csv(trades, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("side", "entry_ts", "entry_px", "exit_ts", "exit_px", "gross", "cost", "net"))
        for t in trades:
            w.writerow(("long" if t.side == LONG else "short",
                        np.datetime_as_string(t.entry_ts, unit="s"), repr(t.entry_px),
                        np.datetime_as_string(t.exit_ts, unit="s"), repr(t.exit_px),
                        repr(t.gross), repr(t.cost), repr(t.net)))


def simulate(bars: BarSeries, signals, rule: SignalRule, tc: float) -> SimulationResult:
    """Execute ``signals`` (one per bar, in {-1, 0, 1}) under ``rule``.

    Fixed holding keeps a position for exactly ``h`` bars (exit at the open
    of entry + h) and ignores signals decided while it is open.
    Until-opposite keeps it until an opposite signal, which reverses the
    position at the next open.
    """
    sig = np.asarray(signals)
    n = len(bars)
    if len(sig) != n:
        raise AlignmentError(f"{len(sig)} signals for {n} bars")
    if tc < 0:
        raise ParameterError("tc must be non-negative")
    ts = bars.timestamps
    days = bars.days
    log_c = np.log(bars.close)
    opens = np.asarray(bars.open, dtype=float)

    rets = np.zeros(n)
    costs = np.zeros(n)
    position = np.zeros(n, dtype=np.int8)
    trades = []

    pos = 0
    ref = 0.0
    entry = None  # (side, ts, px, cost so far, entry bar)
    pending = 0  # side to open at next open
    switch = False

    def close(k, px, leg_cost):
        nonlocal pos, entry
        side, ets, epx, ecost, _ = entry
        gross = side * float(np.log(px / epx))
        cost = ecost + leg_cost
        trades.append(Trade(side, ets, epx, ts[k], float(px), gross, cost, gross - cost))
        pos = 0
        entry = None

    for k in range(n):
        if pending or (pos and rule.holding == "fixed" and k - entry[4] == rule.h):
            px = opens[k] if np.isfinite(opens[k]) else bars.close[k - 1]
            lp = np.log(px)
            if pos:
                rets[k] += pos * (lp - ref)
                leg = 2 * tc if switch else tc
                costs[k] += leg
                close(k, px, leg)
            if pending:
                leg = 2 * tc if switch else tc
                costs[k] += leg
                pos = pending
                ref = lp
                entry = (pending, ts[k], float(px), leg, k)
            pending = 0
            switch = False
        if pos:
            rets[k] += pos * (log_c[k] - ref)
            ref = log_c[k]
            position[k] = pos
        last_of_day = k == n - 1 or days[k + 1] != days[k]
        if last_of_day:
            if pos:
                costs[k] += tc
                close(k, bars.close[k], tc)
            continue
        s = int(sig[k])
        if s == 0:
            continue
        if pos == 0:
            pending = s
        elif rule.holding == "until_opposite" and s == -pos:
            pending = s
            switch = True
    rets -= costs
    return SimulationResult(EquityCurve(np.array(ts), position, rets, costs, len(trades)), trades)


@dataclass(frozen=True)
class Candidate:
    c: float
    rule: SignalRule
    train_sharpe: float | None
    val_sharpe: float | None
    train_trades: int


@dataclass(frozen=True)
class ThresholdChoice:
    candidate: Candidate
    confirmed: bool

    @property
    def c(self) -> float:
        return self.candidate.c

    @property
    def rule(self) -> SignalRule:
        return self.candidate.rule


def select_threshold(candidates: list[Candidate]) -> ThresholdChoice:
    """Best training Sharpe among candidates with positive validation Sharpe.

    Falls back to the best training Sharpe overall (``confirmed=False``).
    Ties go to the larger threshold, then to the earlier candidate.
    Candidates without trades or with an undefined training Sharpe are skipped.
    """
    live = [(i, cd) for i, cd in enumerate(candidates)
            if cd.train_trades > 0 and cd.train_sharpe is not None and np.isfinite(cd.train_sharpe)]
    if not live:
        raise NoSignalError("no candidate produced a trade on the training segment")

    def best(pool):
        return min(pool, key=lambda p: (-p[1].train_sharpe, -p[1].c, p[0]))[1]

    confirmed = [p for p in live if p[1].val_sharpe is not None and p[1].val_sharpe > 0]
    if confirmed:
        return ThresholdChoice(best(confirmed), True)
    return ThresholdChoice(best(live), False)


def benchmark_buy_hold(bars: BarSeries, tc: float) -> SimulationResult:
    """Long over the whole segment, flat overnight, one round-trip cost."""
    n = len(bars)
    if n < 2:
        raise ParameterError("buy-and-hold needs at least two bars")
    days = bars.days
    log_c = np.log(bars.close)
    opens = np.where(np.isfinite(bars.open), bars.open, bars.close)
    first = np.r_[True, days[1:] != days[:-1]]
    rets = np.empty(n)
    rets[first] = log_c[first] - np.log(opens[first])
    rest = np.flatnonzero(~first)
    rets[rest] = log_c[rest] - log_c[rest - 1]
    costs = np.zeros(n)
    costs[0] += tc
    costs[-1] += tc
    gross = float(rets.sum())
    trade = Trade(LONG, bars.timestamps[0], float(opens[0]), bars.timestamps[-1],
                  float(bars.close[-1]), gross, 2 * tc, gross - 2 * tc)
    eq = EquityCurve(np.array(bars.timestamps), np.ones(n, dtype=np.int8), rets - costs, costs, 1)
    return SimulationResult(eq, [trade])


def random_signals(n: int, distribution, seed: int) -> np.ndarray:
    """i.i.d. draws in {-1, 0, 1} with probabilities (down, neutral, up)."""
    p = np.asarray(distribution, dtype=float)
    if p.shape != (3,) or (p < 0).any() or abs(p.sum() - 1) > 1e-9:
        raise ParameterError(f"invalid distribution {p}")
    rng = np.random.default_rng(seed)
    return rng.choice(np.array([SHORT, FLAT, LONG], dtype=np.int8), size=n, p=p)


def benchmark_random(bars: BarSeries, distribution, rule: SignalRule, tc: float,
                     seed: int) -> SimulationResult:
    """Signals drawn with the training label frequencies, executed by :func:`simulate`."""
    return simulate(bars, random_signals(len(bars), distribution, seed), rule, tc)


def overreaction_signals(bars: BarSeries, returns: ReturnSeries, vols: VolatilitySeries,
                         params: LabelParams, contrarian: bool = False) -> np.ndarray:
    """Signal at each bar where a realized overreaction (r_t against sigma_{t-1}) occurs."""
    lab = label(returns, vols, params)
    sig = np.zeros(len(bars), dtype=np.int8)
    pos = np.searchsorted(bars.timestamps, lab.timestamps)
    ok = pos < len(bars)
    ok[ok] = bars.timestamps[pos[ok]] == lab.timestamps[ok]
    states = lab.states[ok].astype(np.int8)
    sig[pos[ok]] = -states if contrarian else states
    return sig


def benchmark_overreaction(returns: ReturnSeries, vols: VolatilitySeries, params: LabelParams,
                           rule: SignalRule, bars: BarSeries, tc: float,
                           contrarian: bool = False) -> SimulationResult:
    """Trade in the direction of each realized overreaction (momentum);
    ``contrarian`` trades against it."""
    return simulate(bars, overreaction_signals(bars, returns, vols, params, contrarian), rule, tc)
