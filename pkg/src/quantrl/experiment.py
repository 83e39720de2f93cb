"""Config-driven experiment orchestration.

One experiment trains the configured agent on the train window, evaluates
it greedily on the test window, always runs buy-and-hold on the identical
test window as the benchmark, and emits a comparable report. The tuple
(config, seed, input data) fully determines every output byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .market_data import (
    BarSeries,
    NormalizationMode,
    Normalizer,
    SYNTHETIC_KINDS,
    apply_normalizer,
    build_observations,
    daily_returns,
    fit_normalizer,
    generate_synthetic,
    load_csv,
    rsi,
    sma,
)
from .metrics import (
    EquityCurve,
    Fill,
    MetricsReport,
    RoundTripTrade,
    compute_report,
    decode_metric,
    encode_metric,
    match_trades,
)
from .neural_net import Mlp, forward, init_mlp, save_checkpoint
from .rl_agents import (
    Discretizer,
    HistoryRow,
    QTable,
    TrainConfig,
    baseline_buy_and_hold,
    baseline_sma_crossover,
    select_action,
    train_dqn,
    train_qlearning,
    write_history,
)
from .trading_env import CostModel, MarketWindow, TradingEnv, wealth

AGENT_KINDS = ("qtable", "dqn", "buy_and_hold", "sma_crossover")
LEARNING_AGENTS = ("qtable", "dqn")

COMPARE_COLUMNS = (
    "strategy",
    "roi",
    "cumulative_return",
    "sharpe",
    "max_drawdown",
    "adr",
    "adtv",
    "profit_factor",
    "winning_pct",
    "ahp",
)
# Metric name in the table -> attribute on MetricsReport.
_COMPARE_SOURCE = {
    "roi": "roi",
    "cumulative_return": "cumulative_return",
    "sharpe": "sharpe",
    "max_drawdown": "max_drawdown",
    "adr": "avg_daily_return",
    "adtv": "adtv",
    "profit_factor": "profit_factor",
    "winning_pct": "winning_pct",
    "ahp": "avg_holding_days",
}
# Higher is better unless flipped; adtv and ahp are informational only.
_COMPARE_DIRECTION = {
    "roi": max,
    "cumulative_return": max,
    "sharpe": max,
    "max_drawdown": min,
    "adr": max,
    "profit_factor": max,
    "winning_pct": max,
}


class ConfigError(ValueError):
    """Experiment configuration is missing, malformed, or inconsistent."""


class ExperimentError(RuntimeError):
    """Pipeline failure tagged with the stage it occurred in."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


_SYNTHETIC_KEYS = {
    "kind", "length", "seed", "start", "base", "amplitude",
    "period_days", "drift", "volatility", "volume",
}


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    length: int
    seed: int = 0
    start: date = date(2020, 1, 6)
    base: float = 100.0
    amplitude: float = 10.0
    period_days: float = 10.0
    drift: float = 0.0
    volatility: float = 0.0
    volume: float = 1_000_000.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "length": self.length,
            "seed": self.seed,
            "start": self.start.isoformat(),
            "base": self.base,
            "amplitude": self.amplitude,
            "period_days": self.period_days,
            "drift": self.drift,
            "volatility": self.volatility,
            "volume": self.volume,
        }


_KNOWN_KEYS = {
    "data", "symbol", "train_start", "train_end", "test_start", "test_end",
    "agent", "window", "use_indicators", "sma_period", "rsi_period",
    "normalization", "return_field", "initial_cash", "initial_shares",
    "cost_rate", "reward_mode", "buy_fraction", "sell_fraction", "alpha",
    "gamma", "episodes", "batch_size", "buffer_capacity",
    "target_sync_period", "eps_start", "eps_end", "eps_decay_fraction",
    "hidden_sizes", "state_cuts", "fast_period", "slow_period",
    "risk_free_rate", "annualization", "holding_day_count", "seed", "out_dir",
}


@dataclass(frozen=True)
class ExperimentConfig:
    data_csv: str | None
    data_synthetic: SyntheticSpec | None
    symbol: str
    train_start: date
    train_end: date
    test_start: date
    test_end: date
    agent: str
    window: int
    use_indicators: bool
    sma_period: int
    rsi_period: int
    normalization: NormalizationMode
    return_field: str
    initial_cash: float
    initial_shares: int
    cost_rate: float
    reward_mode: str
    buy_fraction: float
    sell_fraction: float
    alpha: float
    gamma: float
    episodes: int
    batch_size: int
    buffer_capacity: int
    target_sync_period: int
    eps_start: float
    eps_end: float
    eps_decay_fraction: float
    hidden_sizes: tuple[int, ...]
    state_cuts: tuple[float, ...]
    fast_period: int
    slow_period: int
    risk_free_rate: float
    annualization: float
    holding_day_count: str
    seed: int
    out_dir: str | None

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            alpha=self.alpha,
            gamma=self.gamma,
            episodes=self.episodes,
            batch_size=self.batch_size,
            buffer_capacity=self.buffer_capacity,
            target_sync_period=self.target_sync_period,
            eps_start=self.eps_start,
            eps_end=self.eps_end,
            eps_decay_fraction=self.eps_decay_fraction,
            seed=self.seed,
        )

    def cost_model(self) -> CostModel:
        return CostModel(self.cost_rate)


def _parse_date(raw: Any, key: str) -> date:
    try:
        return date.fromisoformat(str(raw))
    except ValueError:
        raise ConfigError(f"{key}: expected an ISO date, got {raw!r}") from None


def _synthetic_from_dict(raw: dict) -> SyntheticSpec:
    unknown = set(raw) - _SYNTHETIC_KEYS
    if unknown:
        raise ConfigError(f"unknown synthetic keys: {', '.join(sorted(unknown))}")
    if "kind" not in raw:
        raise ConfigError("synthetic data needs a 'kind'")
    if raw["kind"] not in SYNTHETIC_KINDS:
        raise ConfigError(
            f"unknown synthetic kind {raw['kind']!r}; valid kinds: {', '.join(SYNTHETIC_KINDS)}"
        )
    if "length" not in raw:
        raise ConfigError("synthetic data needs a 'length'")
    values = dict(raw)
    if "start" in values:
        values["start"] = _parse_date(values["start"], "data.synthetic.start")
    try:
        return SyntheticSpec(**values)
    except TypeError as exc:
        raise ConfigError(f"invalid synthetic spec: {exc}") from None


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a raw config mapping and fill documented defaults."""
    try:
        return _config_from_dict(raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from None


def _config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "data" not in raw:
        raise ConfigError("missing required key 'data'")
    data = raw["data"]
    if not isinstance(data, dict) or set(data) not in ({"csv"}, {"synthetic"}):
        raise ConfigError("'data' must be exactly one of {\"csv\": path} or {\"synthetic\": {...}}")
    data_csv = data.get("csv")
    data_synthetic = (
        _synthetic_from_dict(data["synthetic"]) if "synthetic" in data else None
    )

    if "agent" not in raw:
        raise ConfigError("missing required key 'agent'")
    agent = raw["agent"]
    if agent not in AGENT_KINDS:
        raise ConfigError(
            f"unknown agent kind {agent!r}; valid kinds: {', '.join(AGENT_KINDS)}"
        )

    symbol = raw.get("symbol") or (Path(data_csv).stem if data_csv else "SYNTH")

    train_start = _parse_date(raw.get("train_start", "2010-01-01"), "train_start")
    train_end = _parse_date(raw.get("train_end", "2019-12-31"), "train_end")
    test_start = _parse_date(raw.get("test_start", "2020-01-01"), "test_start")
    test_end = _parse_date(raw.get("test_end", "2020-12-31"), "test_end")
    if train_start > train_end:
        raise ConfigError("train_start must not be after train_end")
    if test_start > test_end:
        raise ConfigError("test_start must not be after test_end")
    if train_end >= test_start:
        raise ConfigError("train window must strictly precede the test window")

    window = raw.get("window")
    if window is None:
        window = 3 if agent == "qtable" else 10
    window = int(window)
    if window < 1:
        raise ConfigError("window must be >= 1")

    normalization = raw.get("normalization", "signed_range")
    if normalization not in ("unit_range", "signed_range"):
        raise ConfigError(f"unknown normalization {normalization!r}")
    return_field = raw.get("return_field", "close")
    if return_field not in ("close", "adj_close"):
        raise ConfigError(f"return_field must be 'close' or 'adj_close', got {return_field!r}")
    reward_mode = raw.get("reward_mode", "percentage")
    if reward_mode not in ("percentage", "absolute"):
        raise ConfigError(f"unknown reward_mode {reward_mode!r}")

    hidden_sizes = tuple(int(s) for s in raw.get("hidden_sizes", (32, 32)))
    if not hidden_sizes or any(s < 1 for s in hidden_sizes):
        raise ConfigError("hidden_sizes must be a non-empty list of positive integers")
    state_cuts = tuple(float(c) for c in raw.get("state_cuts", (-0.001, 0.001)))
    if not state_cuts or any(b <= a for a, b in zip(state_cuts, state_cuts[1:])):
        raise ConfigError("state_cuts must be strictly increasing")

    annualization = raw.get("annualization")
    annualization = math.sqrt(252.0) if annualization is None else float(annualization)
    if annualization <= 0:
        raise ConfigError("annualization must be positive")

    fast_period = int(raw.get("fast_period", 10))
    slow_period = int(raw.get("slow_period", 30))
    if not 1 <= fast_period < slow_period:
        raise ConfigError("need slow_period > fast_period >= 1")

    holding_day_count = raw.get("holding_day_count", "calendar")
    if holding_day_count not in ("calendar", "trading"):
        raise ConfigError(f"holding_day_count must be 'calendar' or 'trading', got {holding_day_count!r}")

    cfg = ExperimentConfig(
        data_csv=data_csv,
        data_synthetic=data_synthetic,
        symbol=str(symbol),
        train_start=train_start,
        train_end=train_end,
        test_start=test_start,
        test_end=test_end,
        agent=agent,
        window=window,
        use_indicators=bool(raw.get("use_indicators", False)),
        sma_period=int(raw.get("sma_period", 14)),
        rsi_period=int(raw.get("rsi_period", 14)),
        normalization=normalization,
        return_field=return_field,
        initial_cash=float(raw.get("initial_cash", 100_000.0)),
        initial_shares=int(raw.get("initial_shares", 0)),
        cost_rate=float(raw.get("cost_rate", 0.0)),
        reward_mode=reward_mode,
        buy_fraction=float(raw.get("buy_fraction", 1.0)),
        sell_fraction=float(raw.get("sell_fraction", 1.0)),
        alpha=float(raw.get("alpha", 0.001)),
        gamma=float(raw.get("gamma", 0.99)),
        episodes=int(raw.get("episodes", 200)),
        batch_size=int(raw.get("batch_size", 32)),
        buffer_capacity=int(raw.get("buffer_capacity", 10_000)),
        target_sync_period=int(raw.get("target_sync_period", 100)),
        eps_start=float(raw.get("eps_start", 1.0)),
        eps_end=float(raw.get("eps_end", 0.05)),
        eps_decay_fraction=float(raw.get("eps_decay_fraction", 0.8)),
        hidden_sizes=hidden_sizes,
        state_cuts=state_cuts,
        fast_period=fast_period,
        slow_period=slow_period,
        risk_free_rate=float(raw.get("risk_free_rate", 0.0)),
        annualization=annualization,
        holding_day_count=holding_day_count,
        seed=int(raw.get("seed", 42)),
        out_dir=raw.get("out_dir"),
    )
    if cfg.initial_cash <= 0:
        raise ConfigError("initial_cash must be positive")
    if cfg.initial_shares < 0:
        raise ConfigError("initial_shares must be non-negative")
    if not 0.0 <= cfg.cost_rate < 1.0:
        raise ConfigError("cost_rate must be in [0, 1)")
    if cfg.sma_period < 1 or cfg.rsi_period < 1:
        raise ConfigError("indicator periods must be >= 1")
    try:
        cfg.train_config()  # surfaces RL hyperparameter errors at parse time
        cfg.cost_model()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON experiment config."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Full resolved config echo, JSON-serializable."""
    if cfg.data_csv is not None:
        data: dict[str, Any] = {"csv": cfg.data_csv}
    else:
        assert cfg.data_synthetic is not None
        data = {"synthetic": cfg.data_synthetic.to_dict()}
    return {
        "data": data,
        "symbol": cfg.symbol,
        "train_start": cfg.train_start.isoformat(),
        "train_end": cfg.train_end.isoformat(),
        "test_start": cfg.test_start.isoformat(),
        "test_end": cfg.test_end.isoformat(),
        "agent": cfg.agent,
        "window": cfg.window,
        "use_indicators": cfg.use_indicators,
        "sma_period": cfg.sma_period,
        "rsi_period": cfg.rsi_period,
        "normalization": cfg.normalization,
        "return_field": cfg.return_field,
        "initial_cash": cfg.initial_cash,
        "initial_shares": cfg.initial_shares,
        "cost_rate": cfg.cost_rate,
        "reward_mode": cfg.reward_mode,
        "buy_fraction": cfg.buy_fraction,
        "sell_fraction": cfg.sell_fraction,
        "alpha": cfg.alpha,
        "gamma": cfg.gamma,
        "episodes": cfg.episodes,
        "batch_size": cfg.batch_size,
        "buffer_capacity": cfg.buffer_capacity,
        "target_sync_period": cfg.target_sync_period,
        "eps_start": cfg.eps_start,
        "eps_end": cfg.eps_end,
        "eps_decay_fraction": cfg.eps_decay_fraction,
        "hidden_sizes": list(cfg.hidden_sizes),
        "state_cuts": list(cfg.state_cuts),
        "fast_period": cfg.fast_period,
        "slow_period": cfg.slow_period,
        "risk_free_rate": cfg.risk_free_rate,
        "annualization": cfg.annualization,
        "holding_day_count": cfg.holding_day_count,
        "seed": cfg.seed,
        "out_dir": cfg.out_dir,
    }


def load_bars(cfg: ExperimentConfig) -> BarSeries:
    if cfg.data_csv is not None:
        return load_csv(cfg.data_csv, symbol=cfg.symbol)
    spec = cfg.data_synthetic
    assert spec is not None
    return generate_synthetic(
        spec.kind,
        length=spec.length,
        seed=spec.seed,
        start=spec.start,
        symbol=cfg.symbol,
        base=spec.base,
        amplitude=spec.amplitude,
        period_days=spec.period_days,
        drift=spec.drift,
        volatility=spec.volatility,
        volume=spec.volume,
    )


def split_train_test(bars: BarSeries, cfg: ExperimentConfig) -> tuple[BarSeries, BarSeries]:
    """Partition bars by the configured date windows; no bar lands in both."""
    train = bars.slice_dates(cfg.train_start, cfg.train_end)
    test = bars.slice_dates(cfg.test_start, cfg.test_end)
    if len(train) < 2:
        raise ValueError(
            f"train window {cfg.train_start}..{cfg.train_end} holds {len(train)} bars, need >= 2"
        )
    if len(test) < 2:
        raise ValueError(
            f"test window {cfg.test_start}..{cfg.test_end} holds {len(test)} bars, need >= 2"
        )
    return train, test


def _context_length(cfg: ExperimentConfig) -> int:
    needed = cfg.window
    if cfg.use_indicators:
        needed = max(needed, cfg.sma_period - 1, cfg.rsi_period)
    return needed


def build_window(
    bars: BarSeries,
    normalizer: Normalizer,
    cfg: ExperimentConfig,
    context: BarSeries | None = None,
) -> MarketWindow:
    """Observations, prices, and dates for the tradable part of `bars`.

    `context` supplies history immediately preceding `bars` (feature warm-up
    only; context days are never tradable). Without enough history the
    window starts later, once every feature is defined.
    """
    context_bars = context.bars if context is not None else ()
    if context_bars and context_bars[-1].date >= bars.bars[0].date:
        raise ValueError("context must end strictly before the target window")
    all_bars = BarSeries(bars.symbol, context_bars + bars.bars)
    total = len(all_bars)
    first_tradable = max(len(context_bars), _context_length(cfg))
    if first_tradable > total - 2:
        raise ValueError("window too short after feature warm-up")
    returns = daily_returns(all_bars, cfg.return_field)
    normalized = apply_normalizer(normalizer, returns)

    indicator_columns = None
    if cfg.use_indicators:
        closes = all_bars.closes()
        sma_full = np.full(total, np.nan)
        sma_full[cfg.sma_period - 1 :] = sma(closes, cfg.sma_period)
        rsi_full = np.full(total, np.nan)
        rsi_full[cfg.rsi_period :] = rsi(closes, cfg.rsi_period)
        # Align to return indexing (return t belongs to bar t + 1) and put
        # both features on comparable scales.
        indicator_columns = np.column_stack(
            [sma_full[1:] / closes[1:], rsi_full[1:] / 100.0]
        )

    offset = first_tradable - cfg.window  # first return index feeding the windows
    observations = build_observations(
        normalized.values[offset:],
        indicator_columns[offset:] if indicator_columns is not None else None,
        cfg.window,
    )
    dates = all_bars.dates()[first_tradable:]
    prices = all_bars.closes()[first_tradable:]
    return MarketWindow(dates, prices, observations)


@dataclass
class PreparedData:
    bars: BarSeries
    train_bars: BarSeries
    test_bars: BarSeries
    normalizer: Normalizer
    train_window: MarketWindow
    test_window: MarketWindow


def prepare_train(cfg: ExperimentConfig, bars: BarSeries) -> tuple[BarSeries, Normalizer, MarketWindow]:
    """Train-side artifacts only; never touches test-window rows."""
    train_bars = bars.slice_dates(cfg.train_start, cfg.train_end)
    if len(train_bars) < 2:
        raise ValueError(
            f"train window {cfg.train_start}..{cfg.train_end} holds {len(train_bars)} bars, need >= 2"
        )
    normalizer = fit_normalizer(daily_returns(train_bars, cfg.return_field), cfg.normalization)
    train_window = build_window(train_bars, normalizer, cfg)
    return train_bars, normalizer, train_window


def prepare_data(cfg: ExperimentConfig, bars: BarSeries) -> PreparedData:
    train_bars, test_bars = split_train_test(bars, cfg)
    train_bars, normalizer, train_window = prepare_train(cfg, bars)
    context = train_bars.tail(_context_length(cfg))
    test_window = build_window(test_bars, normalizer, cfg, context=context)
    return PreparedData(bars, train_bars, test_bars, normalizer, train_window, test_window)


def make_env(cfg: ExperimentConfig, window: MarketWindow) -> TradingEnv:
    return TradingEnv(
        window,
        cfg.initial_cash,
        costs=cfg.cost_model(),
        reward_mode=cfg.reward_mode,
        buy_fraction=cfg.buy_fraction,
        sell_fraction=cfg.sell_fraction,
        symbol=cfg.symbol,
        initial_shares=cfg.initial_shares,
    )


def train_agent(
    cfg: ExperimentConfig, train_window: MarketWindow
) -> tuple[Mlp | QTable | None, list[HistoryRow]]:
    """Train the configured agent; baselines have nothing to train."""
    if cfg.agent == "qtable":
        env = make_env(cfg, train_window)
        discretizer = Discretizer.uniform(train_window.obs_dim, cfg.state_cuts)
        return train_qlearning(env, cfg.train_config(), discretizer)
    if cfg.agent == "dqn":
        env = make_env(cfg, train_window)
        net = init_mlp((train_window.obs_dim, *cfg.hidden_sizes, 3), seed=cfg.seed)
        return train_dqn(env, cfg.train_config(), net)
    return None, []


def greedy_policy(cfg: ExperimentConfig, artifact: Mlp | QTable, obs_dim: int) -> Callable:
    if cfg.agent == "qtable":
        assert isinstance(artifact, QTable)
        discretizer = Discretizer.uniform(obs_dim, cfg.state_cuts)
        return lambda obs: select_action(artifact.action_values(discretizer(obs)), 0.0)
    assert isinstance(artifact, Mlp)
    return lambda obs: select_action(forward(artifact, obs), 0.0)


def run_policy(env: TradingEnv, policy: Callable) -> tuple[EquityCurve, list[Fill]]:
    """Drive one greedy episode, recording daily wealth and executed fills."""
    window = env.window
    rate = env.costs.proportional_rate
    state, obs = env.reset()
    values = np.empty(len(window))
    fills: list[Fill] = []
    for t in range(env.steps_per_episode):
        action = policy(obs)
        before = state.portfolio
        state, obs, _, _ = env.step(state, action)
        after = state.portfolio
        price = float(window.prices[t])
        delta = after.shares - before.shares
        if delta > 0:
            fills.append(Fill(window.dates[t], "buy", delta, price, cost=delta * price * rate))
        elif delta < 0:
            fills.append(Fill(window.dates[t], "sell", -delta, price, cost=-delta * price * rate))
        values[t] = wealth(after, price)
    values[-1] = state.wealth_prev
    return EquityCurve(window.dates, values), fills


@dataclass
class StrategyResult:
    name: str
    train_metrics: MetricsReport
    test_metrics: MetricsReport
    test_curve: EquityCurve
    test_fills: list[Fill]
    test_trades: list[RoundTripTrade]


@dataclass
class Report:
    config: ExperimentConfig
    strategies: dict[str, StrategyResult]
    history: list[HistoryRow]
    artifact: Mlp | QTable | None

    @property
    def test_window_span(self) -> tuple[date, date]:
        result = next(iter(self.strategies.values()))
        return result.test_curve.dates[0], result.test_curve.dates[-1]

    @property
    def train_window_span(self) -> tuple[date, date]:
        cfg = self.config
        return cfg.train_start, cfg.train_end


def _evaluate_kind(
    cfg: ExperimentConfig,
    kind: str,
    artifact: Mlp | QTable | None,
    window: MarketWindow,
    window_bars: BarSeries,
) -> tuple[EquityCurve, list[Fill]]:
    if kind in LEARNING_AGENTS:
        assert artifact is not None
        env = make_env(cfg, window)
        return run_policy(env, greedy_policy(cfg, artifact, window.obs_dim))
    if kind == "buy_and_hold":
        return baseline_buy_and_hold(window_bars, cfg.initial_cash, cfg.cost_model())
    return baseline_sma_crossover(
        window_bars, cfg.fast_period, cfg.slow_period, cfg.initial_cash, cfg.cost_model()
    )


def _strategy_result(
    cfg: ExperimentConfig,
    kind: str,
    artifact: Mlp | QTable | None,
    prepared: PreparedData,
) -> StrategyResult:
    results = {}
    for label, window in (("train", prepared.train_window), ("test", prepared.test_window)):
        window_bars = prepared.bars.slice_dates(window.dates[0], window.dates[-1])
        curve, fills = _evaluate_kind(cfg, kind, artifact, window, window_bars)
        final_price = float(window.prices[-1])
        metrics = compute_report(
            curve,
            fills,
            volumes=window_bars.volumes(),
            rf_daily=cfg.risk_free_rate,
            annualization=cfg.annualization,
            final_price=final_price,
            final_date=window.dates[-1],
            day_count=cfg.holding_day_count,
        )
        trades = match_trades(
            fills,
            final_price=final_price,
            final_date=window.dates[-1],
            day_count=cfg.holding_day_count,
            trading_dates=window.dates if cfg.holding_day_count == "trading" else None,
        )
        results[label] = (metrics, curve, fills, trades)
    train_metrics = results["train"][0]
    test_metrics, test_curve, test_fills, test_trades = results["test"]
    return StrategyResult(kind, train_metrics, test_metrics, test_curve, test_fills, test_trades)


def run_experiment(
    cfg: ExperimentConfig,
    artifact: Mlp | QTable | None = None,
) -> Report:
    """Full pipeline: ingest, train, evaluate agent plus benchmark, assemble.

    Passing a pre-trained `artifact` skips the training stage (used by the
    evaluate subcommand). Errors carry their pipeline stage.
    """
    try:
        bars = load_bars(cfg)
        prepared = prepare_data(cfg, bars)
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError("ingest", str(exc)) from exc

    history: list[HistoryRow] = []
    if artifact is None:
        try:
            artifact, history = train_agent(cfg, prepared.train_window)
        except Exception as exc:
            raise ExperimentError("train", str(exc)) from exc

    try:
        strategies: dict[str, StrategyResult] = {
            cfg.agent: _strategy_result(cfg, cfg.agent, artifact, prepared)
        }
        if cfg.agent != "buy_and_hold":
            strategies["buy_and_hold"] = _strategy_result(cfg, "buy_and_hold", None, prepared)
    except Exception as exc:
        raise ExperimentError("evaluate", str(exc)) from exc

    return Report(cfg, strategies, history, artifact)


def _json_text(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write_equity_csv(curve: EquityCurve, path: Path) -> None:
    lines = ["date,value"]
    lines.extend(f"{d.isoformat()},{repr(float(v))}" for d, v in zip(curve.dates, curve.values))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_trades_csv(trades: Sequence[RoundTripTrade], path: Path) -> None:
    lines = ["entry_date,exit_date,shares,entry_price,exit_price,profit,holding_days,mtm_flag"]
    for t in trades:
        lines.append(
            f"{t.entry_date.isoformat()},{t.exit_date.isoformat()},{t.shares},"
            f"{repr(float(t.entry_price))},{repr(float(t.exit_price))},"
            f"{repr(float(t.profit))},{repr(float(t.holding_days))},{int(t.mark_to_market)}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def metrics_document(report: Report) -> dict[str, Any]:
    test_span = report.test_window_span
    train_span = report.train_window_span
    return {
        "symbol": report.config.symbol,
        "train_window": {"start": train_span[0].isoformat(), "end": train_span[1].isoformat()},
        "test_window": {"start": test_span[0].isoformat(), "end": test_span[1].isoformat()},
        "strategies": {
            name: {
                "train": result.train_metrics.to_dict(),
                "test": result.test_metrics.to_dict(),
            }
            for name, result in report.strategies.items()
        },
    }


def load_metrics_document(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def emit_report(report: Report, out_dir: str | Path) -> list[Path]:
    """Write metrics.json, config echo, history, curves, trades, checkpoint."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def _emit(name: str, text: str) -> None:
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    _emit("metrics.json", _json_text(metrics_document(report)))
    _emit("config_echo.json", _json_text(config_to_dict(report.config)))
    history_path = out / "history.csv"
    write_history(report.history, history_path)
    written.append(history_path)
    for name, result in report.strategies.items():
        equity_path = out / f"equity_{name}.csv"
        _write_equity_csv(result.test_curve, equity_path)
        written.append(equity_path)
        trades_path = out / f"trades_{name}.csv"
        _write_trades_csv(result.test_trades, trades_path)
        written.append(trades_path)
    if isinstance(report.artifact, Mlp):
        ckpt = out / "checkpoint_dqn.txt"
        save_checkpoint(report.artifact, ckpt)
        written.append(ckpt)
    elif isinstance(report.artifact, QTable):
        ckpt = out / "qtable.csv"
        report.artifact.save(ckpt)
        written.append(ckpt)
    return written


@dataclass
class ComparisonTable:
    """Per-strategy metric rows with the winner marked per directional metric."""

    rows: list[dict[str, Any]]
    winners: dict[str, str]

    def to_csv_text(self) -> str:
        lines = [",".join(COMPARE_COLUMNS)]
        for row in self.rows:
            lines.append(
                ",".join(
                    str(row["strategy"]) if col == "strategy" else _cell_text(row[col], exact=True)
                    for col in COMPARE_COLUMNS
                )
            )
        lines.append(
            ",".join(
                "winner" if col == "strategy" else self.winners.get(col, "")
                for col in COMPARE_COLUMNS
            )
        )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = list(COMPARE_COLUMNS)
        body = []
        for row in self.rows:
            cells = [str(row["strategy"])]
            for col in COMPARE_COLUMNS[1:]:
                text = _cell_text(row[col], exact=False)
                if self.winners.get(col) == row["strategy"]:
                    text += "*"
                cells.append(text)
            body.append(cells)
        widths = [
            max(len(header[i]), *(len(r[i]) for r in body)) if body else len(header[i])
            for i in range(len(header))
        ]
        lines = [
            "  ".join(h.ljust(w) for h, w in zip(header, widths)),
            "  ".join("-" * w for w in widths),
        ]
        lines.extend("  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body)
        return "\n".join(lines) + "\n"


def _cell_text(value: float | None, exact: bool) -> str:
    encoded = encode_metric(value)
    if isinstance(encoded, str):
        return encoded
    return repr(encoded) if exact else format(encoded, ".6g")


def _compare_entries(entries: list[tuple[str, Any, dict[str, float | None]]]) -> ComparisonTable:
    if not entries:
        raise ValueError("nothing to compare")
    reference = entries[0][1]
    for label, span, _ in entries:
        if span != reference:
            raise ValueError(
                f"test windows differ: {label} covers {span}, expected {reference}"
            )
    seen: dict[str, int] = {}
    rows = []
    for label, _, metrics in entries:
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}#{seen[label]}"
        rows.append({"strategy": label, **metrics})
    winners: dict[str, str] = {}
    for col, pick in _COMPARE_DIRECTION.items():
        defined = [(row[col], row["strategy"]) for row in rows if row[col] is not None]
        if defined:
            best = pick(v for v, _ in defined)
            winners[col] = next(name for v, name in defined if v == best)
    return ComparisonTable(rows, winners)


def _metrics_to_row(metrics: MetricsReport) -> dict[str, float | None]:
    return {col: getattr(metrics, attr) for col, attr in _COMPARE_SOURCE.items()}


def compare_strategies(reports: Sequence[Report]) -> ComparisonTable:
    """One row per strategy across reports; all must share the test window."""
    entries = []
    for report in reports:
        span = report.test_window_span
        for name, result in report.strategies.items():
            entries.append((name, span, _metrics_to_row(result.test_metrics)))
    return _compare_entries(entries)


def compare_metrics_documents(docs: Sequence[tuple[str, dict]]) -> ComparisonTable:
    """Compare emitted metrics.json documents; labels prefix strategy names."""
    entries = []
    for label, doc in docs:
        span = (doc["test_window"]["start"], doc["test_window"]["end"])
        for name, windows in doc["strategies"].items():
            metrics = {
                col: decode_metric(windows["test"][attr])
                for col, attr in _COMPARE_SOURCE.items()
            }
            entries.append((f"{label}:{name}", span, metrics))
    return _compare_entries(entries)
