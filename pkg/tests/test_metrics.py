import math
from datetime import date, timedelta

import numpy as np
import pytest

from quantrl.metrics import (
    EquityCurve,
    Fill,
    MetricsReport,
    RoundTripTrade,
    adtv,
    average_daily_return,
    average_holding_period,
    compute_report,
    cumulative_return,
    decode_metric,
    encode_metric,
    match_trades,
    max_drawdown,
    profit_factor,
    sharpe,
    sharpe_from_daily,
    winning_percentage,
)


def curve_of(values, start=date(2020, 1, 1)):
    dates = tuple(start + timedelta(days=i) for i in range(len(values)))
    return EquityCurve(dates, np.asarray(values, dtype=float))


def trade_with_profit(profit, days=1.0):
    return RoundTripTrade(
        entry_date=date(2020, 1, 1),
        exit_date=date(2020, 1, 1) + timedelta(days=int(days)),
        shares=1,
        entry_price=10.0,
        exit_price=10.0 + profit,
        profit=float(profit),
        holding_days=float(days),
    )


def brute_force_drawdown(values):
    """Independent oracle: scan every peak/trough index pair."""
    worst = 0.0
    n = len(values)
    for i in range(n):
        for j in range(i + 1, n):
            dd = (values[i] - values[j]) / values[i]
            if dd > worst:
                worst = dd
    return worst


class TestEquityCurve:
    def test_validation(self):
        with pytest.raises(ValueError, match="non-empty"):
            curve_of([])
        with pytest.raises(ValueError, match="positive"):
            curve_of([100.0, -1.0])
        with pytest.raises(ValueError, match="align"):
            EquityCurve((date(2020, 1, 1),), np.array([1.0, 2.0]))
        with pytest.raises(ValueError, match="increasing"):
            EquityCurve((date(2020, 1, 2), date(2020, 1, 1)), np.array([1.0, 2.0]))

    def test_roi_and_returns(self):
        curve = curve_of([100.0, 110.0, 99.0])
        assert curve.roi() == pytest.approx(-0.01, rel=1e-12)
        assert curve.daily_returns() == pytest.approx([0.10, -0.10], rel=1e-12)


class TestCumulativeReturn:
    def test_compounding_product(self):
        # oracle: explicit product of the three factors
        expected = 1.05 * 1.10 * 0.97 - 1.0
        assert cumulative_return([0.05, 0.10, -0.03]) == pytest.approx(expected, rel=1e-12)

    def test_empty_is_zero(self):
        assert cumulative_return([]) == 0.0

    def test_single_factor(self):
        assert cumulative_return([0.10]) == pytest.approx(0.10, rel=1e-12)

    def test_total_loss_rejected(self):
        with pytest.raises(ValueError, match="<= -1"):
            cumulative_return([0.05, -1.0])

    def test_matches_curve_roi(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            values = 1000.0 * np.exp(np.cumsum(rng.normal(0, 0.03, size=50)))
            curve = curve_of(values)
            assert cumulative_return(curve.daily_returns()) == pytest.approx(
                curve.roi(), rel=1e-10
            )


class TestSharpe:
    def test_scalar_form(self):
        assert sharpe(0.10, 0.02, 0.08) == pytest.approx(1.0, rel=1e-12)

    def test_zero_excess(self):
        assert sharpe(0.05, 0.05, 0.3) == 0.0

    def test_degenerate_stdev(self):
        assert sharpe(0.10, 0.02, 0.0) is None
        assert sharpe(0.10, 0.02, -1.0) is None

    def test_series_form_oracle(self):
        daily = np.array([0.01, -0.02, 0.015, 0.0, 0.005])
        rf = 0.001
        excess = daily - rf
        expected = excess.mean() / excess.std(ddof=1) * math.sqrt(252.0)
        assert sharpe_from_daily(daily, rf) == pytest.approx(expected, rel=1e-12)

    def test_series_constant_returns_undefined(self):
        assert sharpe_from_daily([0.01, 0.01, 0.01]) is None

    def test_series_too_short(self):
        with pytest.raises(ValueError, match="at least 2"):
            sharpe_from_daily([0.01])


class TestMaxDrawdown:
    def test_peak_to_trough(self):
        assert max_drawdown(curve_of([100_000.0, 70_000.0])) == pytest.approx(0.30, rel=1e-9)

    def test_monotonic_no_drawdown(self):
        assert max_drawdown(curve_of([1.0, 2.0, 3.0])) == 0.0

    def test_interior_trough(self):
        # brute-force oracle over all pairs gives (120 - 60) / 120 = 0.5
        values = [100.0, 80.0, 120.0, 60.0]
        assert brute_force_drawdown(values) == 0.5
        assert max_drawdown(curve_of(values)) == 0.5

    def test_matches_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(1, 60))
            values = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.05, size=n)))
            curve = curve_of(values)
            assert max_drawdown(curve) == brute_force_drawdown(values.tolist())

    def test_scale_invariance(self):
        values = [100.0, 80.0, 120.0, 60.0, 90.0]
        base = max_drawdown(curve_of(values))
        assert max_drawdown(curve_of([4.0 * v for v in values])) == base  # power of two
        assert max_drawdown(curve_of([3.0 * v for v in values])) == pytest.approx(base, rel=1e-12)


class TestAverageDailyReturn:
    def test_basic(self):
        assert average_daily_return(100.0, 110.0, 10) == pytest.approx(0.01, rel=1e-12)

    def test_flat(self):
        assert average_daily_return(100.0, 100.0, 5) == 0.0

    def test_zero_days_rejected(self):
        with pytest.raises(ValueError, match=">= 1"):
            average_daily_return(100.0, 110.0, 0)

    def test_non_positive_initial(self):
        with pytest.raises(ValueError, match="positive"):
            average_daily_return(0.0, 1.0, 5)


class TestAdtv:
    def test_worked_example(self):
        assert adtv(10_000_000, 250) == pytest.approx(40_000.0, rel=1e-9)

    def test_single_day(self):
        assert adtv(1234.0, 1) == 1234.0

    def test_zero_volume(self):
        assert adtv(0.0, 10) == 0.0

    def test_zero_days(self):
        with pytest.raises(ValueError, match=">= 1"):
            adtv(100.0, 0)


class TestProfitFactor:
    def test_interpretation(self):
        assert profit_factor([trade_with_profit(30.0), trade_with_profit(-20.0)]) == pytest.approx(
            1.5, rel=1e-9
        )

    def test_two_wins_one_loss(self):
        trades = [trade_with_profit(10.0), trade_with_profit(20.0), trade_with_profit(-15.0)]
        assert profit_factor(trades) == pytest.approx(2.0, rel=1e-12)

    def test_all_winners_infinity(self):
        assert profit_factor([trade_with_profit(5.0)]) == math.inf

    def test_all_losers_zero(self):
        assert profit_factor([trade_with_profit(-5.0)]) == 0.0

    def test_no_trades_undefined(self):
        assert profit_factor([]) is None

    def test_zero_profit_trades_in_neither_sum(self):
        trades = [trade_with_profit(0.0), trade_with_profit(30.0), trade_with_profit(-20.0)]
        assert profit_factor(trades) == pytest.approx(1.5, rel=1e-12)
        assert profit_factor([trade_with_profit(0.0)]) is None

    def test_above_one_iff_net_positive(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            profits = rng.normal(0, 50, size=int(rng.integers(2, 12)))
            trades = [trade_with_profit(p) for p in profits]
            wins = any(p > 0 for p in profits)
            losses = any(p < 0 for p in profits)
            if wins and losses:
                assert (profit_factor(trades) > 1.0) == (profits.sum() > 0)


class TestWinningPercentage:
    def test_worked_example(self):
        trades = [trade_with_profit(1.0)] * 60 + [trade_with_profit(-1.0)] * 40
        assert winning_percentage(trades) == pytest.approx(60.0, rel=1e-9)

    def test_all_winners(self):
        assert winning_percentage([trade_with_profit(1.0)] * 3) == 100.0

    def test_zero_profit_counts_as_loss(self):
        trades = [trade_with_profit(0.0), trade_with_profit(2.0)]
        assert winning_percentage(trades) == 50.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no trades"):
            winning_percentage([])


class TestAverageHoldingPeriod:
    def test_mean_of_periods(self):
        periods = [10, 20, 30, 15, 25, 10, 20, 15, 30, 25]
        trades = [trade_with_profit(1.0, days=p) for p in periods]
        assert average_holding_period(trades) == pytest.approx(sum(periods) / len(periods), rel=1e-12)

    def test_single_trade(self):
        assert average_holding_period([trade_with_profit(1.0, days=5)]) == 5.0

    def test_same_day_round_trip(self):
        assert average_holding_period([trade_with_profit(1.0, days=0)]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no trades"):
            average_holding_period([])


class TestMatchTrades:
    def test_simple_round_trip(self):
        fills = [
            Fill(date(2020, 1, 1), "buy", 100, 10.0),
            Fill(date(2020, 1, 11), "sell", 100, 12.0),
        ]
        trades = match_trades(fills)
        assert len(trades) == 1
        t = trades[0]
        assert t.profit == pytest.approx(200.0, rel=1e-12)
        assert t.holding_days == 10.0
        assert not t.mark_to_market

    def test_fifo_split_with_residual_open(self):
        # hand ledger: sell 150 takes all of lot 1 (100 @ 10) and 50 of
        # lot 2 (100 @ 11); 50 @ 11 stays open without a final price
        fills = [
            Fill(date(2020, 1, 1), "buy", 100, 10.0),
            Fill(date(2020, 1, 2), "buy", 100, 11.0),
            Fill(date(2020, 1, 5), "sell", 150, 12.0),
        ]
        trades = match_trades(fills)
        assert [(t.shares, t.entry_price, t.profit) for t in trades] == [
            (100, 10.0, pytest.approx(200.0)),
            (50, 11.0, pytest.approx(50.0)),
        ]

    def test_residual_closed_at_final_price(self):
        fills = [
            Fill(date(2020, 1, 1), "buy", 100, 10.0),
            Fill(date(2020, 1, 2), "buy", 100, 11.0),
            Fill(date(2020, 1, 5), "sell", 150, 12.0),
        ]
        trades = match_trades(fills, final_price=11.5, final_date=date(2020, 1, 9))
        assert len(trades) == 3
        residual = trades[-1]
        assert residual.mark_to_market
        assert residual.shares == 50
        assert residual.profit == pytest.approx(50 * (11.5 - 11.0), rel=1e-12)
        assert residual.holding_days == 7.0

    def test_open_only_marked_to_market(self):
        fills = [Fill(date(2020, 1, 1), "buy", 100, 10.0)]
        trades = match_trades(fills, final_price=9.0, final_date=date(2020, 1, 8))
        assert len(trades) == 1
        assert trades[0].mark_to_market
        assert trades[0].profit == pytest.approx(-100.0, rel=1e-12)

    def test_sell_exceeding_position(self):
        fills = [
            Fill(date(2020, 1, 1), "buy", 10, 10.0),
            Fill(date(2020, 1, 2), "sell", 11, 10.0),
        ]
        with pytest.raises(ValueError, match="exceeds open position"):
            match_trades(fills)

    def test_out_of_order_fills(self):
        fills = [
            Fill(date(2020, 1, 5), "buy", 10, 10.0),
            Fill(date(2020, 1, 2), "sell", 10, 10.0),
        ]
        with pytest.raises(ValueError, match="chronological"):
            match_trades(fills)

    def test_cost_allocation_pro_rata(self):
        # 1.0 of buy fee split 60/40 over the two exits; sell fees whole
        fills = [
            Fill(date(2020, 1, 1), "buy", 100, 10.0, cost=1.0),
            Fill(date(2020, 1, 2), "sell", 60, 12.0, cost=0.3),
            Fill(date(2020, 1, 3), "sell", 40, 13.0, cost=0.2),
        ]
        trades = match_trades(fills)
        assert trades[0].profit == pytest.approx(60 * 2.0 - 0.6 - 0.3, rel=1e-12)
        assert trades[1].profit == pytest.approx(40 * 3.0 - 0.4 - 0.2, rel=1e-12)

    def test_trading_day_count(self):
        calendar = tuple(date(2020, 1, 1) + timedelta(days=i) for i in range(20))
        fills = [
            Fill(calendar[0], "buy", 10, 10.0),
            Fill(calendar[5], "sell", 10, 11.0),
        ]
        trades = match_trades(fills, day_count="trading", trading_dates=calendar)
        assert trades[0].holding_days == 5.0
        with pytest.raises(ValueError, match="requires trading_dates"):
            match_trades(fills, day_count="trading")

    def test_share_and_cash_conservation(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            prices = 50.0 * np.exp(np.cumsum(rng.normal(0, 0.04, size=30)))
            dates = tuple(date(2020, 1, 1) + timedelta(days=i) for i in range(30))
            position = 0
            cash_delta = 0.0
            fills = []
            for day, price in zip(dates, prices):
                price = float(price)
                move = rng.integers(0, 3)
                if move == 1:
                    qty = int(rng.integers(1, 20))
                    fills.append(Fill(day, "buy", qty, price))
                    position += qty
                    cash_delta -= qty * price
                elif move == 2 and position > 0:
                    qty = int(rng.integers(1, position + 1))
                    fills.append(Fill(day, "sell", qty, price))
                    position -= qty
                    cash_delta += qty * price
            final_price = float(prices[-1])
            trades = match_trades(fills, final_price=final_price, final_date=dates[-1])
            total_matched = sum(t.shares for t in trades)
            bought = sum(f.shares for f in fills if f.side == "buy")
            assert total_matched == bought  # every lot closed, really or synthetically
            wealth_delta = cash_delta + position * final_price
            assert sum(t.profit for t in trades) == pytest.approx(wealth_delta, abs=1e-6)


class TestComputeReport:
    def test_flat_curve_no_fills(self):
        report = compute_report(curve_of([1000.0] * 5))
        assert report.cumulative_return == 0.0
        assert report.max_drawdown == 0.0
        assert report.roi == 0.0
        assert report.sharpe is None  # zero variance
        assert report.profit_factor is None
        assert report.winning_pct is None
        assert report.avg_holding_days is None
        assert report.adtv is None
        assert report.agent_adtv == 0.0

    def test_roi_equals_cumulative_return_two_points(self):
        report = compute_report(curve_of([1000.0, 1100.0]))
        assert report.roi == pytest.approx(0.10, rel=1e-12)
        assert report.cumulative_return == pytest.approx(report.roi, rel=1e-10)

    def test_purity(self):
        curve = curve_of([100.0, 120.0, 90.0, 130.0])
        fills = [Fill(curve.dates[0], "buy", 3, 100.0), Fill(curve.dates[2], "sell", 3, 90.0)]
        volumes = [5000.0, 6000.0, 7000.0, 8000.0]
        a = compute_report(curve, fills, volumes, final_price=130.0)
        b = compute_report(curve, fills, volumes, final_price=130.0)
        assert a == b

    def test_volumes_and_adtv(self):
        report = compute_report(curve_of([100.0, 101.0]), volumes=[1000.0, 3000.0])
        assert report.adtv == 2000.0

    def test_misaligned_volumes(self):
        with pytest.raises(ValueError, match="misaligned"):
            compute_report(curve_of([100.0, 101.0]), volumes=[1.0])

    def test_fill_outside_curve(self):
        fills = [Fill(date(2030, 1, 1), "buy", 1, 10.0)]
        with pytest.raises(ValueError, match="outside curve"):
            compute_report(curve_of([100.0, 101.0]), fills)

    def test_agent_turnover(self):
        curve = curve_of([100.0, 110.0, 120.0, 130.0])
        fills = [Fill(curve.dates[0], "buy", 6, 100.0), Fill(curve.dates[1], "sell", 6, 110.0)]
        report = compute_report(curve, fills)
        assert report.agent_adtv == 3.0


class TestReportSerialization:
    def test_round_trip_with_markers(self):
        report = MetricsReport(
            roi=0.1234,
            cumulative_return=0.1175,
            sharpe=None,
            max_drawdown=0.3,
            avg_daily_return=0.001,
            adtv=None,
            agent_adtv=12.5,
            profit_factor=math.inf,
            winning_pct=60.0,
            avg_holding_days=21.5,
        )
        encoded = report.to_dict()
        assert encoded["sharpe"] == "undefined"
        assert encoded["profit_factor"] == "inf"
        assert MetricsReport.from_dict(encoded) == report

    def test_marker_codec(self):
        assert encode_metric(None) == "undefined"
        assert encode_metric(math.inf) == "inf"
        assert decode_metric("undefined") is None
        assert decode_metric("inf") == math.inf
        assert decode_metric(0.5) == 0.5
