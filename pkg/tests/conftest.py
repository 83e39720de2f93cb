"""Shared helpers for the test suite."""

from datetime import date, timedelta

from quantrl.market_data import Bar, BarSeries


def make_series(closes, start=date(2020, 1, 1), symbol="TEST", volume=1_000_000.0):
    """BarSeries with flat OHLC equal to each close, consecutive dates."""
    bars = tuple(
        Bar(start + timedelta(days=i), c, c, c, c, c, volume)
        for i, c in enumerate(closes)
    )
    return BarSeries(symbol, bars)
