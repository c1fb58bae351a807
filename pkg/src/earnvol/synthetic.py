"""Synthetic DEC-shaped data: many tickers, one earnings release per quarter.

Each ticker draws daily returns with its own volatility level; the first
post-earnings return is scaled up. Used by the test-suite and handy for
trying the CLI without real data::

    python -m earnvol.synthetic OUTDIR --tickers 90 --seed 7
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import dump_earnings
from .market_data import PriceSeries, TradingCalendar, dump_price_series
from .volatility import EarningsEvent, MarketSession, Quarter, first_post_day

HOLIDAYS = ((1, 1), (7, 4), (12, 25))


@dataclass(frozen=True)
class SyntheticData:
    events: list[EarningsEvent]
    prices: dict[str, PriceSeries]
    sigma: dict[str, float]


def business_days(start: date, end: date) -> list[date]:
    days = []
    d = start
    while d <= end:
        if d.weekday() < 5 and (d.month, d.day) not in HOLIDAYS:
            days.append(d)
        d += timedelta(days=1)
    return days


def ticker_names(n: int) -> list[str]:
    return [f"T{i:03d}" for i in range(n)]


def generate(n_tickers: int = 90, years: Sequence[int] = range(2019, 2024), seed: int = 7,
             post_scale: float = 3.0, sigma_range: tuple[float, float] = (0.006, 0.045),
             before_open_share: float = 0.65, prefix_days: int = 200, suffix_days: int = 120) -> SyntheticData:
    """Generate ``n_tickers`` x ``4 * len(years)`` events with matching prices.

    Ticker volatility levels are log-uniform in ``sigma_range``. The return on
    each event's first post-earnings day is multiplied by ``post_scale``.
    """
    years = list(years)
    rng = np.random.default_rng(seed)
    calendar = business_days(date(years[0], 1, 1) - timedelta(days=prefix_days),
                             date(years[-1], 12, 31) + timedelta(days=suffix_days))
    lo, hi = np.log(sigma_range[0]), np.log(sigma_range[1])
    events: list[EarningsEvent] = []
    prices: dict[str, PriceSeries] = {}
    sigma: dict[str, float] = {}
    cal_index = {d: i for i, d in enumerate(calendar)}
    cal = TradingCalendar(calendar)
    for ticker in ticker_names(n_tickers):
        s = float(np.exp(rng.uniform(lo, hi)))
        sigma[ticker] = s
        base_offset = int(rng.integers(18, 40))
        ticker_events = []
        for y in years:
            for q in range(1, 5):
                qstart = date(y, 3 * (q - 1) + 1, 1)
                d = qstart + timedelta(days=base_offset + int(rng.integers(-5, 6)))
                session = MarketSession.BEFORE_OPEN if rng.random() < before_open_share else MarketSession.AFTER_CLOSE
                ticker_events.append(EarningsEvent(ticker, d, session, Quarter(y, q)))
        r = rng.standard_normal(len(calendar) - 1) * s
        for ev in ticker_events:
            i = cal_index[first_post_day(ev, cal)] - 1
            r[i] *= post_scale
        closes = 50.0 * np.cumprod(np.concatenate([[1.0], 1.0 + r]))
        prices[ticker] = PriceSeries(ticker, calendar, closes.tolist())
        events.extend(ticker_events)
    return SyntheticData(events, prices, sigma)


def write(data: SyntheticData, out_dir) -> tuple[Path, Path]:
    """Write ``earnings.csv`` and ``prices/<TICKER>.csv``; returns both paths."""
    out = Path(out_dir)
    price_dir = out / "prices"
    price_dir.mkdir(parents=True, exist_ok=True)
    for ticker, p in sorted(data.prices.items()):
        (price_dir / f"{ticker}.csv").write_text(dump_price_series(p), encoding="utf-8")
    earnings = out / "earnings.csv"
    earnings.write_text(dump_earnings(sorted(data.events, key=lambda e: (e.announce_date, e.ticker))),
                        encoding="utf-8")
    return earnings, price_dir


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--tickers", type=int, default=90)
    ap.add_argument("--first-year", type=int, default=2019)
    ap.add_argument("--last-year", type=int, default=2023)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    data = generate(args.tickers, range(args.first_year, args.last_year + 1), args.seed)
    earnings, prices = write(data, args.out_dir)
    print(f"wrote {len(data.events)} events to {earnings} and {len(data.prices)} price files to {prices}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
