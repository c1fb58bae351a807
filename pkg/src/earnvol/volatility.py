"""Realized post-earnings volatility and event-window diagnostics.

Log-volatility of a window of daily returns r_1..r_n is

    ln sqrt( sum_i (r_i - mean(r))^2 )            (PaperLiteral)
    ln sqrt( sum_i (r_i - mean(r))^2 / n )        (SampleStd)

The two conventions differ by exactly ln(sqrt(n)). A tau-day window holds
tau daily returns, the first one being the return *on* the first
post-earnings trading day.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass
from datetime import date
from typing import Mapping, NamedTuple, Sequence

from .errors import DataError, DegenerateVariance, InsufficientFutureData, InsufficientHistory
from .market_data import PriceSeries, ReturnSeries, TradingCalendar, compute_returns

TAUS = (3, 7, 15, 30)
DEGENERATE_SS = 1e-24


class MarketSession(enum.Enum):
    BEFORE_OPEN = "before_open"
    AFTER_CLOSE = "after_close"

    @classmethod
    def parse(cls, text: str) -> "MarketSession":
        key = text.strip().lower().replace("-", "_")
        aliases = {"bmo": "before_open", "beforeopen": "before_open",
                   "amc": "after_close", "afterclose": "after_close"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise DataError(f"unknown session {text!r}; expected before_open or after_close") from None


class VolConvention(enum.Enum):
    PAPER_LITERAL = "paper_literal"
    SAMPLE_STD = "sample_std"

    @classmethod
    def parse(cls, text: str) -> "VolConvention":
        try:
            return cls(text.strip().lower().replace("-", "_"))
        except ValueError:
            raise DataError(f"unknown convention {text!r}; expected paper_literal or sample_std") from None


class Quarter(NamedTuple):
    year: int
    q: int

    @classmethod
    def parse(cls, text: str) -> "Quarter":
        m = re.fullmatch(r"\s*(\d{4})\s*-?\s*[Qq]([1-4])\s*", text)
        if not m:
            raise DataError(f"bad quarter {text!r}; expected e.g. 2021Q1")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self) -> str:
        return f"{self.year}Q{self.q}"


@dataclass(frozen=True)
class EarningsEvent:
    ticker: str
    announce_date: date
    session: MarketSession
    quarter: Quarter
    event_id: str = ""

    def __post_init__(self):
        if not 1 <= self.quarter[1] <= 4:
            raise DataError(f"quarter must be 1-4, got {self.quarter[1]}")
        object.__setattr__(self, "quarter", Quarter(*self.quarter))
        if not self.event_id:
            object.__setattr__(self, "event_id", f"{self.ticker}-{self.announce_date.isoformat()}")


@dataclass(frozen=True)
class VolatilityRecord:
    event_id: str
    tau: int
    value: float
    convention: VolConvention = VolConvention.PAPER_LITERAL

    def __post_init__(self):
        if self.tau < 2:
            raise ValueError("tau must be >= 2")
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite volatility for {self.event_id}")


def realized_volatility(returns: Sequence[float], convention: VolConvention = VolConvention.PAPER_LITERAL) -> float:
    """Natural-log realized volatility of a window of daily returns."""
    n = len(returns)
    if n < 2:
        raise ValueError(f"need at least 2 returns, got {n}")
    mean = math.fsum(returns) / n
    ss = math.fsum((r - mean) ** 2 for r in returns)
    if ss < DEGENERATE_SS:
        raise DegenerateVariance(f"sum of squared deviations {ss:.3g} below {DEGENERATE_SS:g}")
    if convention is VolConvention.SAMPLE_STD:
        ss /= n
    return 0.5 * math.log(ss)


def first_post_day(event: EarningsEvent, cal: TradingCalendar) -> date:
    """First trading day on which the market can react to the release.

    Before-open releases count from the announcement day itself (or the next
    trading day if the market was closed); after-close releases from the next
    trading day.
    """
    if event.session is MarketSession.BEFORE_OPEN:
        d = cal.next_on_or_after(event.announce_date)
    else:
        d = cal.next_after(event.announce_date)
    if d is None:
        raise InsufficientFutureData(f"{event.event_id}: no trading day after announcement")
    return d


def _first_return_index(event: EarningsEvent, prices: PriceSeries) -> int:
    # return k is dated prices.dates[k + 1]
    i = prices.calendar.index(first_post_day(event, prices.calendar)) - 1
    if i < 0:
        raise InsufficientHistory(f"{event.event_id}: no close before the first post-earnings day")
    return i


def post_earnings_window(event: EarningsEvent, prices: PriceSeries, tau: int) -> list[date]:
    """Dates of the tau daily returns entering the post-earnings volatility."""
    i = _first_return_index(event, prices)
    if i + tau > len(prices) - 1:
        raise InsufficientFutureData(
            f"{event.event_id}: {len(prices) - 1 - i} post days available, tau={tau}")
    return list(prices.dates[i + 1:i + 1 + tau])


def post_earnings_volatility(event: EarningsEvent, prices: PriceSeries, tau: int,
                             convention: VolConvention = VolConvention.PAPER_LITERAL,
                             returns: ReturnSeries | None = None) -> VolatilityRecord:
    """Volatility of the tau returns starting at the first post-earnings day.

    ``returns`` may be passed to avoid recomputing them for every event of a ticker.
    """
    if event.ticker != prices.ticker:
        raise DataError(f"event ticker {event.ticker} does not match prices {prices.ticker}")
    i = _first_return_index(event, prices)
    r = (compute_returns(prices) if returns is None else returns).values
    if i + tau > len(r):
        raise InsufficientFutureData(f"{event.event_id}: {len(r) - i} post days available, tau={tau}")
    return VolatilityRecord(event.event_id, tau, realized_volatility(r[i:i + tau], convention), convention)


def pre_earnings_volatility_series(event: EarningsEvent, prices: PriceSeries, window_len: int = 22,
                                   lookback: int = 22,
                                   convention: VolConvention = VolConvention.PAPER_LITERAL) -> list[float]:
    """Rolling volatility for each of the ``lookback`` days before the first post day.

    The value for day d covers the ``window_len`` returns ending on d.
    """
    if lookback < 1 or window_len < 2:
        raise ValueError("lookback must be >= 1 and window_len >= 2")
    i0 = _first_return_index(event, prices)
    start = i0 - lookback - window_len + 1
    if start < 0:
        raise InsufficientHistory(
            f"{event.event_id}: need {lookback + window_len - 1} pre-announcement returns, have {i0}")
    r = compute_returns(prices).values
    return [realized_volatility(r[j - window_len + 1:j + 1], convention) for j in range(i0 - lookback, i0)]


@dataclass(frozen=True)
class DriftProfile:
    offsets: list[str]
    mean_abs_return: list[float]
    mean_volatility: list[float]
    n_events_per_offset: list[int]
    n_skipped_per_offset: list[int]
    tau: int
    convention: VolConvention = VolConvention.PAPER_LITERAL

    def to_dict(self) -> dict:
        return {
            "offsets": self.offsets,
            "mean_abs_return": [_json_float(x) for x in self.mean_abs_return],
            "mean_volatility": [_json_float(x) for x in self.mean_volatility],
            "n_events_per_offset": self.n_events_per_offset,
            "n_skipped_per_offset": self.n_skipped_per_offset,
            "tau": self.tau,
            "convention": self.convention.value,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _json_float(x: float) -> float | None:
    return x if math.isfinite(x) else None


def profile_offsets(k: int) -> list[tuple[str, int]]:
    """Labels and return-index shifts relative to the first post-earnings return."""
    past = [(f"past_{j}", -j) for j in range(k, 0, -1)]
    future = [(f"future_{j}", j - 1) for j in range(1, k + 1)]
    return past + future


def event_window_profile(events: Sequence[EarningsEvent], prices: Mapping[str, PriceSeries], k: int,
                         tau: int, convention: VolConvention = VolConvention.PAPER_LITERAL) -> DriftProfile:
    """Cross-event mean |return| and mean tau-day volatility around announcements.

    Earnings fall between ``past_1`` and ``future_1``; the volatility at an
    offset covers the tau returns starting on that day. Event-days lacking
    data (or with degenerate variance) are skipped and counted.
    """
    if not events:
        raise ValueError("empty event list")
    if k < 1:
        raise ValueError("k must be >= 1")
    offsets = profile_offsets(k)
    abs_ret = [[] for _ in offsets]
    vols = [[] for _ in offsets]
    skipped = [0] * len(offsets)
    cache: dict[str, tuple[float, ...]] = {}
    for ev in events:
        p = prices[ev.ticker]
        if ev.ticker not in cache:
            cache[ev.ticker] = compute_returns(p).values
        r = cache[ev.ticker]
        try:
            i0 = _first_return_index(ev, p)
        except (InsufficientFutureData, InsufficientHistory):
            for j in range(len(offsets)):
                skipped[j] += 1
            continue
        for j, (_, shift) in enumerate(offsets):
            i = i0 + shift
            if i < 0 or i + tau > len(r):
                skipped[j] += 1
                continue
            try:
                v = realized_volatility(r[i:i + tau], convention)
            except DegenerateVariance:
                skipped[j] += 1
                continue
            abs_ret[j].append(abs(r[i]))
            vols[j].append(v)

    def mean(xs):
        return math.fsum(xs) / len(xs) if xs else float("nan")

    return DriftProfile(
        offsets=[label for label, _ in offsets],
        mean_abs_return=[mean(a) for a in abs_ret],
        mean_volatility=[mean(v) for v in vols],
        n_events_per_offset=[len(v) for v in vols],
        n_skipped_per_offset=skipped,
        tau=tau,
        convention=convention,
    )
