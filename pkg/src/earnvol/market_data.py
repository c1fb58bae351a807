"""Price files, trading calendars and daily simple returns.

A ticker's trading calendar is simply the set of dates that carry a close in
its price file; no exchange holiday table is consulted.
"""

from __future__ import annotations

import csv
import io
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CalendarError, DataError

PRICE_HEADER = ("date", "close")


@dataclass(frozen=True)
class TradingCalendar:
    """Strictly increasing sequence of trading dates."""

    days: tuple[date, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        days = tuple(self.days)
        for a, b in zip(days, days[1:]):
            if not a < b:
                raise DataError(f"calendar not strictly increasing at {a} -> {b}")
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "_index", {d: i for i, d in enumerate(days)})

    def __len__(self) -> int:
        return len(self.days)

    def __contains__(self, d) -> bool:
        return d in self._index

    def index(self, d: date) -> int:
        try:
            return self._index[d]
        except KeyError:
            raise CalendarError(f"{d} is not a trading day") from None

    def next_on_or_after(self, d: date) -> date | None:
        i = bisect_left(self.days, d)
        return self.days[i] if i < len(self.days) else None

    def next_after(self, d: date) -> date | None:
        i = bisect_right(self.days, d)
        return self.days[i] if i < len(self.days) else None


def trading_day_at_offset(cal: TradingCalendar, d: date, offset: int) -> date:
    """Return the trading day ``offset`` positions away from ``d``.

    Raises:
        CalendarError: ``d`` is not in ``cal`` or the target index is out of range.
    """
    i = cal.index(d) + offset
    if not 0 <= i < len(cal):
        raise CalendarError(f"offset {offset:+d} from {d} leaves the calendar")
    return cal.days[i]


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    dates: tuple[date, ...]
    closes: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "closes", tuple(float(c) for c in self.closes))
        if len(self.dates) != len(self.closes):
            raise DataError("dates and closes differ in length")
        for d, c in zip(self.dates, self.closes):
            if not c > 0:
                raise DataError(f"non-positive close {c} on {d}")
        # also enforces strictly increasing dates
        object.__setattr__(self, "_calendar", TradingCalendar(self.dates))

    @property
    def calendar(self) -> TradingCalendar:
        return self._calendar

    @property
    def points(self) -> list[tuple[date, float]]:
        return list(zip(self.dates, self.closes))

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class ReturnSeries:
    """Daily simple returns; each return is dated by the later of its two closes."""

    ticker: str
    dates: tuple[date, ...]
    values: tuple[float, ...]

    @property
    def points(self) -> list[tuple[date, float]]:
        return list(zip(self.dates, self.values))

    def __len__(self) -> int:
        return len(self.values)


def compute_returns(prices: PriceSeries) -> ReturnSeries:
    if len(prices) < 2:
        raise DataError(f"{prices.ticker}: need at least 2 closes for returns")
    c = prices.closes
    values = tuple((c[k + 1] - c[k]) / c[k] for k in range(len(c) - 1))
    return ReturnSeries(prices.ticker, prices.dates[1:], values)


def parse_date(text: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"bad date {text!r}, expected YYYY-MM-DD") from None


def read_price_rows(lines: Iterable[str], ticker: str, source: str = "<input>") -> PriceSeries:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise DataError(f"{source}: empty file")
    if tuple(h.strip().lower() for h in header[:2]) != PRICE_HEADER:
        raise DataError(f"{source}: line 1: expected header 'date,close', got {','.join(header)!r}")
    rows: dict[date, float] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < 2:
            raise DataError(f"{source}: malformed row at line {lineno}")
        try:
            d = date.fromisoformat(row[0].strip())
            close = float(row[1])
        except ValueError:
            raise DataError(f"{source}: malformed row at line {lineno}") from None
        if not close > 0:
            raise DataError(f"{source}: non-positive close at line {lineno}")
        if d in rows:
            raise DataError(f"{source}: duplicate date {d} at line {lineno}")
        rows[d] = close
    if not rows:
        raise DataError(f"{source}: empty file")
    ordered = sorted(rows)
    return PriceSeries(ticker, ordered, [rows[d] for d in ordered])


def load_price_series(path, ticker: str | None = None) -> PriceSeries:
    """Load a ``date,close`` CSV; the ticker defaults to the filename stem."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        return read_price_rows(fh, ticker or path.stem, source=str(path))


def dump_price_series(prices: PriceSeries) -> str:
    buf = io.StringIO()
    buf.write("date,close\n")
    for d, c in zip(prices.dates, prices.closes):
        buf.write(f"{d.isoformat()},{c!r}\n")
    return buf.getvalue()


def save_price_series(prices: PriceSeries, path) -> None:
    Path(path).write_text(dump_price_series(prices), encoding="utf-8")


def load_price_dir(directory, tickers: Sequence[str] | None = None) -> dict[str, PriceSeries]:
    """Load ``<TICKER>.csv`` files from a directory, optionally only some tickers."""
    directory = Path(directory)
    if tickers is None:
        paths = sorted(directory.glob("*.csv"))
    else:
        paths = []
        for t in sorted(set(tickers)):
            p = directory / f"{t}.csv"
            if not p.exists():
                raise DataError(f"missing price file for ticker {t} in {directory}")
            paths.append(p)
    return {p.stem: load_price_series(p) for p in paths}
