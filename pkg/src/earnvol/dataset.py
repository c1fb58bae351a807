"""Event tables, the OET statistic, rolling-quarter splits and history augmentation."""

from __future__ import annotations

import csv
import enum
import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DataError,
    DegenerateVariance,
    InsufficientFutureData,
    InsufficientHistory,
)
from .market_data import PriceSeries, compute_returns, load_price_dir, load_price_series, parse_date
from .volatility import (
    TAUS,
    EarningsEvent,
    MarketSession,
    Quarter,
    VolatilityRecord,
    VolConvention,
    post_earnings_volatility,
)

logger = logging.getLogger(__name__)

EARNINGS_HEADER = ("ticker", "date", "session", "year", "quarter")
DEFAULT_SEED = 42


class Provenance(enum.Enum):
    NATIVE = "native"
    AUGMENTED = "augmented"


def read_earnings_rows(lines: Iterable[str], source: str = "<input>") -> list[EarningsEvent]:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        return []
    cols = [h.strip().lower() for h in header]
    missing = [c for c in EARNINGS_HEADER if c not in cols]
    if missing:
        raise DataError(f"{source}: line 1: missing columns {missing}")
    pos = {c: cols.index(c) for c in EARNINGS_HEADER}
    events: list[EarningsEvent] = []
    seen: set[tuple[str, date]] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            ticker = row[pos["ticker"]].strip()
            d = date.fromisoformat(row[pos["date"]].strip())
            session = MarketSession.parse(row[pos["session"]])
            quarter = Quarter(int(row[pos["year"]]), int(row[pos["quarter"]]))
            if not ticker:
                raise ValueError("empty ticker")
            ev = EarningsEvent(ticker, d, session, quarter)
        except (IndexError, ValueError) as exc:
            raise DataError(f"{source}: unparseable earnings row at line {lineno}: {exc}") from None
        if (ticker, d) in seen:
            raise DataError(f"{source}: duplicate event {ticker} {d} at line {lineno}")
        seen.add((ticker, d))
        events.append(ev)
    return events


def load_earnings(path) -> list[EarningsEvent]:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        return read_earnings_rows(fh, source=str(path))


def dump_earnings(events: Iterable[EarningsEvent]) -> str:
    lines = [",".join(EARNINGS_HEADER)]
    for ev in events:
        lines.append(f"{ev.ticker},{ev.announce_date.isoformat()},{ev.session.value},"
                     f"{ev.quarter.year},{ev.quarter.q}")
    return "\n".join(lines) + "\n"


def parse_event_spec(text: str) -> EarningsEvent:
    """Parse ``TICKER,YYYY-MM-DD,session[,YYYYQn]`` into an event."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) not in (3, 4):
        raise DataError(f"bad event {text!r}; expected TICKER,YYYY-MM-DD,session[,YYYYQn]")
    d = parse_date(parts[1])
    quarter = Quarter.parse(parts[3]) if len(parts) == 4 else Quarter(d.year, (d.month - 1) // 3 + 1)
    return EarningsEvent(parts[0], d, MarketSession.parse(parts[2]), quarter)


@dataclass(frozen=True)
class EventTable:
    """Events joined to their post-earnings volatility records.

    ``records`` maps event_id -> tau -> record; ``incomplete`` maps event_id ->
    tau -> reason for every window that could not be computed. An event is
    complete only when it has a record for every tau in ``taus``.
    """

    events: tuple[EarningsEvent, ...]
    records: Mapping[str, Mapping[int, VolatilityRecord]]
    incomplete: Mapping[str, Mapping[int, str]]
    provenance: Mapping[str, Provenance]
    prices: Mapping[str, PriceSeries] = field(repr=False, compare=False)
    taus: tuple[int, ...] = TAUS
    convention: VolConvention = VolConvention.PAPER_LITERAL

    def __post_init__(self):
        events = tuple(sorted(self.events, key=lambda e: (e.announce_date, e.ticker)))
        object.__setattr__(self, "events", events)
        ids = [e.event_id for e in events]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate event_id in table")
        pairs = {(e.ticker, e.announce_date) for e in events}
        if len(pairs) != len(events):
            raise DataError("duplicate (ticker, announce_date) in table")
        object.__setattr__(self, "_by_id", {e.event_id: e for e in events})
        by_ticker: dict[str, list[EarningsEvent]] = defaultdict(list)
        for e in events:
            by_ticker[e.ticker].append(e)
        object.__setattr__(self, "_by_ticker", dict(by_ticker))

    def __len__(self) -> int:
        return len(self.events)

    def event(self, event_id: str) -> EarningsEvent:
        return self._by_id[event_id]

    def ticker_events(self, ticker: str) -> list[EarningsEvent]:
        return list(self._by_ticker.get(ticker, ()))

    def is_complete(self, event_id: str) -> bool:
        recs = self.records.get(event_id, {})
        return all(t in recs for t in self.taus)

    def complete_events(self) -> list[EarningsEvent]:
        return [e for e in self.events if self.is_complete(e.event_id)]

    def value(self, event_id: str, tau: int) -> float:
        return self.records[event_id][tau].value

    def quarters(self) -> list[Quarter]:
        return sorted({e.quarter for e in self.events})

    def to_dict(self) -> dict:
        rows = []
        for e in sorted(self.events, key=lambda e: e.event_id):
            rows.append({
                "event_id": e.event_id,
                "ticker": e.ticker,
                "date": e.announce_date.isoformat(),
                "session": e.session.value,
                "quarter": str(e.quarter),
                "provenance": self.provenance[e.event_id].value,
                "complete": self.is_complete(e.event_id),
                "volatility": {str(t): r.value for t, r in sorted(self.records.get(e.event_id, {}).items())},
                "incomplete": {str(t): why for t, why in sorted(self.incomplete.get(e.event_id, {}).items())},
            })
        n_complete = sum(r["complete"] for r in rows)
        return {
            "convention": self.convention.value,
            "taus": list(self.taus),
            "n_events": len(rows),
            "n_complete": n_complete,
            "n_incomplete": len(rows) - n_complete,
            "events": rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _volatility_records(events: Sequence[EarningsEvent], prices: Mapping[str, PriceSeries],
                        taus: Sequence[int], convention: VolConvention):
    records: dict[str, dict[int, VolatilityRecord]] = {}
    incomplete: dict[str, dict[int, str]] = {}
    returns = {}
    for ev in events:
        p = prices[ev.ticker]
        if ev.ticker not in returns:
            returns[ev.ticker] = compute_returns(p)
        recs, bad = {}, {}
        for tau in taus:
            try:
                recs[tau] = post_earnings_volatility(ev, p, tau, convention, returns=returns[ev.ticker])
            except InsufficientFutureData:
                bad[tau] = "insufficient_future_data"
            except InsufficientHistory:
                bad[tau] = "insufficient_history"
            except DegenerateVariance:
                bad[tau] = "degenerate_variance"
        records[ev.event_id] = recs
        if bad:
            incomplete[ev.event_id] = bad
    return records, incomplete


def build_event_table_from(events: Sequence[EarningsEvent], prices: Mapping[str, PriceSeries],
                           convention: VolConvention = VolConvention.PAPER_LITERAL,
                           taus: Sequence[int] = TAUS) -> EventTable:
    missing = sorted({e.ticker for e in events} - set(prices))
    if missing:
        raise DataError(f"missing price series for tickers {missing}")
    taus = tuple(sorted(taus))
    records, incomplete = _volatility_records(events, prices, taus, convention)
    if incomplete:
        logger.info("%d of %d events incomplete", len(incomplete), len(events))
    return EventTable(
        events=tuple(events),
        records=records,
        incomplete=incomplete,
        provenance={e.event_id: Provenance.NATIVE for e in events},
        prices=dict(prices),
        taus=taus,
        convention=convention,
    )


def build_event_table(earnings_file, prices_dir, convention: VolConvention = VolConvention.PAPER_LITERAL,
                      taus: Sequence[int] = TAUS) -> EventTable:
    """Load earnings metadata and per-ticker price files and compute all windows."""
    events = load_earnings(earnings_file)
    prices = load_price_dir(prices_dir, tickers=[e.ticker for e in events])
    return build_event_table_from(events, prices, convention, taus)


def oet_counts(train_events: Iterable[EarningsEvent], test_events: Iterable[EarningsEvent]) -> tuple[int, int]:
    """(training earnings whose ticker is tested, distinct test tickers)."""
    test_tickers = {e.ticker for e in test_events}
    overlap = sum(1 for e in train_events if e.ticker in test_tickers)
    return overlap, len(test_tickers)


def oet(train_events: Iterable[EarningsEvent], test_events: Iterable[EarningsEvent]) -> float:
    """Overlapping earnings per ticker.

    Number of training earnings whose ticker appears in the test set, divided
    by the number of distinct test tickers.
    """
    num, den = oet_counts(train_events, test_events)
    if den == 0:
        raise ZeroDivisionError("OET undefined for an empty test set")
    return num / den


@dataclass(frozen=True)
class Split:
    train: frozenset[str]
    val: frozenset[str]
    test: frozenset[str]
    target_quarter: Quarter
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        if self.train & self.val or self.train & self.test or self.val & self.test:
            raise DataError("train/val/test overlap")

    @property
    def pool(self) -> frozenset[str]:
        """Everything the predictors may look at: train and validation."""
        return self.train | self.val

    def to_dict(self) -> dict:
        return {
            "target_quarter": str(self.target_quarter),
            "seed": self.seed,
            "train": sorted(self.train),
            "val": sorted(self.val),
            "test": sorted(self.test),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def check_temporal_hygiene(table: EventTable, split: Split) -> None:
    if not split.test or not split.pool:
        return
    first_test = min(table.event(i).announce_date for i in split.test)
    last_pool = max(table.event(i).announce_date for i in split.pool)
    if last_pool >= first_test:
        raise DataError(f"temporal leak: pool event on {last_pool} not before first test event {first_test}")


def rolling_quarter_split(table: EventTable, target: Quarter, ratio: tuple[int, int] = (2, 1),
                          seed: int = DEFAULT_SEED) -> Split:
    """Test on one quarter; shuffle all earlier quarters into train/val.

    Native prior events are sorted by id, shuffled with ``random.Random(seed)``
    and cut train:val = ``ratio`` with the validation size floored. Augmented
    events carry no transcripts and always go to train.
    """
    target = Quarter(*target)
    n_tr, n_va = ratio
    if n_tr <= 0 or n_va < 0:
        raise ValueError(f"bad ratio {ratio}")
    complete = table.complete_events()
    test = [e.event_id for e in complete
            if e.quarter == target and table.provenance[e.event_id] is Provenance.NATIVE]
    prior = [e for e in complete if e.quarter < target]
    if not prior:
        raise DataError(f"no complete events before {target}")
    native = sorted(e.event_id for e in prior if table.provenance[e.event_id] is Provenance.NATIVE)
    augmented = [e.event_id for e in prior if table.provenance[e.event_id] is Provenance.AUGMENTED]
    random.Random(seed).shuffle(native)
    n_val = len(native) * n_va // (n_tr + n_va)
    split = Split(
        train=frozenset(native[:len(native) - n_val]) | frozenset(augmented),
        val=frozenset(native[len(native) - n_val:]),
        test=frozenset(test),
        target_quarter=target,
        seed=seed,
    )
    check_temporal_hygiene(table, split)
    return split


def _years_before(d: date, years: int) -> date:
    try:
        return d.replace(year=d.year - years)
    except ValueError:  # Feb 29
        return d.replace(year=d.year - years, day=28)


def merge_prices(native: PriceSeries, extended: PriceSeries, rtol: float = 1e-9) -> PriceSeries:
    """Union of two price histories; overlapping closes must agree."""
    closes = dict(zip(extended.dates, extended.closes))
    for d, c in zip(native.dates, native.closes):
        other = closes.get(d)
        if other is not None and abs(other - c) > rtol * abs(c):
            raise DataError(f"{native.ticker}: extended close {other} conflicts with native {c} on {d}")
        closes[d] = c
    ordered = sorted(closes)
    return PriceSeries(native.ticker, ordered, [closes[d] for d in ordered])


def augment_history(table: EventTable, extended_prices_dir, extended_earnings_file, years: int = 5) -> EventTable:
    """Left-extend the table with earlier earnings whose volatility comes from extended prices.

    Added events are tagged ``Provenance.AUGMENTED`` and only ever serve as
    training history. Native records are carried over untouched.
    """
    path = Path(extended_earnings_file)
    ext_events = load_earnings(path) if path.exists() else []
    if not table.events:
        return table
    start = min(e.announce_date for e in table.events)
    lower = _years_before(start, years)
    present = {(e.ticker, e.announce_date) for e in table.events}
    new = [e for e in ext_events if e.announce_date >= lower and (e.ticker, e.announce_date) not in present]
    if not new:
        return table

    prices = dict(table.prices)
    ext_dir = Path(extended_prices_dir)
    for ticker in sorted({e.ticker for e in new}):
        p = ext_dir / f"{ticker}.csv"
        if p.exists():
            ext = load_price_series(p)
            prices[ticker] = merge_prices(prices[ticker], ext) if ticker in prices else ext
        elif ticker not in prices:
            raise DataError(f"missing price file for ticker {ticker} in {ext_dir}")

    records, incomplete = _volatility_records(new, prices, table.taus, table.convention)
    provenance = dict(table.provenance)
    provenance.update({e.event_id: Provenance.AUGMENTED for e in new})
    logger.info("augmented %d events (%d incomplete)", len(new), len(incomplete))
    return EventTable(
        events=table.events + tuple(new),
        records={**table.records, **records},
        incomplete={**table.incomplete, **incomplete},
        provenance=provenance,
        prices=prices,
        taus=table.taus,
        convention=table.convention,
    )


def same_ticker_history(table: EventTable, event: EarningsEvent,
                        pool: Iterable[str] | None = None) -> dict[int, list[VolatilityRecord]]:
    """Records of the ticker's earlier complete events, chronologically, per tau.

    ``pool`` restricts the history to a set of event ids (e.g. a split's train
    and validation events).
    """
    if pool is not None and not isinstance(pool, (set, frozenset)):
        pool = set(pool)
    out: dict[int, list[VolatilityRecord]] = {t: [] for t in table.taus}
    for e in table.ticker_events(event.ticker):
        if e.announce_date >= event.announce_date:
            break
        if pool is not None and e.event_id not in pool:
            continue
        if not table.is_complete(e.event_id):
            continue
        for t in table.taus:
            out[t].append(table.records[e.event_id][t])
    return out
