from __future__ import annotations

import json
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earnvol import synthetic
from earnvol.dataset import (
    EventTable,
    Provenance,
    Split,
    augment_history,
    build_event_table,
    build_event_table_from,
    check_temporal_hygiene,
    dump_earnings,
    load_earnings,
    merge_prices,
    oet,
    oet_counts,
    parse_event_spec,
    read_earnings_rows,
    rolling_quarter_split,
    same_ticker_history,
)
from earnvol.errors import DataError
from earnvol.market_data import PriceSeries, dump_price_series
from earnvol.volatility import TAUS, EarningsEvent, MarketSession, Quarter, VolConvention

BO, AC = MarketSession.BEFORE_OPEN, MarketSession.AFTER_CLOSE


def walk(ticker, start, n, seed=0):
    rng = np.random.default_rng(seed)
    days = synthetic.business_days(start, start + timedelta(days=2 * n + 10))[:n]
    closes = 20 * np.cumprod(np.concatenate([[1.0], 1 + 0.02 * rng.standard_normal(n - 1)]))
    return PriceSeries(ticker, days, closes)


def test_single_event_has_four_records():
    p = walk("X", date(2020, 1, 1), 60)
    ev = EarningsEvent("X", p.dates[19], BO, Quarter(2020, 1))  # 40 post closes remain
    table = build_event_table_from([ev], {"X": p})
    assert len(table) == 1
    assert sorted(table.records[ev.event_id]) == list(TAUS)
    assert table.is_complete(ev.event_id)
    assert table.complete_events() == [ev]


def test_short_future_flags_long_windows():
    p = walk("X", date(2020, 1, 1), 40)
    ev = EarningsEvent("X", p.dates[-10], AC, Quarter(2020, 1))  # 9 post returns
    table = build_event_table_from([ev], {"X": p})
    assert sorted(table.records[ev.event_id]) == [3, 7]
    assert table.incomplete[ev.event_id] == {15: "insufficient_future_data", 30: "insufficient_future_data"}
    assert table.complete_events() == []


def test_missing_prices():
    ev = EarningsEvent("X", date(2020, 1, 2), BO, Quarter(2020, 1))
    with pytest.raises(DataError, match="missing price"):
        build_event_table_from([ev], {})


def test_dec_shape(synth_table):
    assert len(synth_table) == 1800
    assert len({e.ticker for e in synth_table.events}) == 90
    assert len(synth_table.quarters()) == 20
    assert len(synth_table.complete_events()) == 1800


def test_build_from_files_matches_memory(synth_dir, synth_table):
    _, earnings, prices = synth_dir
    table = build_event_table(earnings, prices)
    assert table.to_json() == synth_table.to_json()


def test_sample_std_table_shift(small_synth):
    a = build_event_table_from(small_synth.events, small_synth.prices, VolConvention.PAPER_LITERAL)
    b = build_event_table_from(small_synth.events, small_synth.prices, VolConvention.SAMPLE_STD)
    e = a.events[5].event_id
    for t in TAUS:
        assert a.value(e, t) - b.value(e, t) == pytest.approx(0.5 * np.log(t), abs=1e-12)


# -- earnings file ------------------------------------------------------------

def test_earnings_round_trip(small_synth, tmp_path):
    p = tmp_path / "e.csv"
    p.write_text(dump_earnings(small_synth.events), encoding="utf-8")
    assert load_earnings(p) == small_synth.events


def test_earnings_extra_column_and_errors():
    rows = ["ticker,date,session,year,quarter,sector", "AAA,2020-01-30,before_open,2020,1,tech"]
    (ev,) = read_earnings_rows(rows)
    assert ev.event_id == "AAA-2020-01-30" and ev.quarter == Quarter(2020, 1)
    with pytest.raises(DataError, match="line 2"):
        read_earnings_rows(["ticker,date,session,year,quarter", "AAA,2020-01-30,midday,2020,1"])
    with pytest.raises(DataError, match="duplicate"):
        read_earnings_rows(rows + ["AAA,2020-01-30,after_close,2020,1,tech"])
    with pytest.raises(DataError, match="missing columns"):
        read_earnings_rows(["ticker,date", "AAA,2020-01-30"])


def test_parse_event_spec():
    ev = parse_event_spec("TGT,2017-11-15,before_open")
    assert ev.quarter == Quarter(2017, 4) and ev.session is BO
    assert parse_event_spec("TGT,2017-11-15,after_close,2018Q3").quarter == Quarter(2018, 3)
    with pytest.raises(DataError):
        parse_event_spec("TGT,2017-11-15")


# -- OET ----------------------------------------------------------------------

def oet_fixture(overlap, test_tickers, other=0):
    """Training earnings: ``overlap`` on test tickers (round-robin), ``other`` elsewhere."""
    test = [EarningsEvent(f"T{i}", date(2018, 1, 10), BO, Quarter(2018, 1)) for i in range(test_tickers)]
    train = []
    for k in range(overlap):
        train.append(EarningsEvent(f"T{k % test_tickers}", date(2017, 1, 2) - timedelta(days=k // test_tickers),
                                   AC, Quarter(2016, 4)))
    for k in range(other):
        train.append(EarningsEvent(f"O{k}", date(2017, 1, 2), AC, Quarter(2016, 4)))
    return train, test


@pytest.mark.parametrize("overlap, tickers, expected", [(178, 112, 1.589), (94, 154, 0.610)])
def test_oet_printed_values(overlap, tickers, expected):
    train, test = oet_fixture(overlap, tickers, other=200)
    assert oet_counts(train, test) == (overlap, tickers)
    assert oet(train, test) == pytest.approx(expected, abs=1e-3)


def test_oet_disjoint_and_empty():
    train, test = oet_fixture(0, 5, other=10)
    assert oet(train, test) == 0.0
    with pytest.raises(ZeroDivisionError):
        oet(train, [])


def test_oet_counts_repeated_test_tickers():
    # a test ticker appearing twice is still one ticker
    train, test = oet_fixture(6, 3)
    test = test + [EarningsEvent("T0", date(2018, 3, 1), BO, Quarter(2018, 1))]
    assert oet_counts(train, test) == (6, 3)


# -- splits -------------------------------------------------------------------

def test_dec_split_sizes(synth_table):
    s = rolling_quarter_split(synth_table, Quarter(2021, 1))
    assert (len(s.train), len(s.val), len(s.test)) == (480, 240, 90)
    assert all(synth_table.event(e).quarter == Quarter(2021, 1) for e in s.test)
    assert all(synth_table.event(e).quarter < Quarter(2021, 1) for e in s.pool)
    assert s.seed == 42


def test_three_prior_events():
    p = walk("X", date(2020, 1, 1), 400)
    evs = [EarningsEvent("X", p.dates[20 + 60 * k], BO, Quarter(2020, k + 1)) for k in range(4)]
    table = build_event_table_from(evs, {"X": p})
    s = rolling_quarter_split(table, Quarter(2020, 4))
    assert (len(s.train), len(s.val), len(s.test)) == (2, 1, 1)


def test_split_determinism_and_seed(synth_table):
    a = rolling_quarter_split(synth_table, Quarter(2022, 3))
    b = rolling_quarter_split(synth_table, Quarter(2022, 3))
    assert a == b and a.to_json() == b.to_json()
    c = rolling_quarter_split(synth_table, Quarter(2022, 3), seed=7)
    assert c.pool == a.pool and c.train != a.train


def test_split_independent_of_input_order(small_synth):
    a = build_event_table_from(small_synth.events, small_synth.prices)
    b = build_event_table_from(list(reversed(small_synth.events)), small_synth.prices)
    q = Quarter(2021, 2)
    assert rolling_quarter_split(a, q).to_json() == rolling_quarter_split(b, q).to_json()


def test_split_errors(small_synth):
    table = build_event_table_from(small_synth.events, small_synth.prices)
    with pytest.raises(DataError):
        rolling_quarter_split(table, Quarter(2020, 1))
    with pytest.raises(DataError):
        Split({"a"}, {"a"}, set(), Quarter(2020, 1))


def test_temporal_hygiene_detects_leak(small_synth):
    table = build_event_table_from(small_synth.events, small_synth.prices)
    s = rolling_quarter_split(table, Quarter(2021, 1))
    late = [e for e in table.events if e.quarter == Quarter(2021, 3)][0].event_id
    leaked = Split(s.train | {late}, s.val, s.test, s.target_quarter)
    with pytest.raises(DataError, match="temporal leak"):
        check_temporal_hygiene(table, leaked)


@settings(max_examples=25, deadline=None)
@given(st.integers(2019, 2023), st.integers(1, 4), st.integers(0, 10_000))
def test_split_invariants(synth_table, year, q, seed):
    target = Quarter(year, q)
    if target == Quarter(2019, 1):
        return
    s = rolling_quarter_split(synth_table, target, seed=seed)
    assert not (s.train & s.val or s.train & s.test or s.val & s.test)
    quarter_start = date(year, 3 * (q - 1) + 1, 1)
    assert all(synth_table.event(e).announce_date < quarter_start for e in s.pool)
    assert len(s.val) == len(s.pool) // 3


# -- history ------------------------------------------------------------------

def test_same_ticker_history(small_synth):
    table = build_event_table_from(small_synth.events, small_synth.prices)
    evs = table.ticker_events("T000")
    hist = same_ticker_history(table, evs[3])
    assert [r.event_id for r in hist[3]] == [e.event_id for e in evs[:3]]
    assert same_ticker_history(table, evs[0]) == {t: [] for t in TAUS}
    pooled = same_ticker_history(table, evs[3], pool={evs[0].event_id, evs[2].event_id})
    assert [r.event_id for r in pooled[7]] == [evs[0].event_id, evs[2].event_id]


# -- augmentation -------------------------------------------------------------

@pytest.fixture(scope="module")
def long_history(tmp_path_factory):
    """Native 2019-2020 and an extended 2013-2018 slice of the same price paths."""
    data = synthetic.generate(n_tickers=6, years=range(2013, 2021), seed=21)
    native_start = date(2018, 9, 1)
    native_events = [e for e in data.events if e.quarter.year >= 2019]
    ext_events = [e for e in data.events if e.quarter.year < 2019]
    native_prices = {}
    for t, p in data.prices.items():
        keep = [i for i, d in enumerate(p.dates) if d >= native_start]
        native_prices[t] = PriceSeries(t, [p.dates[i] for i in keep], [p.closes[i] for i in keep])
    root = tmp_path_factory.mktemp("aug")
    (root / "ext" / "prices").mkdir(parents=True)
    for t, p in data.prices.items():
        (root / "ext" / "prices" / f"{t}.csv").write_text(dump_price_series(p), encoding="utf-8")
    (root / "ext" / "earnings.csv").write_text(dump_earnings(ext_events), encoding="utf-8")
    table = build_event_table_from(native_events, native_prices)
    return table, root / "ext", ext_events


def test_augment_counts_and_provenance(long_history):
    table, ext, ext_events = long_history
    out = augment_history(table, ext / "prices", ext / "earnings.csv", years=5)
    lower = min(x.announce_date for x in table.events).replace(year=2014)
    expected = [e for e in ext_events if e.announce_date >= lower]
    assert 0 < len(expected) < len(ext_events)
    n_aug = sum(p is Provenance.AUGMENTED for p in out.provenance.values())
    assert n_aug == len(expected)
    assert len(out) == len(table) + len(expected)
    for e in table.events:
        assert out.provenance[e.event_id] is Provenance.NATIVE
        assert out.records[e.event_id] == table.records[e.event_id]


def test_augment_grows_history_and_oet(long_history):
    table, ext, _ = long_history
    out = augment_history(table, ext / "prices", ext / "earnings.csv", years=5)
    target = Quarter(2020, 1)
    ev = [e for e in table.events if e.quarter == target][0]
    before = len(same_ticker_history(table, ev)[3])
    injected = [e for e in out.ticker_events(ev.ticker)
                if out.provenance[e.event_id] is Provenance.AUGMENTED and out.is_complete(e.event_id)]
    assert len(same_ticker_history(out, ev)[3]) == before + len(injected)

    s0 = rolling_quarter_split(table, target)
    s1 = rolling_quarter_split(out, target)
    assert s1.test == s0.test
    aug_ids = {e for e, p in out.provenance.items() if p is Provenance.AUGMENTED}
    assert not (aug_ids & s1.val) and not (aug_ids & s1.test)
    test = [out.event(e) for e in s1.test]
    assert oet([out.event(e) for e in s1.pool], test) > oet([table.event(e) for e in s0.pool], test)


def test_augment_empty_extension(long_history, tmp_path):
    table, ext, _ = long_history
    (tmp_path / "earnings.csv").write_text("ticker,date,session,year,quarter\n", encoding="utf-8")
    out = augment_history(table, ext / "prices", tmp_path / "earnings.csv")
    assert out == table
    assert out.provenance == table.provenance


def test_merge_prices_conflict():
    a = PriceSeries("X", [date(2020, 1, 2), date(2020, 1, 3)], [10.0, 11.0])
    b = PriceSeries("X", [date(2020, 1, 1), date(2020, 1, 2)], [9.0, 10.0])
    assert merge_prices(a, b).closes == (9.0, 10.0, 11.0)
    with pytest.raises(DataError, match="conflicts"):
        merge_prices(a, PriceSeries("X", [date(2020, 1, 2)], [10.5]))


def test_table_json_is_valid(small_synth):
    table = build_event_table_from(small_synth.events, small_synth.prices)
    doc = json.loads(table.to_json())
    assert doc["n_events"] == len(small_synth.events)
    assert doc["convention"] == "paper_literal"
    assert isinstance(table, EventTable)
