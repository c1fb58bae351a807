from __future__ import annotations

from datetime import date

import pytest

from earnvol import synthetic
from earnvol.dataset import build_event_table_from
from earnvol.market_data import PriceSeries
from earnvol.volatility import EarningsEvent, MarketSession, Quarter

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record_acceptance(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2}: {status}  " + "; ".join(d for _, d in parts))


TGT_DAYS = [date(2017, 11, d) for d in (13, 14, 15, 16, 17, 20, 21, 22, 24, 27, 28, 29, 30)]


@pytest.fixture
def tgt_prices() -> PriceSeries:
    """TGT-like closes around the 2017-11-15 release; Nov 18-19 weekend, Nov 23 holiday."""
    closes = [60.0, 59.1, 54.9, 55.4, 56.2, 57.0, 57.3, 58.1, 59.9, 59.5, 60.1, 60.8, 59.8]
    return PriceSeries("TGT", TGT_DAYS, closes)


@pytest.fixture
def tgt_event():
    def make(session=MarketSession.BEFORE_OPEN):
        return EarningsEvent("TGT", date(2017, 11, 15), session, Quarter(2017, 4))
    return make


@pytest.fixture(scope="session")
def synth():
    return synthetic.generate()


@pytest.fixture(scope="session")
def synth_table(synth):
    return build_event_table_from(synth.events, synth.prices)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory, synth):
    out = tmp_path_factory.mktemp("synth")
    earnings, prices = synthetic.write(synth, out)
    return out, earnings, prices


@pytest.fixture(scope="session")
def small_synth():
    return synthetic.generate(n_tickers=12, years=range(2020, 2022), seed=3)


@pytest.fixture(scope="session")
def small_dir(tmp_path_factory, small_synth):
    out = tmp_path_factory.mktemp("small")
    earnings, prices = synthetic.write(small_synth, out)
    return out, earnings, prices
