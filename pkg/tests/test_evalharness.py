from __future__ import annotations

import json

import numpy as np
import pytest

from earnvol.baselines import PredictionSet
from earnvol.errors import ConfigError, DataError
from earnvol.evalharness import (
    ReportRow,
    expand_quarters,
    load_config,
    mse,
    parse_config,
    render_table,
    run_experiment,
)
from earnvol.volatility import Quarter, VolatilityRecord, VolConvention


def truth_and_preds(n=100, seed=0, offset=0.0):
    rng = np.random.default_rng(seed)
    values = rng.normal(-3, 0.7, n)
    truth = [VolatilityRecord(f"E{k:03d}", 3, float(v)) for k, v in enumerate(values)]
    ps = PredictionSet("m")
    for r in truth:
        ps.set(r.event_id, 3, r.value + offset)
    return truth, ps


def test_mse_examples():
    truth, ps = truth_and_preds()
    assert mse(ps, truth, 3) == 0.0
    truth, ps = truth_and_preds(offset=0.5)
    assert mse(ps, truth, 3) == 0.25


def test_mse_brute_force():
    truth, _ = truth_and_preds(seed=1)
    rng = np.random.default_rng(2)
    ps = PredictionSet("m")
    for r in truth:
        ps.set(r.event_id, 3, float(rng.normal(-3, 1)))
    total = 0.0
    for r in truth:
        d = ps.predictions[r.event_id][3] - r.value
        total += d * d
    assert mse(ps, truth, 3) == pytest.approx(total / len(truth), rel=1e-12)


def test_mse_missing_prediction():
    truth, ps = truth_and_preds(5)
    del ps.predictions["E002"]
    with pytest.raises(DataError, match="E002"):
        mse(ps, truth, 3)
    with pytest.raises(DataError):
        mse(ps, truth, 7)


def test_row_mean_and_published_row():
    row = ReportRow("PEV(Mean)", Quarter(2017, 1), {3: 0.743, 7: 0.389, 15: 0.262, 30: 0.201}, 112, 0)
    assert round(row.mse_mean, 3) == 0.399
    assert row.to_dict()["mse"] == {"3": 0.743, "7": 0.389, "15": 0.262, "30": 0.201}


def test_expand_quarters():
    assert expand_quarters(["2021Q3-2022Q2"]) == (Quarter(2021, 3), Quarter(2021, 4), Quarter(2022, 1),
                                                  Quarter(2022, 2))
    assert expand_quarters(["2021Q1", "2020Q4", "2021Q1"]) == (Quarter(2020, 4), Quarter(2021, 1))
    with pytest.raises(ConfigError):
        expand_quarters(["2022Q1-2021Q1"])


def base_doc(earnings, prices, **experiment):
    exp = {"models": ["PEV(Mean)", "STPEV(Mean)"], "quarters": ["2021Q1-2023Q4"]}
    exp.update(experiment)
    return {"data": {"earnings": str(earnings), "prices": str(prices)}, "experiment": exp}


@pytest.mark.parametrize("change, msg", [
    ({"models": ["STPEV(Max)"]}, "unknown model"),
    ({"models": ["Embedding(openai)"]}, "no file"),
    ({"models": []}, "no models"),
    ({"convention": "stdev"}, "convention"),
    ({"split_ratio": [0, 1]}, "split_ratio"),
    ({"threads": 0}, "threads"),
    ({"quarters": ["2021Q9"]}, "quarter"),
])
def test_config_validation(change, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(base_doc("e.csv", "p", **change))


def test_config_missing_section():
    with pytest.raises(ConfigError, match="missing"):
        parse_config({"data": {"earnings": "e", "prices": "p"}})


def test_unknown_model_fails_before_compute(tmp_path):
    # the data paths do not exist: a compute attempt would raise OSError instead
    cfg = tmp_path / "bad.toml"
    cfg.write_text('[data]\nearnings = "nope.csv"\nprices = "nope"\n'
                   '[experiment]\nmodels = ["Foo(Bar)"]\nquarters = ["2021Q1"]\n', encoding="utf-8")
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_config_file_relative_paths(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text('[data]\nearnings = "earnings.csv"\nprices = "prices"\n'
                   '[experiment]\nmodels = ["PEV(Mean)"]\nquarters = ["2021Q1"]\nconvention = "sample_std"\n'
                   '[analysis]\ndrift = true\n', encoding="utf-8")
    c = load_config(cfg)
    assert c.earnings == tmp_path / "earnings.csv"
    assert c.convention is VolConvention.SAMPLE_STD
    assert c.seed == 42 and c.drift == {"horizon": 10, "tau": 3}


def test_report_shape(synth_dir):
    _, earnings, prices = synth_dir
    report = run_experiment(parse_config(base_doc(earnings, prices)))
    assert len(report.rows) == 24 and not report.errors
    assert [(r.model, str(r.quarter)) for r in report.rows][:2] == [("PEV(Mean)", "2021Q1"), ("PEV(Mean)", "2021Q2")]
    for r in report.rows:
        assert sorted(r.mse) == [3, 7, 15, 30]
        assert all(v >= 0 for v in r.mse.values())
    assert report.splits[0] == {"quarter": "2021Q1", "n_train": 480, "n_val": 240, "n_test": 90,
                                "oet": pytest.approx(8.0)}
    assert report.dataset["n_complete"] == 1800
    text = report.render_text()
    assert "STPEV(Mean)" in text
    assert sum(line.startswith("2022 ") for line in text.splitlines()) == 2


def test_stpev_beats_pev_after_second_quarter(synth_dir):
    _, earnings, prices = synth_dir
    report = run_experiment(parse_config(base_doc(earnings, prices, quarters=["2019Q3-2020Q4"])))
    cells = {(r.model, r.quarter): r.mse_mean for r in report.rows}
    for q in expand_quarters(["2019Q3-2020Q4"]):
        assert cells[("STPEV(Mean)", q)] < cells[("PEV(Mean)", q)]


def test_cell_error_does_not_abort(synth_dir):
    _, earnings, prices = synth_dir
    doc = base_doc(earnings, prices, models=["STPEV(Mean)", "STPEV(LR)"], quarters=["2019Q1", "2019Q2"])
    report = run_experiment(parse_config(doc))
    assert {e["quarter"] for e in report.errors} == {"2019Q1"}
    assert "split" in report.errors[0]["error"]
    assert [str(r.quarter) for r in report.rows] == ["2019Q2", "2019Q2"]
    mean, lr = report.rows
    # every ticker has a 2019Q1 event, but no pool event has history to regress on
    assert mean.n_fallback == 0 and lr.n_fallback == 90


def test_artifacts_and_thread_determinism(small_dir, tmp_path):
    _, earnings, prices = small_dir
    doc = base_doc(earnings, prices, models=["PEV(Median)", "STPEV(Mean)", "STPEV(LR)", "Random(Ticker)"],
                   quarters=["2020Q3-2021Q4"])
    doc["embeddings"] = {"dim": 16, "seed": 1}
    doc["analysis"] = {"drift": {"horizon": 3, "tau": 3}, "similarity": True, "signature": True,
                       "correlation": [["Random(Ticker)", "STPEV(Mean)"]]}
    cfg = parse_config(doc)
    a = run_experiment(cfg, out_dir=tmp_path / "a", threads=1)
    b = run_experiment(cfg, out_dir=tmp_path / "b", threads=4)
    assert a.to_json() == b.to_json()
    for name in ("report.json", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    preds = sorted(p.name for p in (tmp_path / "a" / "predictions").iterdir())
    assert len(preds) == 4 * 6 and "STPEV_Mean_2021Q4.json" in preds
    doc = json.loads((tmp_path / "a" / "report.json").read_text())
    assert set(doc["analysis"]) == {"drift", "similarity", "signature", "correlation"}
    assert doc["analysis"]["similarity"][0]["within_ticker"] == 1.0


def test_render_table_empty_and_partial():
    assert render_table([]) == "(no results)\n"
    row = ReportRow("PEV(Mean)", Quarter(2021, 2), {3: 0.5, 7: 0.25}, 10, 0)
    text = render_table([row])
    assert "0.375" in text and "Q1" in text
