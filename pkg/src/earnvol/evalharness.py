"""MSE scoring, report assembly and the config-driven experiment runner.

A config is a TOML document::

    [data]
    earnings = "earnings.csv"          # relative to the config file
    prices = "prices"

    [experiment]
    convention = "paper_literal"       # or "sample_std"
    taus = [3, 7, 15, 30]
    models = ["PEV(Mean)", "STPEV(Mean)", "Random(Ticker)"]
    quarters = ["2021Q1-2023Q4"]       # single quarters or inclusive ranges
    seed = 42
    split_ratio = [2, 1]
    threads = 4

    [augment]                          # optional left-extension of history
    earnings = "ext/earnings.csv"
    prices = "ext/prices"
    years = 5

    [embeddings]                       # vectors for Random(...) / Embedding(name)
    dim = 512
    seed = 0
    ridge = 100.0                      # omit to pick it on the validation set
    files = { openai = "openai.jsonl" }

    [analysis]
    drift = { horizon = 10, tau = 3 }
    similarity = true
    signature = true
    correlation = [["Random(Ticker)", "STPEV(Mean)"]]
"""

from __future__ import annotations

import json
import logging
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import analysis
from .baselines import PredictionSet, embedding_regression, parse_model, run_baseline
from .dataset import (
    DEFAULT_SEED,
    EventTable,
    Split,
    augment_history,
    build_event_table,
    oet_counts,
    rolling_quarter_split,
)
from .errors import ConfigError, DataError, EarnvolError
from .volatility import TAUS, Quarter, VolatilityRecord, VolConvention, event_window_profile

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

EMBEDDING_MODEL = re.compile(r"Embedding\((?P<name>[^)]+)\)")
QUARTER_RANGE = re.compile(r"\s*(\d{4}[Qq][1-4])\s*-\s*(\d{4}[Qq][1-4])\s*")
RANDOM_MODELS = {"Random(All)": analysis.RandomMode.ALL, "Random(Ticker)": analysis.RandomMode.TICKER}


def mse(preds: PredictionSet, truth: Iterable[VolatilityRecord], tau: int) -> float:
    """Mean squared error of ``preds`` over the truth records for ``tau``."""
    sq = []
    for rec in truth:
        if rec.tau != tau:
            continue
        try:
            p = preds.get(rec.event_id, tau)
        except KeyError:
            raise DataError(f"{preds.model}: missing prediction for {rec.event_id} tau={tau}") from None
        sq.append((p - rec.value) ** 2)
    if not sq:
        raise DataError(f"no test records for tau={tau}")
    return math.fsum(sq) / len(sq)


def mean_of(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


@dataclass
class ReportRow:
    model: str
    quarter: Quarter
    mse: dict[int, float]
    n_test: int
    n_fallback: int

    @property
    def mse_mean(self) -> float:
        return mean_of([self.mse[t] for t in sorted(self.mse)])

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "quarter": str(self.quarter),
            "mse_mean": self.mse_mean,
            "mse": {str(t): v for t, v in sorted(self.mse.items())},
            "n_test": self.n_test,
            "n_fallback": self.n_fallback,
        }


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    splits: list[dict] = field(default_factory=list)
    analysis: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "dataset": self.dataset,
            "splits": self.splits,
            "rows": [r.to_dict() for r in self.rows],
            "errors": self.errors,
            "analysis": self.analysis,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def render_text(self) -> str:
        return render_table(self.rows)


def _clean(obj):
    """Replace non-finite floats with None so the report stays valid JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def render_table(rows: Sequence[ReportRow]) -> str:
    """Year x model blocks, four quarters of (mean, per-tau) MSE plus a yearly average."""
    if not rows:
        return "(no results)\n"
    taus = sorted({t for r in rows for t in r.mse})
    models = list(dict.fromkeys(r.model for r in rows))
    cells = {(r.model, r.quarter): r for r in rows}
    years = sorted({r.quarter.year for r in rows})
    width = max(len(m) for m in models)
    head = ["MSE"] + [f"MSE{t}" for t in taus]
    lines = []
    header = f"{'Year':<5} {'Model':<{width}} | " + " | ".join(
        " ".join(f"{h:>7}" for h in head) + f"  Q{q}" for q in range(1, 5)) + " |     Avg"
    lines.append(header)
    lines.append("-" * len(header))
    for y in years:
        for m in models:
            parts, means = [], []
            for q in range(1, 5):
                row = cells.get((m, Quarter(y, q)))
                if row is None:
                    parts.append(" ".join(f"{'-':>7}" for _ in head) + "    ")
                else:
                    means.append(row.mse_mean)
                    vals = [row.mse_mean] + [row.mse[t] for t in taus]
                    parts.append(" ".join(f"{v:7.3f}" for v in vals) + "    ")
            avg = f"{mean_of(means):7.3f}" if means else f"{'-':>7}"
            lines.append(f"{y:<5} {m:<{width}} | " + " | ".join(parts) + f" | {avg}")
        lines.append("")
    return "\n".join(lines)


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    earnings: Path
    prices: Path
    models: tuple[str, ...]
    quarters: tuple[Quarter, ...]
    convention: VolConvention = VolConvention.PAPER_LITERAL
    taus: tuple[int, ...] = TAUS
    seed: int = DEFAULT_SEED
    split_ratio: tuple[int, int] = (2, 1)
    threads: int = 1
    augment: dict | None = None
    embedding_dim: int = 512
    embedding_seed: int = 0
    embedding_ridge: float | None = None
    embedding_files: dict = field(default_factory=dict)
    drift: dict | None = None
    similarity: bool = False
    signature: bool = False
    correlation: tuple[tuple[str, str], ...] = ()

    def echo(self) -> dict:
        return {
            "models": list(self.models),
            "quarters": [str(q) for q in self.quarters],
            "convention": self.convention.value,
            "taus": list(self.taus),
            "seed": self.seed,
            "split_ratio": list(self.split_ratio),
            "augment_years": None if self.augment is None else self.augment["years"],
            "embedding_dim": self.embedding_dim,
            "embedding_seed": self.embedding_seed,
            "embedding_ridge": self.embedding_ridge,
            "embedding_files": sorted(self.embedding_files),
            "drift": self.drift,
            "similarity": self.similarity,
            "signature": self.signature,
            "correlation": [list(p) for p in self.correlation],
        }


def expand_quarters(specs: Iterable[str]) -> tuple[Quarter, ...]:
    out = []
    for spec in specs:
        rng = QUARTER_RANGE.fullmatch(spec)
        if rng:
            a, b = Quarter.parse(rng.group(1)), Quarter.parse(rng.group(2))
            if b < a:
                raise ConfigError(f"empty quarter range {spec!r}")
            q = a
            while q <= b:
                out.append(q)
                q = Quarter(q.year + (q.q == 4), q.q % 4 + 1)
        else:
            out.append(Quarter.parse(spec))
    return tuple(sorted(set(out)))


def validate_model(name: str, embedding_files: Mapping[str, str]) -> None:
    if name in RANDOM_MODELS:
        return
    m = EMBEDDING_MODEL.fullmatch(name)
    if m:
        if m.group("name") not in embedding_files:
            raise ConfigError(f"model {name!r} has no file under [embeddings.files]")
        return
    parse_model(name)


def parse_config(doc: Mapping, base: Path = Path(".")) -> ExperimentConfig:
    """Validate a config document; every error surfaces before any computation."""
    try:
        data = doc["data"]
        exp = doc["experiment"]
        earnings = base / data["earnings"]
        prices = base / data["prices"]
        models = tuple(exp["models"])
        quarters = expand_quarters(exp["quarters"])
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from None
    except EarnvolError as exc:
        raise ConfigError(str(exc)) from None
    if not models:
        raise ConfigError("no models requested")
    emb = doc.get("embeddings", {})
    files = {k: str(base / v) for k, v in emb.get("files", {}).items()}
    for name in models:
        validate_model(name, files)
    try:
        convention = VolConvention.parse(exp.get("convention", "paper_literal"))
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    taus = tuple(int(t) for t in exp.get("taus", TAUS))
    if not taus or any(t < 2 for t in taus):
        raise ConfigError(f"bad taus {taus}")
    ratio = tuple(int(x) for x in exp.get("split_ratio", (2, 1)))
    if len(ratio) != 2 or ratio[0] <= 0 or ratio[1] < 0:
        raise ConfigError(f"bad split_ratio {ratio}")
    threads = int(exp.get("threads", 1))
    if threads < 1:
        raise ConfigError("threads must be >= 1")

    augment = None
    if "augment" in doc:
        a = doc["augment"]
        try:
            augment = {"earnings": str(base / a["earnings"]), "prices": str(base / a["prices"]),
                       "years": int(a.get("years", 5))}
        except KeyError as exc:
            raise ConfigError(f"missing augment key {exc}") from None

    an = doc.get("analysis", {})
    drift = an.get("drift", False)
    if drift is True:
        drift = {}
    if drift is not False:
        if not isinstance(drift, Mapping):
            raise ConfigError(f"analysis.drift must be a boolean or a table, got {drift!r}")
        drift = {"horizon": int(drift.get("horizon", 10)), "tau": int(drift.get("tau", 3))}
    correlation = []
    for pair in an.get("correlation", []):
        if len(pair) != 2:
            raise ConfigError(f"correlation entries are [model_a, model_b], got {pair}")
        for name in pair:
            if name not in models:
                raise ConfigError(f"correlation model {name!r} is not in experiment.models")
        correlation.append((pair[0], pair[1]))

    return ExperimentConfig(
        earnings=earnings, prices=prices, models=models, quarters=quarters, convention=convention,
        taus=taus, seed=int(exp.get("seed", DEFAULT_SEED)), split_ratio=ratio, threads=threads,
        augment=augment, embedding_dim=int(emb.get("dim", 512)), embedding_seed=int(emb.get("seed", 0)),
        embedding_ridge=None if emb.get("ridge") is None else float(emb["ridge"]), embedding_files=files, drift=drift or None,
        similarity=bool(an.get("similarity", False)), signature=bool(an.get("signature", False)),
        correlation=tuple(correlation),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(doc, path.parent)


# -- runner -------------------------------------------------------------------

def _predict(model: str, table: EventTable, split: Split, cfg: ExperimentConfig, vectors) -> PredictionSet:
    if model in RANDOM_MODELS or EMBEDDING_MODEL.fullmatch(model):
        return embedding_regression(table, split, cfg.taus, vectors[model].vectors, model, cfg.embedding_ridge)
    mode, agg = parse_model(model)
    return run_baseline(table, split, cfg.taus, agg, mode, label=model)


def _embedding_sets(cfg: ExperimentConfig, table: EventTable) -> dict[str, analysis.EmbeddingSet]:
    out = {}
    for name in cfg.models:
        if name in RANDOM_MODELS:
            out[name] = analysis.random_embeddings(table.events, RANDOM_MODELS[name], cfg.embedding_dim,
                                                   cfg.embedding_seed)
        elif (m := EMBEDDING_MODEL.fullmatch(name)):
            out[name] = analysis.load_embeddings(cfg.embedding_files[m.group("name")])
    return out


def run_experiment(config, out_dir=None, threads: int | None = None) -> EvalReport:
    """Splits -> baselines -> MSE per (model, quarter), plus optional analyses.

    ``config`` is a path or an :class:`ExperimentConfig`. A failing (model,
    quarter) cell is reported under ``errors`` and does not abort the run.
    When ``out_dir`` is given, ``report.json``, ``report.txt`` and one JSON
    prediction file per cell are written there.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    threads = threads or cfg.threads
    table = build_event_table(cfg.earnings, cfg.prices, cfg.convention, cfg.taus)
    native_count = len(table)
    if cfg.augment:
        table = augment_history(table, cfg.augment["prices"], cfg.augment["earnings"], cfg.augment["years"])

    report = EvalReport(config=cfg.echo())
    reasons: dict[str, int] = {}
    for by_tau in table.incomplete.values():
        for why in set(by_tau.values()):
            reasons[why] = reasons.get(why, 0) + 1
    report.dataset = {
        "n_events": len(table),
        "n_native": native_count,
        "n_augmented": len(table) - native_count,
        "n_complete": len(table.complete_events()),
        "n_incomplete": len(table) - len(table.complete_events()),
        "incomplete_reasons": dict(sorted(reasons.items())),
    }

    splits: dict[Quarter, Split] = {}
    for q in cfg.quarters:
        try:
            splits[q] = rolling_quarter_split(table, q, cfg.split_ratio, cfg.seed)
        except EarnvolError as exc:
            for m in cfg.models:
                report.errors.append({"model": m, "quarter": str(q), "error": f"split: {exc}"})
    for q, sp in splits.items():
        num, den = oet_counts([table.event(e) for e in sp.pool], [table.event(e) for e in sp.test])
        report.splits.append({"quarter": str(q), "n_train": len(sp.train), "n_val": len(sp.val),
                              "n_test": len(sp.test), "oet": num / den if den else None})

    vectors = _embedding_sets(cfg, table)
    cells = [(m, q) for m in cfg.models for q in cfg.quarters if q in splits]

    def work(cell):
        m, q = cell
        sp = splits[q]
        try:
            preds = _predict(m, table, sp, cfg, vectors)
            truth = [table.records[e][t] for e in sorted(sp.test) for t in cfg.taus]
            scores = {t: mse(preds, truth, t) for t in cfg.taus}
        except EarnvolError as exc:
            return cell, None, None, f"{type(exc).__name__}: {exc}"
        fallback = len({e for e, _ in preds.fallbacks})
        return cell, preds, ReportRow(m, q, scores, len(sp.test), fallback), None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, cells))
    else:
        results = [work(c) for c in cells]

    predictions: dict[tuple[str, Quarter], PredictionSet] = {}
    for (m, q), preds, row, err in results:  # already in canonical (model, quarter) order
        if err is not None:
            report.errors.append({"model": m, "quarter": str(q), "error": err})
            continue
        predictions[(m, q)] = preds
        report.rows.append(row)

    report.analysis = _analyses(cfg, table, splits, predictions, vectors)

    if out_dir is not None:
        out = Path(out_dir)
        (out / "predictions").mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "report.txt").write_text(report.render_text(), encoding="utf-8")
        for (m, q), preds in sorted(predictions.items()):
            safe = re.sub(r"[^A-Za-z0-9]+", "_", m).strip("_")
            (out / "predictions" / f"{safe}_{q}.json").write_text(preds.to_json(), encoding="utf-8")
    return report


def _analyses(cfg, table, splits, predictions, vectors) -> dict:
    out = {}
    test_events = sorted({e for sp in splits.values() for e in sp.test})
    if cfg.drift:
        events = [table.event(e) for e in test_events] or table.complete_events()
        out["drift"] = event_window_profile(events, table.prices, cfg.drift["horizon"], cfg.drift["tau"],
                                            cfg.convention).to_dict()
    if cfg.similarity and vectors:
        events = [e for e in table.events if all(e.event_id in v.vectors for v in vectors.values())]
        out["similarity"] = [analysis.group_cosine_similarity(v, events, model=name).to_dict()
                             for name, v in vectors.items()]
    if cfg.signature:
        complete = table.complete_events()
        out["signature"] = {str(t): analysis.volatility_signature(
            {e.event_id: table.value(e.event_id, t) for e in complete}, complete) for t in cfg.taus}
    if cfg.correlation:
        tables = []
        for a, b in cfg.correlation:
            pairs = {str(q): (predictions[(a, q)], predictions[(b, q)])
                     for q in sorted(splits) if (a, q) in predictions and (b, q) in predictions}
            tables.append({"a": a, "b": b, **analysis.correlation_table(pairs, cfg.taus)})
        out["correlation"] = tables
    return out
