"""Training-free PEV / STPEV predictors and their fitted variants.

PEV aggregates every post-earnings volatility in the training pool; STPEV
aggregates only the same ticker's earlier post-earnings volatilities. With
Mean or Median nothing is fitted. The LR and MLP aggregators regress a
ticker's next post-earnings volatility on its last few ones.
"""

from __future__ import annotations

import json
import logging
import math
import re
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import EventTable, Split, same_ticker_history
from .errors import ConfigError, DataError, SingularDesign
from .regressor import LinearModel, MlpModel, TrainConfig, mlp_train, ridge_fit
from .volatility import VolatilityRecord

logger = logging.getLogger(__name__)

RIDGE_GRID = (0.0, 1e-4, 1e-2, 1.0, 10.0)


@dataclass(frozen=True)
class Mean:
    label = "Mean"


@dataclass(frozen=True)
class Median:
    label = "Median"


@dataclass(frozen=True)
class LinearRegression:
    """Ridge regression on the history vector; ``ridge=None`` cross-validates it."""

    ridge: float | None = None
    label = "LR"

    def __post_init__(self):
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be non-negative")


@dataclass(frozen=True)
class Mlp:
    config: TrainConfig = field(default_factory=TrainConfig)
    label = "MLP"


Aggregator = Mean | Median | LinearRegression | Mlp
TRAINING_FREE = (Mean, Median)
AGGREGATORS = {"Mean": Mean, "Median": Median, "LR": LinearRegression, "MLP": Mlp}


def parse_model(name: str) -> tuple[str, Aggregator]:
    """``"STPEV(Mean)"`` -> ``("STPEV", Mean())``."""
    m = re.fullmatch(r"\s*(PEV|STPEV)\(\s*(Mean|Median|LR|MLP)\s*\)\s*", name)
    if not m:
        raise ConfigError(f"unknown model {name!r}")
    mode, agg = m.groups()
    if mode == "PEV" and agg not in ("Mean", "Median"):
        raise ConfigError(f"PEV supports Mean and Median only, got {name!r}")
    return mode, AGGREGATORS[agg]()


def aggregate(values: Sequence[float], agg: Aggregator) -> float:
    if not values:
        raise DataError("cannot aggregate an empty list")
    if isinstance(agg, Mean):
        # shifted by the first value: exact for constant input
        x0 = values[0]
        return x0 + math.fsum(v - x0 for v in values) / len(values)
    if isinstance(agg, Median):
        return float(statistics.median(values))
    raise TypeError(f"{type(agg).__name__} is not a training-free aggregator")


@dataclass
class PredictionSet:
    """event_id -> tau -> predicted log-volatility for one model.

    ``fallbacks`` lists the (event_id, tau) cells that fell back to PEV
    because the ticker had no usable history.
    """

    model: str
    predictions: dict[str, dict[int, float]] = field(default_factory=dict)
    fallbacks: set[tuple[str, int]] = field(default_factory=set)

    def set(self, event_id: str, tau: int, value: float, fallback: bool = False) -> None:
        if not math.isfinite(value):
            raise DataError(f"non-finite prediction for {event_id} tau={tau}")
        self.predictions.setdefault(event_id, {})[tau] = float(value)
        if fallback:
            self.fallbacks.add((event_id, tau))

    def get(self, event_id: str, tau: int) -> float:
        return self.predictions[event_id][tau]

    def keys(self, tau: int) -> list[str]:
        return sorted(e for e, by_tau in self.predictions.items() if tau in by_tau)

    def to_dict(self) -> dict:
        rows = [{"event_id": e, "tau": t, "value": v}
                for e in sorted(self.predictions) for t, v in sorted(self.predictions[e].items())]
        return {"model": self.model, "predictions": rows,
                "fallbacks": [{"event_id": e, "tau": t} for e, t in sorted(self.fallbacks)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PredictionSet":
        ps = cls(doc["model"])
        for row in doc["predictions"]:
            ps.set(row["event_id"], int(row["tau"]), float(row["value"]))
        ps.fallbacks = {(r["event_id"], int(r["tau"])) for r in doc.get("fallbacks", [])}
        return ps

    @classmethod
    def from_json(cls, text: str) -> "PredictionSet":
        return cls.from_dict(json.loads(text))


def pev_predict(train_records: Iterable[VolatilityRecord], tau: int, agg: Aggregator = Mean()) -> float:
    """Aggregate every training post-earnings volatility for ``tau``, any ticker."""
    values = [r.value for r in train_records if r.tau == tau]
    if not values:
        raise DataError(f"empty training pool for tau={tau}")
    return aggregate(values, agg)


@dataclass(frozen=True)
class HistoryModel:
    """A regressor over the last ``n_features`` same-ticker volatilities."""

    model: LinearModel | MlpModel
    n_features: int
    n_samples: int
    ridge: float | None = None

    def predict_history(self, values: Sequence[float]) -> float:
        if len(values) < self.n_features:
            raise DataError(f"history of {len(values)} shorter than {self.n_features} features")
        x = np.asarray(values[len(values) - self.n_features:], dtype=np.float64)[None, :]
        return float(np.ravel(self.model.predict(x))[0])


def stpev_predict(history: Mapping[int, Sequence[VolatilityRecord]], tau: int, agg: Aggregator = Mean(),
                  model: HistoryModel | None = None) -> float | None:
    """Same-ticker prediction, or ``None`` when the ticker has no history for ``tau``."""
    values = [r.value for r in history.get(tau, ())]
    if not values:
        return None
    if isinstance(agg, TRAINING_FREE):
        return aggregate(values, agg)
    if model is None:
        raise ValueError(f"{agg.label} aggregator needs a fitted model")
    return model.predict_history(values)


def _folds(n: int) -> list[np.ndarray]:
    k = n if n < 10 else 5
    idx = np.arange(n)
    return [idx[idx % k == i] for i in range(k)]


def select_ridge(X: np.ndarray, y: np.ndarray, grid: Sequence[float] = RIDGE_GRID) -> float:
    """k-fold (k=5, leave-one-out below 10 samples) choice of ridge penalty.

    Ties go to the smaller penalty; penalties whose fits are singular on some
    fold are skipped.
    """
    n = len(y)
    if n < 2:
        return min(grid)
    folds = _folds(n)
    scores = []
    for ridge in sorted(grid):
        errs = []
        try:
            for held in folds:
                mask = np.ones(n, dtype=bool)
                mask[held] = False
                m = ridge_fit(X[mask], y[mask], ridge)
                errs.append(float(np.mean((m.predict(X[held]) - y[held]) ** 2)))
        except SingularDesign:
            continue
        scores.append((math.fsum(errs) / len(errs), ridge))
    if not scores:
        raise SingularDesign("every ridge penalty in the grid was singular")
    best = min(s for s, _ in scores)
    return min(r for s, r in scores if s == best)


def fit_history_model(X, y, agg: Aggregator, val_mask=None) -> HistoryModel:
    """Fit LR or MLP on history features; ``val_mask`` marks MLP validation rows."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise DataError("empty training pool")
    if isinstance(agg, LinearRegression):
        ridge = agg.ridge if agg.ridge is not None else select_ridge(X, y)
        return HistoryModel(ridge_fit(X, y, ridge), X.shape[1], len(y), ridge)
    if isinstance(agg, Mlp):
        if val_mask is None or not np.any(val_mask) or np.all(val_mask):
            raise DataError("MLP needs non-empty train and validation rows")
        val_mask = np.asarray(val_mask, dtype=bool)
        model = mlp_train(X[~val_mask], y[~val_mask], X[val_mask], y[val_mask], agg.config)
        return HistoryModel(model, X.shape[1], len(y))
    raise TypeError(f"{type(agg).__name__} needs no fitting")


def fit_quarter_model(table: EventTable, split: Split, tau: int, agg: Aggregator,
                      quarter_events: Sequence[str] | None = None) -> HistoryModel:
    """Fit one per-(quarter, tau) history regressor from the split's pool.

    Events of one quarter share the same number L of earlier same-ticker
    earnings, which fixes the feature length. Pool events only have shorter
    histories, so the feature vector is the common suffix of length
    m = min(L, longest pool history); every pool event with at least m
    earlier earnings contributes one sample.
    """
    pool = split.pool
    quarter_events = sorted(split.test) if quarter_events is None else list(quarter_events)
    lengths = [len(same_ticker_history(table, table.event(e), pool)[tau]) for e in quarter_events]
    lengths = [n for n in lengths if n > 0]
    if not lengths:
        raise DataError("no quarter event has same-ticker history")
    if len(set(lengths)) > 1:
        logger.warning("unequal history lengths %s in %s; using common suffix of %d",
                       sorted(set(lengths)), split.target_quarter, min(lengths))
    L = min(lengths)

    samples = []
    for eid in sorted(pool):
        hist = [r.value for r in same_ticker_history(table, table.event(eid), pool)[tau]]
        samples.append((eid, hist, table.value(eid, tau)))
    longest = max((len(h) for _, h, _ in samples), default=0)
    m = min(L, longest)
    if m == 0:
        raise DataError(f"no pool event in {split.target_quarter} has same-ticker history")
    rows = [(eid, h[len(h) - m:], y) for eid, h, y in samples if len(h) >= m]
    X = np.array([h for _, h, _ in rows])
    y = np.array([t for _, _, t in rows])
    val_mask = np.array([eid in split.val for eid, _, _ in rows])
    return fit_history_model(X, y, agg, val_mask=val_mask)


def run_baseline(table: EventTable, split: Split, taus: Sequence[int], agg: Aggregator, mode: str = "STPEV",
                 label: str | None = None) -> PredictionSet:
    """One prediction per (test event, tau).

    STPEV cells without same-ticker history fall back to PEV with the same
    aggregator (the median for Median, the mean otherwise) and are recorded
    in ``fallbacks``.
    """
    if mode not in ("PEV", "STPEV"):
        raise ValueError(f"mode must be PEV or STPEV, got {mode!r}")
    label = label or f"{mode}({agg.label})"
    pool_records = [table.records[e] for e in sorted(split.pool)]
    fallback_agg = agg if isinstance(agg, TRAINING_FREE) else Mean()
    pev = {t: pev_predict((r[t] for r in pool_records), t, fallback_agg) for t in taus}

    out = PredictionSet(label)
    test = sorted(split.test)
    if mode == "PEV":
        for e in test:
            for t in taus:
                out.set(e, t, pev[t])
        return out

    histories = {e: same_ticker_history(table, table.event(e), split.pool) for e in test}
    models: dict[int, HistoryModel | None] = {}
    if not isinstance(agg, TRAINING_FREE):
        for t in taus:
            try:
                models[t] = fit_quarter_model(table, split, t, agg, test)
            except DataError as exc:
                logger.info("%s %s tau=%d: %s; using PEV", label, split.target_quarter, t, exc)
                models[t] = None
    for e in test:
        for t in taus:
            if not isinstance(agg, TRAINING_FREE) and models[t] is None:
                out.set(e, t, pev[t], fallback=True)
                continue
            value = stpev_predict(histories[e], t, agg, models.get(t))
            if value is None:
                out.set(e, t, pev[t], fallback=True)
            else:
                out.set(e, t, value)
    return out


EMBEDDING_RIDGE_GRID = (1.0, 10.0, 100.0, 1e3, 1e4)


def embedding_regression(table: EventTable, split: Split, taus: Sequence[int], vectors: Mapping[str, np.ndarray],
                         label: str, ridge: float | None = None) -> PredictionSet:
    """Ridge regression from per-event vectors to post-earnings volatility.

    Stands in for a transcript-embedding model: it sees only the vectors,
    never the ticker or its history. With ``ridge=None`` the penalty is
    picked from ``EMBEDDING_RIDGE_GRID`` by validation MSE (averaged over
    taus) after fitting on the train part, then refitted on train + val.
    """
    pool = sorted(split.pool)
    missing = [e for e in pool + sorted(split.test) if e not in vectors]
    if missing:
        raise DataError(f"{len(missing)} events lack vectors, e.g. {missing[0]}")

    def design(ids):
        return (np.array([vectors[e] for e in ids]),
                np.array([[table.value(e, t) for t in taus] for e in ids]))

    if ridge is None:
        train, val = sorted(split.train), sorted(split.val)
        if len(train) < 2 or not val:
            ridge = EMBEDDING_RIDGE_GRID[0]
        else:
            Xt, Yt = design(train)
            Xv, Yv = design(val)
            scores = []
            for lam in EMBEDDING_RIDGE_GRID:
                m = ridge_fit(Xt, Yt, lam)
                scores.append((float(np.mean((m.predict(Xv) - Yv) ** 2)), lam))
            ridge = min(scores)[1]
    X, Y = design(pool)
    model = ridge_fit(X, Y, ridge)
    test = sorted(split.test)
    pred = model.predict(np.array([vectors[e] for e in test]))
    out = PredictionSet(label)
    for i, e in enumerate(test):
        for j, t in enumerate(taus):
            out.set(e, t, float(pred[i, j]))
    return out
