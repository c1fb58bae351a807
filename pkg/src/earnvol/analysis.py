"""Embedding similarity, random embeddings, prediction correlation and ticker signatures."""

from __future__ import annotations

import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .baselines import PredictionSet
from .errors import DataError, DegenerateVariance, RaggedDimension
from .volatility import EarningsEvent

MIN_NORM = 1e-12


class RandomMode(enum.Enum):
    ALL = "all"
    TICKER = "ticker"


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    dim: int
    vectors: Mapping[str, np.ndarray]
    source: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise DataError("dim must be positive")
        frozen = {}
        for eid, v in self.vectors.items():
            a = np.array(v, dtype=np.float64)
            if a.shape != (self.dim,):
                raise RaggedDimension(f"{eid}: dimension {a.size}, expected {self.dim}")
            if not np.all(np.isfinite(a)):
                raise DataError(f"{eid}: non-finite entry")
            if np.linalg.norm(a) <= MIN_NORM:
                raise DataError(f"{eid}: zero vector")
            a.setflags(write=False)
            frozen[eid] = a
        object.__setattr__(self, "vectors", frozen)

    def __len__(self) -> int:
        return len(self.vectors)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (self.dim == other.dim and self.vectors.keys() == other.vectors.keys()
                and all(np.array_equal(v, other.vectors[k]) for k, v in self.vectors.items()))


def read_embedding_lines(lines: Iterable[str], source: str = "<input>") -> EmbeddingSet:
    vectors: dict[str, list[float]] = {}
    dim = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            eid = str(row["event_id"])
            vec = [float(x) for x in row["vector"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{source}: bad embedding row at line {lineno}: {exc}") from None
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise RaggedDimension(f"{source}: line {lineno} has dimension {len(vec)}, expected {dim}")
        if not all(math.isfinite(x) for x in vec):
            raise DataError(f"{source}: non-finite entry at line {lineno}")
        if eid in vectors:
            raise DataError(f"{source}: duplicate event_id {eid} at line {lineno}")
        vectors[eid] = vec
    if dim is None:
        raise DataError(f"{source}: no embeddings")
    return EmbeddingSet(dim, vectors, source)


def load_embeddings(path) -> EmbeddingSet:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return read_embedding_lines(fh, source=str(path))


def save_embeddings(emb: EmbeddingSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for eid in sorted(emb.vectors):
            fh.write(json.dumps({"event_id": eid, "vector": emb.vectors[eid].tolist()}) + "\n")


def random_embeddings(events: Sequence[EarningsEvent], mode: RandomMode | str, dim: int, seed: int = 0) -> EmbeddingSet:
    """Standard-normal vectors, one per event (ALL) or one shared per ticker (TICKER)."""
    mode = RandomMode(mode)
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rng = np.random.default_rng(seed)
    if mode is RandomMode.ALL:
        vectors = {e.event_id: rng.standard_normal(dim) for e in sorted(events, key=lambda e: e.event_id)}
    else:
        per_ticker = {t: rng.standard_normal(dim) for t in sorted({e.ticker for e in events})}
        vectors = {e.event_id: per_ticker[e.ticker] for e in events}
    return EmbeddingSet(dim, vectors, f"random_{mode.value}")


@dataclass(frozen=True)
class GroupSimilarityReport:
    model: str
    within_ticker: float
    all_dataset: float
    n_within_pairs: int
    n_all_pairs: int
    n_singleton_tickers: int
    excludes_same_ticker: bool = False

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "within_ticker": self.within_ticker,
            "all_dataset": self.all_dataset,
            "n_within_pairs": self.n_within_pairs,
            "n_all_pairs": self.n_all_pairs,
            "n_singleton_tickers": self.n_singleton_tickers,
            "all_dataset_excludes_same_ticker": self.excludes_same_ticker,
        }


def cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities; bitwise-identical rows get exactly 1."""
    V = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(V, axis=1)
    C = (V / norms[:, None]) @ (V / norms[:, None]).T
    np.clip(C, -1.0, 1.0, out=C)
    groups: dict[bytes, list[int]] = defaultdict(list)
    for i, row in enumerate(V):
        groups[row.tobytes()].append(i)
    for idx in groups.values():
        if len(idx) > 1:
            C[np.ix_(idx, idx)] = 1.0
    return C


def group_cosine_similarity(emb: EmbeddingSet, events: Sequence[EarningsEvent], model: str | None = None,
                            exclude_same_ticker: bool = False) -> GroupSimilarityReport:
    """Mean pairwise cosine within each ticker and across the whole set.

    By default the all-dataset mean covers every unordered pair, same-ticker
    pairs included.
    """
    events = sorted(events, key=lambda e: e.event_id)
    missing = [e.event_id for e in events if e.event_id not in emb.vectors]
    if missing:
        raise DataError(f"{len(missing)} events lack vectors, e.g. {missing[0]}")
    if len(events) < 2:
        raise DataError("need at least 2 events")
    C = cosine_matrix(np.array([emb.vectors[e.event_id] for e in events]))
    tickers = np.array([e.ticker for e in events])
    iu, ju = np.triu_indices(len(events), k=1)
    same = tickers[iu] == tickers[ju]
    pair_cos = C[iu, ju]
    within = pair_cos[same]
    overall = pair_cos[~same] if exclude_same_ticker else pair_cos
    counts = defaultdict(int)
    for t in tickers:
        counts[t] += 1
    return GroupSimilarityReport(
        model=model or emb.source,
        within_ticker=float(np.sum(within) / within.size) if within.size else float("nan"),
        all_dataset=float(np.sum(overall) / overall.size) if overall.size else float("nan"),
        n_within_pairs=int(within.size),
        n_all_pairs=int(overall.size),
        n_singleton_tickers=sum(1 for c in counts.values() if c == 1),
        excludes_same_ticker=exclude_same_ticker,
    )


def pearson(a: PredictionSet, b: PredictionSet, tau: int) -> float:
    """Sample Pearson correlation of two prediction sets over their shared keys."""
    keys = a.keys(tau)
    if keys != b.keys(tau):
        raise DataError(f"prediction sets {a.model!r} and {b.model!r} cover different events for tau={tau}")
    if len(keys) < 2:
        raise DataError("need at least 2 paired predictions")
    x = np.array([a.get(k, tau) for k in keys])
    y = np.array([b.get(k, tau) for k in keys])
    return pearson_r(x, y)


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVariance("Pearson correlation undefined for a constant series")
    return max(-1.0, min(1.0, float(dx @ dy) / math.sqrt(sxx * syy)))


def correlation_table(pairs: Mapping[str, tuple[PredictionSet, PredictionSet]], taus: Sequence[int]) -> dict:
    """Per-quarter, per-tau Pearson r as a quarter-by-tau table with yearly averages.

    ``pairs`` maps a quarter label (``"2021Q1"``) to the two prediction sets.
    Each quarter row carries the mean over taus; each year the mean of its
    quarter means.
    """
    rows = []
    by_year: dict[str, list[float]] = defaultdict(list)
    for quarter in sorted(pairs):
        a, b = pairs[quarter]
        coefs = {}
        for t in taus:
            try:
                coefs[str(t)] = pearson(a, b, t)
            except (DataError, DegenerateVariance):
                coefs[str(t)] = None
        valid = [v for v in coefs.values() if v is not None]
        mean = math.fsum(valid) / len(valid) if len(valid) == len(coefs) else None
        rows.append({"quarter": quarter, "coef": coefs, "coef_mean": mean})
        if mean is not None:
            by_year[quarter[:4]].append(mean)
    yearly = {y: math.fsum(v) / len(v) for y, v in sorted(by_year.items())}
    return {"rows": rows, "yearly_average": yearly}


def volatility_signature(values: Mapping[str, float], events: Sequence[EarningsEvent]) -> dict:
    """Per-ticker mean and spread of post-earnings volatility against the pooled mean.

    ``values`` maps event_id to one window's log-volatility.
    """
    per_ticker: dict[str, list[float]] = defaultdict(list)
    for e in sorted(events, key=lambda e: (e.ticker, e.announce_date)):
        if e.event_id in values:
            per_ticker[e.ticker].append(values[e.event_id])
    if not per_ticker:
        raise DataError("no volatility values for the given events")
    pooled = [v for vs in per_ticker.values() for v in vs]
    pooled_mean = math.fsum(pooled) / len(pooled)
    tickers = {}
    for t, vs in sorted(per_ticker.items()):
        m = math.fsum(vs) / len(vs)
        sd = math.sqrt(math.fsum((v - m) ** 2 for v in vs) / (len(vs) - 1)) if len(vs) > 1 else None
        tickers[t] = {"n": len(vs), "mean": m, "std": sd, "deviation_from_pooled": m - pooled_mean}
    means = [d["mean"] for d in tickers.values()]
    grand = math.fsum(means) / len(means)
    between = math.fsum((m - grand) ** 2 for m in means) / len(means)
    within_sds = [d["std"] for d in tickers.values() if d["std"] is not None]
    return {
        "pooled_mean": pooled_mean,
        "n_events": len(pooled),
        "between_ticker_variance": between,
        "mean_within_ticker_std": math.fsum(within_sds) / len(within_sds) if within_sds else None,
        "tickers": tickers,
    }
