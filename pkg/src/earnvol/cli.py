"""``earnvol`` command line.

Every subcommand is a thin adapter over a library call and prints the same
JSON the library serializes. ``--pretty`` switches to a human table.
Exit status: 0 ok, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, baselines, dataset, evalharness, volatility
from .errors import EarnvolError
from .market_data import compute_returns, load_price_dir, load_price_series
from .volatility import TAUS, Quarter, VolConvention

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _convention(text: str) -> VolConvention:
    try:
        return VolConvention.parse(text)
    except EarnvolError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _quarter(text: str) -> Quarter:
    try:
        return Quarter.parse(text)
    except EarnvolError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ratio(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio {text!r}, expected e.g. 2:1") from None
    return a, b


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--pretty", action="store_true", help="human-readable table instead of JSON")
    common.add_argument("--convention", type=_convention, default=VolConvention.PAPER_LITERAL,
                        help="paper_literal (default) or sample_std")
    common.add_argument("--seed", type=int, default=dataset.DEFAULT_SEED)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--verbose", action="store_true")

    def table_flags(p, required=True):
        p.add_argument("--events", required=required, help="earnings CSV (ticker,date,session,year,quarter)")
        p.add_argument("--prices", required=required, help="directory of <TICKER>.csv price files")
        p.add_argument("--tau", type=int, action="append", help="window length; repeatable (default 3,7,15,30)")

    ap = _Parser(prog="earnvol", description="Post-earnings volatility toolkit.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="validate inputs and build the event table")
    p.add_argument("--prices", required=True, help="price file or directory")
    p.add_argument("--events", help="earnings CSV; when given, the full event table is emitted")
    p.add_argument("--tau", type=int, action="append")

    p = sub.add_parser("volatility", parents=[common], help="post-earnings volatility of one event")
    p.add_argument("--prices", required=True, help="price file of the event's ticker")
    p.add_argument("--event", required=True, help='"TICKER,YYYY-MM-DD,before_open|after_close[,YYYYQn]"')
    p.add_argument("--tau", type=int, action="append")
    p.add_argument("--window", type=int, help="also emit the pre-earnings series with this window length")
    p.add_argument("--lookback", type=int, default=22)

    p = sub.add_parser("oet", parents=[common], help="overlapping earnings per ticker")
    p.add_argument("--train", required=True, help="earnings CSV of the training (incl. validation) set")
    p.add_argument("--test", required=True, help="earnings CSV of the test set")

    p = sub.add_parser("split", parents=[common], help="rolling-quarter train/val/test split")
    table_flags(p)
    p.add_argument("--quarter", type=_quarter, required=True)
    p.add_argument("--ratio", type=_ratio, default=(2, 1))

    p = sub.add_parser("augment", parents=[common], help="left-extend history with earlier earnings")
    table_flags(p)
    p.add_argument("--extended-events", required=True)
    p.add_argument("--extended-prices", required=True)
    p.add_argument("--years", type=int, default=5)

    p = sub.add_parser("predict", parents=[common], help="predictions of one model for one quarter")
    table_flags(p)
    p.add_argument("--quarter", type=_quarter, required=True)
    p.add_argument("--model", required=True,
                   help="PEV(Mean|Median), STPEV(Mean|Median|LR|MLP), Random(All|Ticker) or Embedding(name)")
    p.add_argument("--ratio", type=_ratio, default=(2, 1))
    p.add_argument("--embeddings", help="JSON-lines vectors for an Embedding(name) model")
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--ridge", type=float, help="embedding ridge penalty (default: chosen on validation)")

    p = sub.add_parser("evaluate", parents=[common], help="MSE of a prediction file")
    table_flags(p)
    p.add_argument("--predictions", required=True)

    p = sub.add_parser("drift", parents=[common], help="mean |return| and volatility around announcements")
    table_flags(p)
    p.add_argument("--horizon", type=int, default=10)

    p = sub.add_parser("similarity", parents=[common], help="within-ticker vs all-dataset cosine similarity")
    p.add_argument("--events", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--embeddings", help="JSON-lines vectors")
    src.add_argument("--random", choices=["all", "ticker"])
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--exclude-same-ticker", action="store_true")

    p = sub.add_parser("correlate", parents=[common], help="Pearson r between two prediction files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--tau", type=int, action="append")

    p = sub.add_parser("run", parents=[common], help="config-driven experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--artifacts", help="directory for report.json, report.txt and predictions")
    return ap


def _taus(args) -> tuple[int, ...]:
    return tuple(sorted(set(args.tau))) if args.tau else TAUS


def _table(args):
    return dataset.build_event_table(args.events, args.prices, args.convention, _taus(args))


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2)


def cmd_ingest(args) -> str:
    if args.events:
        table = _table(args)
        if args.pretty:
            d = table.to_dict()
            return f"{d['n_events']} events, {d['n_complete']} complete, {d['n_incomplete']} incomplete"
        return table.to_json()
    path = Path(args.prices)
    series = load_price_dir(path) if path.is_dir() else {path.stem: load_price_series(path)}
    rows = [{"ticker": t, "n_closes": len(p), "first": p.dates[0].isoformat(), "last": p.dates[-1].isoformat(),
             "n_returns": len(compute_returns(p)) if len(p) > 1 else 0} for t, p in sorted(series.items())]
    if args.pretty:
        return "\n".join(f"{r['ticker']:<8} {r['n_closes']:>6} closes  {r['first']} .. {r['last']}" for r in rows)
    return _dumps(rows)


def cmd_volatility(args) -> str:
    event = dataset.parse_event_spec(args.event)
    prices = load_price_series(args.prices, ticker=event.ticker)
    fpd = volatility.first_post_day(event, prices.calendar)
    windows = []
    for tau in _taus(args):
        rec = volatility.post_earnings_volatility(event, prices, tau, args.convention)
        windows.append({"tau": tau, "window": [d.isoformat() for d in volatility.post_earnings_window(event, prices, tau)],
                        "value": rec.value})
    doc = {"event_id": event.event_id, "session": event.session.value, "first_post_day": fpd.isoformat(),
           "convention": args.convention.value, "windows": windows}
    if args.window:
        doc["pre_earnings"] = {"window": args.window, "lookback": args.lookback,
                               "values": volatility.pre_earnings_volatility_series(
                                   event, prices, args.window, args.lookback, args.convention)}
    if args.pretty:
        lines = [f"{event.event_id} ({event.session.value}) first post-earnings day {fpd}"]
        lines += [f"  tau={w['tau']:<3} {w['window'][0]} .. {w['window'][-1]}  {w['value']:.4f}" for w in windows]
        return "\n".join(lines)
    return _dumps(doc)


def cmd_oet(args) -> str:
    train = dataset.load_earnings(args.train)
    test = dataset.load_earnings(args.test)
    num, den = dataset.oet_counts(train, test)
    value = dataset.oet(train, test)
    if args.pretty:
        return f"{value:.3f}"
    return _dumps({"overlapping_train_earnings": num, "test_tickers": den, "oet": value})


def cmd_split(args) -> str:
    split = dataset.rolling_quarter_split(_table(args), args.quarter, args.ratio, args.seed)
    if args.pretty:
        return f"{split.target_quarter}: train {len(split.train)}, val {len(split.val)}, test {len(split.test)}"
    return split.to_json()


def cmd_augment(args) -> str:
    table = _table(args)
    out = dataset.augment_history(table, args.extended_prices, args.extended_events, args.years)
    if args.pretty:
        n_aug = sum(1 for p in out.provenance.values() if p is dataset.Provenance.AUGMENTED)
        return f"{len(table)} native events, {n_aug} augmented, {len(out.complete_events())} complete"
    return out.to_json()


def cmd_predict(args) -> str:
    table = _table(args)
    split = dataset.rolling_quarter_split(table, args.quarter, args.ratio, args.seed)
    name = args.model
    if name in evalharness.RANDOM_MODELS:
        emb = analysis.random_embeddings(table.events, evalharness.RANDOM_MODELS[name], args.dim, args.seed)
        preds = baselines.embedding_regression(table, split, table.taus, emb.vectors, name, args.ridge)
    elif evalharness.EMBEDDING_MODEL.fullmatch(name):
        if not args.embeddings:
            raise UsageError(f"model {name} needs --embeddings")
        emb = analysis.load_embeddings(args.embeddings)
        preds = baselines.embedding_regression(table, split, table.taus, emb.vectors, name, args.ridge)
    else:
        try:
            mode, agg = baselines.parse_model(name)
        except EarnvolError as exc:
            raise UsageError(str(exc)) from None
        preds = baselines.run_baseline(table, split, table.taus, agg, mode, label=name)
    if args.pretty:
        lines = [f"{preds.model} {split.target_quarter}"]
        for e in sorted(preds.predictions):
            vals = "  ".join(f"{t}:{v:8.4f}" for t, v in sorted(preds.predictions[e].items()))
            lines.append(f"  {e:<24} {vals}")
        return "\n".join(lines)
    return preds.to_json()


def cmd_evaluate(args) -> str:
    table = _table(args)
    preds = baselines.PredictionSet.from_json(Path(args.predictions).read_text(encoding="utf-8"))
    events = sorted(preds.predictions)
    scores = {}
    for tau in table.taus:
        truth = [table.records[e][tau] for e in events if tau in table.records.get(e, {})]
        scores[tau] = evalharness.mse(preds, truth, tau)
    mean = evalharness.mean_of([scores[t] for t in sorted(scores)])
    if args.pretty:
        return f"{preds.model}: MSE {mean:.4f} | " + " ".join(f"MSE{t} {v:.4f}" for t, v in sorted(scores.items()))
    return _dumps({"model": preds.model, "n_test": len(events), "mse_mean": mean,
                   "mse": {str(t): v for t, v in sorted(scores.items())}})


def cmd_drift(args) -> str:
    table = _table(args)
    taus = _taus(args)
    profiles = [volatility.event_window_profile(table.events, table.prices, args.horizon, t, args.convention)
                for t in taus]
    if args.pretty:
        lines = []
        for prof in profiles:
            lines.append(f"tau={prof.tau}")
            lines += [f"  {o:<10} |r| {a:.5f}  vol {v:.4f}  n={n}" for o, a, v, n in
                      zip(prof.offsets, prof.mean_abs_return, prof.mean_volatility, prof.n_events_per_offset)]
        return "\n".join(lines)
    docs = [p.to_dict() for p in profiles]
    return _dumps(docs[0] if len(docs) == 1 else docs)


def cmd_similarity(args) -> str:
    events = dataset.load_earnings(args.events)
    if args.random:
        emb = analysis.random_embeddings(events, args.random, args.dim, args.seed)
        label = f"Random({args.random.capitalize()})"
    else:
        emb = analysis.load_embeddings(args.embeddings)
        label = Path(args.embeddings).stem
    rep = analysis.group_cosine_similarity(emb, events, model=label, exclude_same_ticker=args.exclude_same_ticker)
    if args.pretty:
        return f"{rep.model}: within-ticker {rep.within_ticker:.3f}  all-dataset {rep.all_dataset:.3f}"
    return _dumps(rep.to_dict())


def cmd_correlate(args) -> str:
    a = baselines.PredictionSet.from_json(Path(args.a).read_text(encoding="utf-8"))
    b = baselines.PredictionSet.from_json(Path(args.b).read_text(encoding="utf-8"))
    coefs = {str(t): analysis.pearson(a, b, t) for t in _taus(args)}
    if args.pretty:
        return f"{a.model} vs {b.model}: " + " ".join(f"r{t} {v:.3f}" for t, v in coefs.items())
    return _dumps({"a": a.model, "b": b.model, "pearson": coefs})


def cmd_run(args) -> str:
    report = evalharness.run_experiment(args.config, out_dir=args.artifacts, threads=args.threads)
    return report.render_text() if args.pretty else report.to_json().rstrip("\n")


COMMANDS = {
    "ingest": cmd_ingest, "volatility": cmd_volatility, "oet": cmd_oet, "split": cmd_split,
    "augment": cmd_augment, "predict": cmd_predict, "evaluate": cmd_evaluate, "drift": cmd_drift,
    "similarity": cmd_similarity, "correlate": cmd_correlate, "run": cmd_run,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    if args.threads < 1:
        sys.stderr.write("earnvol: error: --threads must be >= 1\n")
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"earnvol: error: {exc}\n")
        return EXIT_USAGE
    except (EarnvolError, OSError, ArithmeticError, KeyError) as exc:
        sys.stderr.write(f"earnvol {args.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_DATA
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")
    return EXIT_OK


def main() -> None:
    raise SystemExit(dispatch())


if __name__ == "__main__":
    main()
