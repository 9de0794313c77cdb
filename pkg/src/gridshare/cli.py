"""Command-line front end.

Exit codes: 0 ok, 1 comparison failure, 2 input/config error. Errors go to
stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import dataset, simulator
from .simulator import RunConfig
from .strategies import Strategy

REFERENCES = {
    "published-across": "published_across_counties.csv",
    "published-within": "published_within_county.csv",
}


class InputError(Exception):
    def __init__(self, message: str, path=None):
        super().__init__(message)
        self.path = None if path is None else str(path)


def _fail(exc: Exception, kind: str = "input") -> int:
    payload = {"error": kind, "message": str(exc)}
    if getattr(exc, "path", None):
        payload["path"] = exc.path
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return 2


def load_config(path) -> tuple[RunConfig, dict]:
    """Read a TOML config; keys outside RunConfig (``data``) are returned apart."""
    if path is None:
        raw = {}
    else:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"config file not found: {p}", p)
        try:
            raw = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"bad config {p}: {exc}", p) from None
    extra = {k: raw.pop(k) for k in ("data",) if k in raw}
    try:
        return RunConfig.from_mapping(raw), extra
    except (simulator.ConfigError, TypeError) as exc:
        raise InputError(str(exc), path) from None


def _resolve_config(args) -> tuple[RunConfig, Path]:
    config, extra = load_config(args.config)
    config = config.with_overrides(rng_seed=args.seed, strategy=getattr(args, "strategy", None),
                                   scenario=args.scenario)
    try:
        config.validate()
    except simulator.ConfigError as exc:
        raise InputError(str(exc), args.config) from None
    data = args.data or extra.get("data")
    if data is None:
        raise InputError("no data file given (--data or 'data' in config)")
    data = Path(data)
    if not data.is_file():
        raise InputError(f"data file not found: {data}", data)
    return config, data


def _load_data(path: Path):
    try:
        return dataset.load_clients(path)
    except dataset.DatasetError as exc:
        raise InputError(str(exc), path) from None


def cmd_run(args) -> int:
    config, data = _resolve_config(args)
    clients = _load_data(data)
    try:
        result = simulator.run(config, clients)
    except simulator.ConfigError as exc:
        raise InputError(str(exc), args.config) from None
    _ensure_out(args.out)
    simulator.write_outputs(result, args.out)
    print(simulator.format_table(result.summary_rows()))
    return 0


def _run_one(config: RunConfig, clients):
    return simulator.run(config, clients)


def cmd_sweep(args) -> int:
    config, data = _resolve_config(args)
    clients = _load_data(data)
    names = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for n in names:
        try:
            Strategy(n)
        except ValueError:
            raise InputError(f"unknown strategy {n!r}") from None
    configs = [config.with_overrides(strategy=n) for n in names]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            results = list(pool.map(_run_one, configs, [clients] * len(configs)))
    else:
        results = [_run_one(c, clients) for c in configs]
    by_name = dict(zip(names, results))
    out = _ensure_out(args.out)
    for name, res in by_name.items():
        simulator.write_outputs(res, out / name)
    rows = simulator.compute_summary(by_name)
    simulator.write_table_csv(out / "comparison.csv", rows)
    print(simulator.format_table(rows))
    table = dict(rows)
    if "trading" in table:
        for name, pct in simulator.grid_reduction(table).items():
            print(f"grid reduction vs trading  {name:<10} {pct:6.2f}%")
    return 0


def _reference_path(ref: str) -> Path:
    if ref in REFERENCES:
        return Path(str(resources.files("gridshare") / "data" / REFERENCES[ref]))
    return Path(ref)


def compare_tables(metrics: dict, reference: dict, cols: list[str], tolerance: float):
    """Per-cell relative difference; returns (report rows, all_within)."""
    report = []
    ok = True
    for label in reference:
        for col in cols:
            a, b = metrics[label][col], reference[label][col]
            if a is None or b is None:
                good = a is None and b is None
                diff = None
            else:
                diff = abs(a - b) / abs(b) if b else abs(a - b)
                good = diff <= tolerance
            ok &= good
            report.append((label, col, a, b, diff, good))
    return report, ok


def cmd_compare(args) -> int:
    mpath = Path(args.metrics)
    rpath = _reference_path(args.reference)
    for p in (mpath, rpath):
        if not p.is_file():
            raise InputError(f"table not found: {p}", p)
    try:
        mcols, metrics = simulator.read_table_csv(mpath)
        rcols, reference = simulator.read_table_csv(rpath)
    except (ValueError, StopIteration) as exc:
        raise InputError(f"unreadable table: {exc}") from None
    if mcols != rcols or list(metrics) != list(reference):
        raise InputError(f"label mismatch between {mpath} and {rpath}: "
                         f"rows {list(metrics)} vs {list(reference)}, "
                         f"columns {mcols} vs {rcols}")
    report, ok = compare_tables(metrics, reference, rcols, args.tolerance)
    for label, col, a, b, diff, good in report:
        if args.verbose or not good:
            d = "N/A" if diff is None else f"{100 * diff:.3f}%"
            print(f"{'ok  ' if good else 'FAIL'} {label:<12} {col:<28} {a!s:>14} {b!s:>14} {d}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "column", "value", "reference", "rel_diff", "within"])
            for row in report:
                w.writerow(["N/A" if v is None else v for v in row])
    if "trading" in metrics:
        mine = simulator.grid_reduction(metrics)
        theirs = simulator.grid_reduction(reference)
        for name in mine:
            print(f"grid reduction vs trading  {name:<10} {mine[name]:6.2f}%  "
                  f"(reference {theirs.get(name, float('nan')):6.2f}%)")
    print(f"{sum(r[5] for r in report)}/{len(report)} cells within {args.tolerance:g}")
    return 0 if ok else 1


def cmd_validate_data(args) -> int:
    path = Path(args.data) if args.data else None
    if path is None or not path.is_file():
        raise InputError(f"data file not found: {path}", path)
    try:
        raw = dataset.load_clients(path, fill=False)
    except dataset.DatasetError as exc:
        raise InputError(str(exc), path) from None
    counties = {c.county_id for c in raw}
    incomplete = [c.client_id for c in raw if c.missing]
    print(f"clients={len(raw)} counties={len(counties)} "
          f"steps={raw[0].steps if raw else 0} incomplete={len(incomplete)}")
    for c in raw:
        if c.missing:
            print(f"  {c.client_id}: {c.missing} missing steps (zero-filled at load)")
    return 0


def _ensure_out(out) -> Path:
    p = Path(out)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory: {exc}", p) from None
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridshare", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, strategy=True):
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--data", help="client CSV")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="override rng_seed")
        p.add_argument("--scenario", choices=["within_county", "across_counties"])
        if strategy:
            p.add_argument("--strategy", choices=[s.value for s in Strategy])

    p = sub.add_parser("run", help="simulate one configuration")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="simulate several strategies and tabulate them")
    common(p, strategy=False)
    p.add_argument("--strategies", default=",".join(s.value for s in Strategy))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="compare a metric table against a reference table")
    p.add_argument("metrics")
    p.add_argument("--reference", required=True,
                   help="reference CSV, or one of: " + ", ".join(REFERENCES))
    p.add_argument("--tolerance", type=float, default=0.01, help="relative, per cell")
    p.add_argument("--out", help="write the per-cell report as CSV")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate-data", help="check a client CSV and report coverage")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_validate_data)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
