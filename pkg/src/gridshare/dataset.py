"""Client time-series ingestion, cleaning, battery sizing and market grouping."""

from __future__ import annotations

import csv
import enum
import zlib
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

CSV_COLUMNS = (
    "client_id", "county_id", "is_business", "product_type", "eic_count",
    "pv_capacity_kw", "timestamp", "consumption_kwh", "production_kwh",
)

HOUR = timedelta(hours=1)

# per-house battery size range in kWh
BATTERY_KWH_PER_EIC = (5.0, 20.0)


class DatasetError(Exception):
    pass


class ParseError(DatasetError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DataError(DatasetError):
    pass


class ProductType(enum.Enum):
    Combined = "Combined"
    Fixed = "Fixed"
    GeneralService = "GeneralService"
    Spot = "Spot"

    @classmethod
    def parse(cls, raw: str) -> "ProductType":
        key = raw.strip().replace(" ", "").replace("_", "").lower()
        aliases = {
            "combined": cls.Combined, "0": cls.Combined,
            "fixed": cls.Fixed, "1": cls.Fixed,
            "generalservice": cls.GeneralService, "2": cls.GeneralService,
            "spot": cls.Spot, "3": cls.Spot,
        }
        try:
            return aliases[key]
        except KeyError:
            raise DataError(f"unknown product type {raw!r}") from None


class Scenario(str, enum.Enum):
    WithinCounty = "within_county"
    AcrossCounties = "across_counties"


@dataclass(frozen=True)
class Horizon:
    """Hourly timestep range ``[start, start + steps)``."""

    start: datetime
    steps: int

    def index(self, ts: datetime) -> Optional[int]:
        delta = ts - self.start
        idx, rem = divmod(delta, HOUR)
        if rem or idx < 0 or idx >= self.steps:
            return None
        return int(idx)

    def timestamp(self, i: int) -> datetime:
        return self.start + i * HOUR


@dataclass
class ClientRecord:
    client_id: str
    county_id: str
    is_business: bool
    product_type: ProductType
    eic_count: int
    pv_capacity: float
    consumption: np.ndarray
    production: np.ndarray

    def __post_init__(self):
        if self.eic_count < 1:
            raise DataError(f"client {self.client_id}: eic_count must be >= 1")
        self.consumption = np.asarray(self.consumption, dtype=float)
        self.production = np.asarray(self.production, dtype=float)
        if self.consumption.shape != self.production.shape:
            raise DataError(f"client {self.client_id}: series length mismatch")

    @property
    def steps(self) -> int:
        return len(self.consumption)

    @property
    def missing(self) -> int:
        """Timesteps with no observation (NaN) in either series."""
        return int(np.count_nonzero(np.isnan(self.consumption) | np.isnan(self.production)))


@dataclass
class MarketGroup:
    group_id: str
    members: list[str] = field(default_factory=list)


def parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.strip().replace("Z", "+00:00"))
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts


def _parse_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes"):
        return True
    if v in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def load_clients(path, horizon: Optional[Horizon] = None, fill: bool = True) -> list[ClientRecord]:
    """Read the client CSV into records ordered by first appearance.

    Rows outside ``horizon`` are dropped. When ``horizon`` is None it spans the
    earliest to the latest timestamp in the file. With ``fill=False`` absent
    timesteps are left as NaN so that callers can inspect coverage.
    """
    path = Path(path)
    meta: dict[str, dict] = {}
    obs: dict[str, dict[datetime, tuple[float, float]]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ParseError(1, f"missing columns {missing}")
        col = {c: header.index(c) for c in CSV_COLUMNS}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(line, f"expected {len(header)} fields, got {len(row)}")
            try:
                cid = row[col["client_id"]].strip()
                is_business = _parse_bool(row[col["is_business"]])
                eic = int(row[col["eic_count"]])
                pv = float(row[col["pv_capacity_kw"]] or 0.0)
                ts = parse_timestamp(row[col["timestamp"]])
                cons_raw = row[col["consumption_kwh"]].strip()
                prod_raw = row[col["production_kwh"]].strip()
                cons = float(cons_raw) if cons_raw else float("nan")
                prod = float(prod_raw) if prod_raw else float("nan")
            except ValueError as exc:
                raise ParseError(line, str(exc)) from None
            try:
                product = ProductType.parse(row[col["product_type"]])
            except DataError as exc:
                raise DataError(f"line {line}: {exc}") from None
            if cons < 0 or prod < 0:
                raise DataError(f"line {line}: negative energy for client {cid}")
            if cid not in meta:
                meta[cid] = dict(county_id=row[col["county_id"]].strip(),
                                 is_business=is_business, product_type=product,
                                 eic_count=eic, pv_capacity=pv)
                obs[cid] = {}
            if ts in obs[cid]:
                raise DataError(f"line {line}: duplicate entry for client {cid} at {ts.isoformat()}")
            obs[cid][ts] = (cons, prod)

    if not meta:
        return []
    if horizon is None:
        all_ts = [ts for series in obs.values() for ts in series]
        start, end = min(all_ts), max(all_ts)
        horizon = Horizon(start, int((end - start) // HOUR) + 1)

    records = []
    for cid, m in meta.items():
        cons = np.full(horizon.steps, np.nan)
        prod = np.full(horizon.steps, np.nan)
        for ts, (c, p) in obs[cid].items():
            i = horizon.index(ts)
            if i is not None:
                cons[i] = c
                prod[i] = p
        rec = ClientRecord(cid, consumption=cons, production=prod, **m)
        records.append(fill_missing(rec, horizon.steps) if fill else rec)
    return records


def fill_missing(record: ClientRecord, steps: Optional[int] = None) -> ClientRecord:
    """Zero every absent consumption/production value, padding to ``steps``."""
    n = record.steps if steps is None else steps

    def _fill(a):
        out = np.zeros(n)
        m = min(n, len(a))
        out[:m] = np.nan_to_num(a[:m], nan=0.0)
        return out

    cons, prod = _fill(record.consumption), _fill(record.production)
    # a timestep with only one series observed is still treated as missing
    gap = np.zeros(n, dtype=bool)
    m = min(n, record.steps)
    gap[:m] = np.isnan(record.consumption[:m]) | np.isnan(record.production[:m])
    cons[gap] = 0.0
    prod[gap] = 0.0
    return replace(record, consumption=cons, production=prod)


def _client_seed(rng_seed: int, client_id: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(rng_seed) & 0xFFFFFFFF, zlib.crc32(str(client_id).encode())])


def assign_battery_capacity(record: ClientRecord, rng_seed: int) -> float:
    """Battery capacity in kWh: a per-house draw from [5, 20] times eic_count.

    The draw comes from a generator keyed on (seed, client_id), so it does not
    depend on which other clients are loaded.
    """
    lo, hi = BATTERY_KWH_PER_EIC
    u = np.random.default_rng(_client_seed(rng_seed, record.client_id)).uniform(lo, hi)
    return float(u) * record.eic_count


def partition(clients: Sequence[ClientRecord], scenario: Scenario | str) -> list[MarketGroup]:
    scenario = Scenario(scenario)
    if scenario is Scenario.AcrossCounties:
        return [MarketGroup("all", [c.client_id for c in clients])]
    groups: dict[str, MarketGroup] = {}
    for c in clients:
        groups.setdefault(c.county_id, MarketGroup(c.county_id)).members.append(c.client_id)
    return list(groups.values())


def net_energy(record: ClientRecord, t: int) -> float:
    """Production minus consumption at ``t``; negative means the client needs energy."""
    if not 0 <= t < record.steps:
        raise IndexError(f"timestep {t} outside horizon of {record.steps}")
    return float(record.production[t] - record.consumption[t])


def write_clients(path, clients: Iterable[ClientRecord], start: datetime) -> None:
    """Write records back out in the input CSV schema (one row per client-hour)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for c in clients:
            for i in range(c.steps):
                if np.isnan(c.consumption[i]) or np.isnan(c.production[i]):
                    continue
                w.writerow([c.client_id, c.county_id, int(c.is_business), c.product_type.value,
                            c.eic_count, repr(c.pv_capacity), (start + i * HOUR).isoformat(),
                            repr(float(c.consumption[i])), repr(float(c.production[i]))])


def convert_enefit(train_csv, client_csv, out_csv) -> int:
    """Convert the public Enefit competition files into the client CSV schema.

    One client per ``prediction_unit_id``; ``eic_count`` and installed capacity
    are the per-unit maxima over the client file (they drift slowly by date).
    Returns the number of rows written.
    """
    units: dict[tuple, dict] = {}
    with open(client_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["county"], row["is_business"], row["product_type"])
            u = units.setdefault(key, {"eic": 1, "pv": 0.0})
            u["eic"] = max(u["eic"], int(float(row["eic_count"] or 1)))
            u["pv"] = max(u["pv"], float(row["installed_capacity"] or 0.0))

    series: dict[str, dict] = {}
    order: list[str] = []
    with open(train_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            cid = row["prediction_unit_id"]
            if cid not in series:
                series[cid] = {"key": (row["county"], row["is_business"], row["product_type"]),
                               "obs": {}}
                order.append(cid)
            ts = row["datetime"]
            slot = series[cid]["obs"].setdefault(ts, ["", ""])
            slot[0 if row["is_consumption"].strip() == "1" else 1] = row["target"]

    n = 0
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for cid in order:
            county, business, product = series[cid]["key"]
            u = units.get(series[cid]["key"], {"eic": 1, "pv": 0.0})
            for ts, (cons, prod) in series[cid]["obs"].items():
                w.writerow([cid, county, business, ProductType.parse(product).value, u["eic"],
                            u["pv"], parse_timestamp(ts).isoformat(), cons, prod])
                n += 1
    return n
