"""Full-run orchestration: timestep loop per market group, grid settlement,
feed-in settlement and metric accumulation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .dataset import (ClientRecord, MarketGroup, Scenario, assign_battery_capacity,
                      partition)
from .market import DEFAULT_UTILITY_PRICE, PriceState, TradeKind
from .storage import CENTRAL, Battery, ShareLedger
from .strategies import (GroupState, MicrogridState, NeedOracle, StepReport, Strategy,
                         step)

# residual deficits/excesses below this are float dust from partial fills
DUST_KWH = 1e-9


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str = Scenario.AcrossCounties.value
    strategy: str = Strategy.P2PSE.value
    eta: float = 0.5
    tau: int = 12
    fee_rate: float = 0.10
    initial_balance: float = 10_000.0
    utility_price: Union[float, str] = DEFAULT_UTILITY_PRICE
    fit_floor_rule: str = "third_of_utility"
    fit_floor_value: Optional[float] = None
    settlement_fit_rule: str = "third_of_mean_price"
    settlement_fit_value: Optional[float] = None
    rng_seed: int = 0
    horizon_start: int = 0
    horizon_steps: Optional[int] = None
    record_logs: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            Scenario(self.scenario)
        except ValueError:
            raise ConfigError(f"unknown scenario {self.scenario!r}") from None
        try:
            Strategy(self.strategy)
        except ValueError:
            raise ConfigError(f"unknown strategy {self.strategy!r}") from None
        if not 0 <= self.eta <= 1:
            raise ConfigError(f"eta must be in [0, 1], got {self.eta}")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ConfigError(f"tau must be an integer >= 1, got {self.tau}")
        if not 0 <= self.fee_rate < 1:
            raise ConfigError(f"fee_rate must be in [0, 1), got {self.fee_rate}")
        if self.initial_balance < 0:
            raise ConfigError("initial_balance must be non-negative")
        if self.fit_floor_rule not in ("third_of_utility", "constant"):
            raise ConfigError(f"unknown fit_floor_rule {self.fit_floor_rule!r}")
        if self.fit_floor_rule == "constant" and self.fit_floor_value is None:
            raise ConfigError("fit_floor_rule=constant needs fit_floor_value")
        if self.settlement_fit_rule not in ("third_of_mean_price", "constant"):
            raise ConfigError(f"unknown settlement_fit_rule {self.settlement_fit_rule!r}")
        if self.settlement_fit_rule == "constant" and self.settlement_fit_value is None:
            raise ConfigError("settlement_fit_rule=constant needs settlement_fit_value")
        if self.horizon_start < 0 or (self.horizon_steps is not None and self.horizon_steps < 0):
            raise ConfigError("horizon must be non-negative")
        self.tau = int(self.tau)

    @classmethod
    def from_mapping(cls, data: Mapping) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return cls(**dict(data))

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass
class MetricsReport:
    energy_from_grid: float = 0.0
    paid_to_grid: float = 0.0
    p2p_traded_energy: float = 0.0
    earned_from_p2p: float = 0.0
    fees_collected: float = 0.0
    wasted_or_sold_to_grid: float = 0.0
    shared_by_prosumers: float = 0.0
    stored_shared: float = 0.0
    resold_shared: float = 0.0
    reclaimed_shared: float = 0.0
    expired_shared: float = 0.0
    unresolved_shared: float = 0.0
    pct_sold_or_reused_shared: Optional[float] = None
    earned_from_sharing: float = 0.0
    central_paid_for_shares: float = 0.0
    mean_price: Optional[float] = None
    settlement_fit: float = 0.0
    paid_minus_earned: float = 0.0


# Table-shaped summary: (column, metrics field, strategies where it is N/A)
_SHARING_ONLY = {Strategy.NO_TRADING, Strategy.TRADING, Strategy.TNB}
TABLE_COLUMNS = (
    ("energy_from_grid_kwh", "energy_from_grid", set()),
    ("paid_to_grid_eur", "paid_to_grid", set()),
    ("p2p_traded_energy_kwh", "p2p_traded_energy", {Strategy.NO_TRADING}),
    ("earned_from_p2p_eur", "earned_from_p2p", {Strategy.NO_TRADING}),
    ("wasted_or_sold_to_grid_kwh", "wasted_or_sold_to_grid", set()),
    ("shared_by_prosumers_kwh", "shared_by_prosumers", _SHARING_ONLY),
    ("pct_sold_or_reused_shared", "pct_sold_or_reused_shared", _SHARING_ONLY),
    ("earned_from_sharing_eur", "earned_from_sharing", _SHARING_ONLY | {Strategy.SSE}),
    ("paid_minus_earned_eur", "paid_minus_earned", set()),
)


@dataclass
class GroupResult:
    group_id: str
    members: list[str]
    metrics: MetricsReport
    final_states: dict[str, dict]
    central_balance: float
    prices: np.ndarray
    series: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    trades: list[dict] = field(repr=False, default_factory=list)
    shares: list[dict] = field(repr=False, default_factory=list)
    ledger: Optional[ShareLedger] = field(repr=False, default=None)


@dataclass
class RunResult:
    config: RunConfig
    groups: list[GroupResult]
    aggregate: MetricsReport

    @property
    def strategy(self) -> Strategy:
        return Strategy(self.config.strategy)

    def to_dict(self) -> dict:
        out = {
            "config": self.config.to_dict(),
            "aggregate": _clean(asdict(self.aggregate)),
            "groups": [],
        }
        for g in self.groups:
            entry = {
                "group_id": g.group_id,
                "members": g.members,
                "metrics": _clean(asdict(g.metrics)),
                "central_balance": _clean(g.central_balance),
                "final_states": _clean(g.final_states),
            }
            if self.config.record_logs:
                entry["trades"] = _clean(g.trades)
                entry["shares"] = _clean(g.shares)
            out["groups"].append(entry)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary_rows(self) -> list[tuple[str, dict]]:
        rows = [(g.group_id, table_row(g.metrics, self.strategy)) for g in self.groups]
        rows.append(("aggregate", table_row(self.aggregate, self.strategy)))
        return rows


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (TradeKind, Strategy, Scenario)):
        return obj.value
    return obj


def table_row(m: MetricsReport, strategy: Strategy) -> dict:
    """One Table-shaped row; None stands for N/A."""
    row = {}
    for col, attr, na in TABLE_COLUMNS:
        v = getattr(m, attr)
        row[col] = None if (strategy in na or v is None) else float(v)
    return row


def load_price_series(path) -> np.ndarray:
    """Hourly utility prices (EUR/kWh) from a CSV with a ``price_eur_kwh`` column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "price_eur_kwh" not in reader.fieldnames:
            raise ConfigError(f"{path}: price file needs a price_eur_kwh column")
        try:
            return np.array([float(r["price_eur_kwh"]) for r in reader])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: bad price value ({exc})") from None


def _utility_series(config: RunConfig, total_steps: int) -> np.ndarray:
    if isinstance(config.utility_price, (int, float)):
        return np.full(total_steps, float(config.utility_price))
    series = load_price_series(config.utility_price)
    if len(series) < total_steps:
        raise ConfigError(f"price file covers {len(series)} steps, dataset has {total_steps}")
    return series[:total_steps]


def _slice(c: ClientRecord, lo: int, hi: int) -> ClientRecord:
    return replace(c, consumption=c.consumption[lo:hi].copy(), production=c.production[lo:hi].copy())


def grid_settlement(states: Sequence[MicrogridState], up_t: float,
                    rep: Optional[StepReport] = None) -> tuple[float, float]:
    """Buy every remaining deficit from the grid at ``up_t``.

    Any remaining excess is recorded as wasted / exported. Returns the
    purchased energy and what it cost.
    """
    bought = 0.0
    wasted = 0.0
    for s in states:
        if s.deficit > DUST_KWH:
            bought += s.deficit
        if s.excess > DUST_KWH:
            wasted += s.excess
        s.deficit = 0.0
        s.excess = 0.0
    paid = bought * up_t
    if rep is not None:
        rep.grid_kwh = bought
        rep.grid_eur = paid
        rep.wasted = wasted
    return bought, paid


_SERIES = ("production", "consumption", "charged", "discharged", "reclaimed",
           "grid_kwh", "grid_eur", "wasted")


def run_group(config: RunConfig, clients: Sequence[ClientRecord], group: MarketGroup,
              capacities: Mapping[str, float], up: np.ndarray) -> GroupResult:
    strategy = Strategy(config.strategy)
    by_id = {c.client_id: c for c in clients}
    members = [by_id[cid] for cid in group.members]
    steps = len(up)
    base = up if steps else np.array([DEFAULT_UTILITY_PRICE])
    fit_floor = (base / 3.0 if config.fit_floor_rule == "third_of_utility"
                 else np.full(len(base), float(config.fit_floor_value)))
    state = GroupState(
        states=[MicrogridState(c, Battery(float(capacities[c.client_id]))) for c in members],
        accounts={**{c.client_id: float(config.initial_balance) for c in members}, CENTRAL: 0.0},
        ledger=ShareLedger(),
        prices=PriceState.initial(base, fit_floor),
    )
    oracle = NeedOracle(members, steps) if strategy is Strategy.SSE else None

    m = MetricsReport()
    series = {k: np.zeros(steps) for k in _SERIES}
    prices = np.full(steps, np.nan)
    trade_log: list[dict] = []
    share_log: list[dict] = []
    for t in range(steps):
        if strategy.shares:
            state.ledger.expire_shares(state.batteries, t)
        rep = step(state, t, strategy, eta=config.eta, tau=config.tau,
                   fee_rate=config.fee_rate, oracle=oracle)
        grid_settlement(state.states, float(up[t]), rep)
        for k in _SERIES:
            series[k][t] = getattr(rep, k)
        if rep.price is not None:
            prices[t] = rep.price
        m.reclaimed_shared += rep.reclaimed
        for tr in rep.trades:
            if tr.kind is TradeKind.P2P_TRADE:
                m.p2p_traded_energy += tr.amount
                m.earned_from_p2p += tr.seller_revenue
                m.fees_collected += tr.fee_paid
            else:
                m.resold_shared += tr.amount
                m.earned_from_sharing += tr.cost
        for ev in rep.shares:
            m.shared_by_prosumers += ev.amount
            m.stored_shared += ev.stored
            m.central_paid_for_shares += ev.payment
        if config.record_logs:
            for tr in rep.trades:
                trade_log.append({"t": t, "group": group.group_id, "kind": tr.kind.value,
                                  "seller": tr.seller, "buyer": tr.buyer, "kwh": tr.amount,
                                  "unit_price": tr.unit_price, "fee": tr.fee_paid,
                                  "record_id": tr.record_id})
            for ev in rep.shares:
                share_log.append({"t": t, "group": group.group_id, "prosumer": ev.prosumer_id,
                                  "consumer": ev.consumer_id, "sharer": ev.sharer_id,
                                  "kwh": ev.amount, "delivered": ev.delivered,
                                  "stored": ev.stored, "payment": ev.payment,
                                  "record_id": ev.record.record_id if ev.record else None})

    m.energy_from_grid = float(series["grid_kwh"].sum())
    m.paid_to_grid = float(series["grid_eur"].sum())
    m.wasted_or_sold_to_grid = float(series["wasted"].sum())
    m.expired_shared = sum(r.expired for r in state.ledger)
    m.unresolved_shared = sum(r.remaining for r in state.ledger)
    parked = sum(r.initial for r in state.ledger)
    used = sum(r.used for r in state.ledger)
    if parked > 0:
        m.pct_sold_or_reused_shared = min(100.0, max(0.0, 100.0 * (used / parked)))
    finite = prices[~np.isnan(prices)]
    if finite.size:
        m.mean_price = float(finite.mean())
    if config.settlement_fit_rule == "constant":
        m.settlement_fit = float(config.settlement_fit_value)
    elif m.mean_price is not None:
        m.settlement_fit = m.mean_price / 3.0
    else:
        # no local price without trading; fall back to the utility price
        m.settlement_fit = float(up.mean()) / 3.0 if steps else 0.0
    m.paid_minus_earned = (m.paid_to_grid - m.earned_from_p2p - m.earned_from_sharing
                           - m.wasted_or_sold_to_grid * m.settlement_fit)

    final = {s.client_id: {"balance": state.accounts[s.client_id],
                           "capacity": s.battery.capacity,
                           "stored": s.battery.stored,
                           "reserved": s.battery.reserved} for s in state.states}
    return GroupResult(group.group_id, list(group.members), m, final, state.accounts[CENTRAL],
                       prices, series, trade_log, share_log, state.ledger)


def aggregate(groups: Sequence[GroupResult]) -> MetricsReport:
    """Average of the per-group totals (the totals themselves for one group)."""
    agg = MetricsReport()
    if not groups:
        return agg
    for f in fields(MetricsReport):
        vals = [getattr(g.metrics, f.name) for g in groups]
        vals = [v for v in vals if v is not None]
        setattr(agg, f.name, float(np.mean(vals)) if vals else None)
    return agg


def run(config: RunConfig, clients: Sequence[ClientRecord],
        capacities: Optional[Mapping[str, float]] = None) -> RunResult:
    """Simulate every market group of ``config.scenario`` over the horizon.

    Groups are independent; battery capacities are drawn per client from
    ``config.rng_seed`` unless given.
    """
    config.validate()
    total = clients[0].steps if clients else 0
    if any(c.steps != total for c in clients):
        raise ConfigError("clients have unequal series lengths")
    lo = config.horizon_start
    hi = total if config.horizon_steps is None else lo + config.horizon_steps
    if hi > total or lo > total:
        raise ConfigError(f"horizon [{lo}, {hi}) exceeds dataset of {total} steps")
    up = _utility_series(config, total)[lo:hi]
    sliced = [_slice(c, lo, hi) for c in clients]
    if capacities is None:
        capacities = {c.client_id: assign_battery_capacity(c, config.rng_seed) for c in clients}
    else:
        missing = [c.client_id for c in clients if c.client_id not in capacities]
        if missing:
            raise ConfigError(f"no battery capacity for clients {missing}")
    groups = [run_group(config, sliced, g, capacities, up)
              for g in partition(sliced, config.scenario)]
    return RunResult(config, groups, aggregate(groups))


def sweep(config: RunConfig, clients: Sequence[ClientRecord],
          strategies: Iterable[str] = tuple(s.value for s in Strategy),
          capacities: Optional[Mapping[str, float]] = None) -> dict[str, RunResult]:
    return {s: run(config.with_overrides(strategy=s), clients, capacities) for s in strategies}


def compute_summary(results: Mapping[str, RunResult]) -> list[tuple[str, dict]]:
    """Aggregate row per strategy, Table-shaped."""
    return [(name, table_row(r.aggregate, r.strategy)) for name, r in results.items()]


def grid_reduction(rows: Mapping[str, Mapping], baseline: str = "trading",
                   column: str = "energy_from_grid_kwh") -> dict[str, float]:
    """Percentage drop of ``column`` relative to ``baseline`` for every other row."""
    base = rows[baseline][column]
    return {k: 100.0 * (base - r[column]) / base for k, r in rows.items()
            if k != baseline and r.get(column) is not None and base}


def write_table_csv(path, rows: Sequence[tuple[str, dict]]) -> None:
    cols = [c for c, _, _ in TABLE_COLUMNS]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", *cols])
        for label, row in rows:
            w.writerow([label, *("N/A" if row[c] is None else repr(row[c]) for c in cols)])


def read_table_csv(path) -> tuple[list[str], dict[str, dict]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = {}
        for r in reader:
            if not r:
                continue
            rows[r[0]] = {c: (None if v.strip().upper() == "N/A" else float(v))
                          for c, v in zip(header[1:], r[1:])}
    return header[1:], rows


def format_table(rows: Sequence[tuple[str, dict]]) -> str:
    """Metrics down, labels across, like the published result tables."""
    labels = [lab for lab, _ in rows]
    width = max([len(c) for c, _, _ in TABLE_COLUMNS] + [6])
    lines = [" " * width + "".join(f"{lab:>14}" for lab in labels)]
    for col, _, _ in TABLE_COLUMNS:
        cells = []
        for _, row in rows:
            v = row[col]
            cells.append(f"{'N/A':>14}" if v is None else
                         (f"{v:>13.1f}%" if col.startswith("pct") else f"{v:>14.4g}"))
        lines.append(f"{col:<{width}}" + "".join(cells))
    return "\n".join(lines)


def write_outputs(result: RunResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.json").write_text(result.to_json() + "\n")
    write_table_csv(out / "metrics.csv", result.summary_rows())
    if result.config.record_logs:
        with open(out / "trades.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "group", "kind", "seller", "buyer", "kwh", "unit_price", "fee"])
            for g in result.groups:
                for tr in g.trades:
                    w.writerow([tr["t"], tr["group"], tr["kind"], tr["seller"], tr["buyer"],
                                repr(tr["kwh"]), repr(tr["unit_price"]), repr(tr["fee"])])
        for g in result.groups:
            if g.ledger is not None and len(g.ledger):
                g.ledger.dump_csv(out / f"ledger_{g.group_id}.csv")
