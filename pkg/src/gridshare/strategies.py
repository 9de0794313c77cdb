"""Per-timestep behaviour of the six strategies.

Every strategy runs inside one market group. A step is: submission (battery
self-consumption, then offers / buy requests / share requests), price
clearing, then the strategy's trading and sharing phases. Whatever deficit or
excess is left afterwards is settled with the grid by the simulator.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import market
from .dataset import ClientRecord
from .market import BuyRequest, Offer, OrderBook, PriceState, ShareEvent, ShareRequest, Trade
from .storage import Battery, ShareLedger


class Strategy(str, enum.Enum):
    NO_TRADING = "no_trading"
    TRADING = "trading"
    TNB = "tnb"
    CSE = "cse"
    P2PSE = "p2pse"
    SSE = "sse"

    @property
    def uses_batteries(self) -> bool:
        return self not in (Strategy.NO_TRADING, Strategy.TRADING)

    @property
    def shares(self) -> bool:
        return self in (Strategy.CSE, Strategy.P2PSE, Strategy.SSE)


@dataclass
class MicrogridState:
    client: ClientRecord
    battery: Battery
    deficit: float = 0.0
    excess: float = 0.0

    @property
    def client_id(self) -> str:
        return self.client.client_id


class NeedOracle:
    """Perfect-foresight future deficit of each client.

    ``needed(i, t, window)`` sums ``max(0, consumption - production)`` over
    steps ``t+1 .. t+window``, truncated at ``steps``.
    """

    def __init__(self, clients: Sequence[ClientRecord], steps: Optional[int] = None):
        self._cum: dict[str, np.ndarray] = {}
        for c in clients:
            n = c.steps if steps is None else min(steps, c.steps)
            d = np.maximum(0.0, c.consumption[:n] - c.production[:n])
            self._cum[c.client_id] = np.concatenate([[0.0], np.cumsum(d)])

    def needed(self, client_id: str, t: int, window: int) -> float:
        cum = self._cum[client_id]
        n = len(cum) - 1
        lo = min(t + 1, n)
        hi = min(t + window + 1, n)
        if hi <= lo:
            return 0.0
        return float(cum[hi] - cum[lo])


@dataclass
class GroupState:
    """Mutable state of one market group: one single-writer domain."""

    states: list[MicrogridState]
    accounts: dict[str, float]
    ledger: ShareLedger
    prices: PriceState
    batteries: dict[str, Battery] = field(init=False, repr=False)
    by_id: dict[str, MicrogridState] = field(init=False, repr=False)

    def __post_init__(self):
        self.batteries = {s.client_id: s.battery for s in self.states}
        self.by_id = {s.client_id: s for s in self.states}


@dataclass
class StepReport:
    t: int
    price: Optional[float] = None
    production: float = 0.0
    consumption: float = 0.0
    charged: float = 0.0
    discharged: float = 0.0
    reclaimed: float = 0.0
    grid_kwh: float = 0.0
    grid_eur: float = 0.0
    wasted: float = 0.0
    n_offers: int = 0
    n_buy_requests: int = 0
    n_share_requests: int = 0
    trades: list[Trade] = field(default_factory=list)
    shares: list[ShareEvent] = field(default_factory=list)


def begin_step(group: GroupState, t: int) -> StepReport:
    """Load this step's net energy into each state."""
    rep = StepReport(t)
    for s in group.states:
        c = s.client
        rep.production += float(c.production[t])
        rep.consumption += float(c.consumption[t])
        ee = float(c.production[t] - c.consumption[t])
        s.excess = max(ee, 0.0)
        s.deficit = max(-ee, 0.0)
    return rep


def submit(group: GroupState, expected_price: float, strategy: Strategy, t: int,
           rep: StepReport) -> OrderBook:
    """Battery interaction then order submission, client by client in order.

    A surplus first charges the battery and the overflow is offered. A deficit
    is covered, in order, by reclaiming the client's own parked shares (selfish
    sharing only), by the battery's unreserved charge, and then by a buy
    request if the client can pay for it at ``expected_price``, otherwise by a
    share request sized to the free battery room.
    """
    book = OrderBook()
    batteries = group.batteries
    for s in group.states:
        cid = s.client_id
        if s.excess > 0:
            if strategy.uses_batteries:
                got = s.battery.charge(s.excess)
                rep.charged += got
                s.excess -= got
            if s.excess > 0:
                book.offers.append(Offer(cid, s.excess, len(book.offers)))
        elif s.deficit > 0:
            if strategy is Strategy.SSE:
                got = group.ledger.draw_reserved(batteries, cid, s.deficit, t)
                rep.reclaimed += got
                rep.discharged += got
                s.deficit -= got
            if strategy.uses_batteries and s.deficit > 0:
                got = s.battery.discharge_unreserved(s.deficit)
                rep.discharged += got
                s.deficit -= got
            if s.deficit <= 0:
                s.deficit = 0.0
                continue
            if group.accounts[cid] > s.deficit * expected_price:
                book.buy_requests.append(BuyRequest(cid, s.deficit, len(book.buy_requests)))
            elif strategy.shares and s.battery.remaining_capacity > 0:
                amount = min(s.deficit, s.battery.remaining_capacity)
                book.share_requests.append(ShareRequest(cid, amount, len(book.share_requests)))
    rep.n_offers = len(book.offers)
    rep.n_buy_requests = len(book.buy_requests)
    rep.n_share_requests = len(book.share_requests)
    return book


def _apply_trades(group: GroupState, trades: list[Trade], rep: StepReport) -> None:
    by_id = group.by_id
    for tr in trades:
        by_id[tr.buyer].deficit -= tr.amount
        if tr.kind is market.TradeKind.RESALE_OF_SHARE:
            rep.discharged += tr.amount
    rep.trades.extend(trades)


def _apply_shares(group: GroupState, events: list[ShareEvent], rep: StepReport) -> None:
    by_id = group.by_id
    for ev in events:
        by_id[ev.consumer_id].deficit -= ev.delivered
        rep.charged += ev.stored
    rep.shares.extend(events)


def _sync_offers(group: GroupState, offers: list[Offer]) -> None:
    # leftover offer energy is what the simulator will count as wasted
    left = {s.client_id: 0.0 for s in group.states}
    for o in offers:
        left[o.prosumer_id] += o.amount
    for s in group.states:
        s.excess = left[s.client_id]


def _clear(group: GroupState, t: int, book: OrderBook, rep: StepReport) -> float:
    p = market.compute_price(group.prices, t, len(book.buy_requests), len(book.offers))
    rep.price = p
    return p


def step_no_trading(group: GroupState, t: int) -> StepReport:
    """Nothing but the grid: deficits are bought, surpluses wasted or exported."""
    return begin_step(group, t)


def step_trading(group: GroupState, t: int) -> StepReport:
    return _step_traded(group, t, Strategy.TRADING)


def step_tnb(group: GroupState, t: int) -> StepReport:
    return _step_traded(group, t, Strategy.TNB)


def _step_traded(group: GroupState, t: int, strategy: Strategy) -> StepReport:
    rep = begin_step(group, t)
    book = submit(group, group.prices.last, strategy, t, rep)
    p = _clear(group, t, book, rep)
    trades, offers, _ = market.match_fcfs(book.offers, book.buy_requests, p, 0.0, group.accounts)
    _apply_trades(group, trades, rep)
    _sync_offers(group, book.offers)
    return rep


def step_cse(group: GroupState, t: int, eta: float, tau: int, fee_rate: float) -> StepReport:
    """Central sharer: resell parked shares, trade with a fee, then share.

    The central account owns every share record, takes the trading fee and
    buys the shared energy from the prosumer at the cleared price, as far as
    its balance allows.
    """
    rep = begin_step(group, t)
    book = submit(group, group.prices.last, Strategy.CSE, t, rep)
    p = _clear(group, t, book, rep)
    batteries = group.batteries
    resales, requests = market.sell_stored_shares(
        group.ledger, batteries, book.buy_requests, p, "central", group.accounts, t)
    _apply_trades(group, resales, rep)
    trades, offers, _ = market.match_fcfs(book.offers, requests, p, fee_rate, group.accounts)
    _apply_trades(group, trades, rep)
    events = market.share_out(offers, book.share_requests, group.ledger, batteries, eta, tau, t,
                              "central", balances=group.accounts, purchase_price=p)
    _apply_shares(group, events, rep)
    _sync_offers(group, book.offers)
    return rep


def step_p2pse(group: GroupState, t: int, eta: float, tau: int) -> StepReport:
    """Peer sharer: as the central variant, but fee-free and the prosumer
    keeps ownership of (and resale revenue from) the parked energy."""
    rep = begin_step(group, t)
    book = submit(group, group.prices.last, Strategy.P2PSE, t, rep)
    p = _clear(group, t, book, rep)
    batteries = group.batteries
    resales, requests = market.sell_stored_shares(
        group.ledger, batteries, book.buy_requests, p, "sharer", group.accounts, t)
    _apply_trades(group, resales, rep)
    trades, offers, _ = market.match_fcfs(book.offers, requests, p, 0.0, group.accounts)
    _apply_trades(group, trades, rep)
    events = market.share_out(offers, book.share_requests, group.ledger, batteries, eta, tau, t,
                              "prosumer")
    _apply_shares(group, events, rep)
    _sync_offers(group, book.offers)
    return rep


def step_sse(group: GroupState, t: int, eta: float, tau: int, oracle: NeedOracle) -> StepReport:
    """Selfish sharer: share first, only what the prosumer will need back,
    then trade what is left.

    Parked energy is reclaimable on steps ``t+1 .. t+tau-1`` (the record is
    closed at the start of ``t+tau``), so the need is looked up over that
    window.
    """
    rep = begin_step(group, t)
    book = submit(group, group.prices.last, Strategy.SSE, t, rep)
    p = _clear(group, t, book, rep)
    window = tau - 1
    events = market.selfish_share(book.offers, book.share_requests, group.ledger,
                                  group.batteries, eta, tau, t,
                                  lambda cid: oracle.needed(cid, t, window))
    _apply_shares(group, events, rep)
    trades, offers, _ = market.match_fcfs(book.offers, book.buy_requests, p, 0.0, group.accounts)
    _apply_trades(group, trades, rep)
    _sync_offers(group, book.offers)
    return rep


def step(group: GroupState, t: int, strategy: Strategy, eta: float = 0.5, tau: int = 12,
         fee_rate: float = 0.10, oracle: Optional[NeedOracle] = None) -> StepReport:
    strategy = Strategy(strategy)
    if strategy is Strategy.NO_TRADING:
        return step_no_trading(group, t)
    if strategy is Strategy.TRADING:
        return step_trading(group, t)
    if strategy is Strategy.TNB:
        return step_tnb(group, t)
    if strategy is Strategy.CSE:
        return step_cse(group, t, eta, tau, fee_rate)
    if strategy is Strategy.P2PSE:
        return step_p2pse(group, t, eta, tau)
    if oracle is None:
        raise ValueError("selfish sharing needs a NeedOracle")
    return step_sse(group, t, eta, tau, oracle)
