"""Order book, local pricing rule, FCFS matching and settlement."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, MutableMapping, Optional, Sequence

import numpy as np

from .storage import CENTRAL, Battery, ShareLedger, ShareRecord

DEFAULT_UTILITY_PRICE = 0.163  # EUR/kWh


@dataclass
class Offer:
    prosumer_id: str
    amount: float
    arrival_index: int


@dataclass
class BuyRequest:
    consumer_id: str
    amount: float
    arrival_index: int


@dataclass
class ShareRequest:
    consumer_id: str
    amount: float
    arrival_index: int


@dataclass
class OrderBook:
    offers: list[Offer] = field(default_factory=list)
    buy_requests: list[BuyRequest] = field(default_factory=list)
    share_requests: list[ShareRequest] = field(default_factory=list)


class TradeKind(str, enum.Enum):
    P2P_TRADE = "p2p_trade"
    RESALE_OF_SHARE = "resale_of_share"


@dataclass
class Trade:
    seller: str
    buyer: str
    amount: float
    unit_price: float
    fee_paid: float
    kind: TradeKind
    cost: float = 0.0  # what the buyer paid
    record_id: Optional[int] = None
    host: Optional[str] = None

    @property
    def seller_revenue(self) -> float:
        return self.cost - self.fee_paid


@dataclass
class ShareEvent:
    prosumer_id: str
    consumer_id: str
    amount: float
    delivered: float
    stored: float
    sharer_id: str
    record: Optional[ShareRecord] = None
    payment: float = 0.0


@dataclass
class PriceState:
    """Price memory for the local pricing rule.

    ``history`` holds the three most recent prices, newest last.
    """

    utility_price: np.ndarray
    fit_floor: np.ndarray
    history: deque = field(default_factory=lambda: deque(maxlen=3))
    current: float = float("nan")

    @classmethod
    def initial(cls, utility_price, fit_floor) -> "PriceState":
        up = np.asarray(utility_price, dtype=float)
        fit = np.broadcast_to(np.asarray(fit_floor, dtype=float), up.shape).copy()
        ps = cls(up, fit)
        ps.history.extend([float(up[0])] * 3)
        ps.current = float(up[0])
        return ps

    @property
    def last(self) -> float:
        return self.history[-1]


def compute_price(ps: PriceState, t: int, n_requests: int, n_offers: int) -> float:
    """Clear the local price for step ``t`` and push it onto the history.

    The supply/demand count ratio scales the three-step mean, clamped into
    [feed-in floor, utility price]. With no offers the previous price carries.
    """
    if n_offers > 0:
        mean3 = (ps.history[-1] + ps.history[-2] + ps.history[-3]) / 3
        raw = (n_requests / n_offers) * mean3
        p = max(float(ps.fit_floor[t]), min(float(ps.utility_price[t]), raw))
    else:
        p = ps.history[-1]
    ps.history.append(p)
    ps.current = p
    return p


def _affordable(want: float, balance: float, price: float) -> tuple[float, float]:
    """Largest quantity up to ``want`` the buyer can pay for, and its cost."""
    if price <= 0:
        return want, 0.0
    cost = want * price
    if cost <= balance:
        return want, cost
    return balance / price, balance


def match_fcfs(offers: Sequence[Offer], requests: Sequence[BuyRequest], unit_price: float,
               fee_rate: float, balances: MutableMapping[str, float],
               fee_account: str = CENTRAL) -> tuple[list[Trade], list[Offer], list[BuyRequest]]:
    """First-come first-served matching of buy requests against offers.

    Requests are served in arrival order, each walking the offers in arrival
    order. A buyer never pays more than their balance; a request the buyer
    cannot pay for stops there. Offers and requests are updated in place and
    the unmatched remainders returned.
    """
    if unit_price < 0:
        raise ValueError("unit_price must be non-negative")
    if not 0 <= fee_rate < 1:
        raise ValueError("fee_rate must be in [0, 1)")
    trades: list[Trade] = []
    queue = [o for o in offers if o.amount > 0]
    k = 0
    for req in requests:
        while req.amount > 0 and k < len(queue):
            offer = queue[k]
            want = min(offer.amount, req.amount)
            q, cost = _affordable(want, balances[req.consumer_id], unit_price)
            if q <= 0:
                break
            fee = cost * fee_rate
            balances[req.consumer_id] -= cost
            if balances[req.consumer_id] < 0:
                balances[req.consumer_id] = 0.0
            balances[offer.prosumer_id] += cost - fee
            if fee:
                balances[fee_account] = balances.get(fee_account, 0.0) + fee
            offer.amount -= q
            req.amount -= q
            trades.append(Trade(offer.prosumer_id, req.consumer_id, q, unit_price, fee,
                                TradeKind.P2P_TRADE, cost=cost))
            if offer.amount <= 0:
                k += 1
            if q < want:
                # out of money
                break
    residual_offers = [o for o in offers if o.amount > 0]
    residual_requests = [r for r in requests if r.amount > 0]
    return trades, residual_offers, residual_requests


def sell_stored_shares(ledger: ShareLedger, batteries: Mapping[str, Battery],
                       requests: Sequence[BuyRequest], unit_price: float, beneficiary: str,
                       balances: MutableMapping[str, float], t: int
                       ) -> tuple[list[Trade], list[BuyRequest]]:
    """Sell energy parked under live share records to buy requests.

    Records are consumed in creation order. ``beneficiary`` is ``"central"``
    (revenue to the central account) or ``"sharer"`` (revenue to the record's
    sharer). No fee applies. A buyer is never sold their own parked energy.
    """
    if beneficiary not in ("central", "sharer"):
        raise ValueError(f"unknown beneficiary rule {beneficiary!r}")
    trades: list[Trade] = []
    for req in requests:
        for rec in ledger.live(t):
            if req.amount <= 0:
                break
            if rec.sharer_id == req.consumer_id:
                continue
            want = min(rec.remaining, req.amount)
            q, cost = _affordable(want, balances[req.consumer_id], unit_price)
            if q <= 0:
                break
            q = ledger.consume(rec, batteries[rec.host_id], q)
            payee = CENTRAL if beneficiary == "central" else rec.sharer_id
            balances[req.consumer_id] -= cost
            if balances[req.consumer_id] < 0:
                balances[req.consumer_id] = 0.0
            balances[payee] = balances.get(payee, 0.0) + cost
            req.amount -= q
            trades.append(Trade(payee, req.consumer_id, q, unit_price, 0.0,
                                TradeKind.RESALE_OF_SHARE, cost=cost,
                                record_id=rec.record_id, host=rec.host_id))
            if q < want:
                break
    return trades, [r for r in requests if r.amount > 0]


def share_out(offers: Sequence[Offer], share_requests: Sequence[ShareRequest],
              ledger: ShareLedger, batteries: Mapping[str, Battery], eta: float, tau: int,
              t: int, sharer_of: str, balances: Optional[MutableMapping[str, float]] = None,
              purchase_price: Optional[float] = None) -> list[ShareEvent]:
    """Allocate leftover offers to share requests, FCFS on both sides.

    Of each matched quantity ``s`` the consumer uses ``eta * s`` now and the
    rest is parked in the consumer's battery under a record owned by the
    prosumer (``sharer_of="prosumer"``) or by the central entity
    (``sharer_of="central"``). When ``purchase_price`` is given the central
    account buys the shared energy from the prosumer at that price and sharing
    stops where the central balance runs out.
    """
    if not 0 <= eta <= 1:
        raise ValueError("eta must be in [0, 1]")
    if sharer_of not in ("prosumer", "central"):
        raise ValueError(f"unknown sharer rule {sharer_of!r}")
    pays = purchase_price is not None
    if pays and balances is None:
        raise ValueError("purchase_price requires balances")
    events: list[ShareEvent] = []
    queue = [o for o in offers if o.amount > 0]
    k = 0
    for req in share_requests:
        while req.amount > 0 and k < len(queue):
            offer = queue[k]
            s = min(offer.amount, req.amount)
            payment = 0.0
            if pays:
                s, payment = _affordable(s, balances[CENTRAL], purchase_price)
                if s <= 0:
                    return events
            ev = _make_share(offer, req, s, ledger, batteries, eta, tau, t,
                             CENTRAL if sharer_of == "central" else offer.prosumer_id)
            if pays:
                balances[CENTRAL] -= payment
                if balances[CENTRAL] < 0:
                    balances[CENTRAL] = 0.0
                balances[offer.prosumer_id] += payment
                ev.payment = payment
            events.append(ev)
            if offer.amount <= 0:
                k += 1
            if pays and balances[CENTRAL] <= 0:
                return events
    return events


def _make_share(offer: Offer, req: ShareRequest, s: float, ledger: ShareLedger,
                batteries: Mapping[str, Battery], eta: float, tau: int, t: int,
                sharer: str) -> ShareEvent:
    offer.amount -= s
    req.amount -= s
    if offer.amount < 1e-12:
        offer.amount = 0.0
    if req.amount < 1e-12:
        req.amount = 0.0
    delivered = eta * s
    stored = s - delivered
    rec = None
    if stored > 0:
        rec = ledger.reserve_store(batteries[req.consumer_id], sharer, req.consumer_id,
                                   stored, t, tau)
        stored = rec.initial
    return ShareEvent(offer.prosumer_id, req.consumer_id, s, delivered, stored, sharer, rec)


def selfish_share(offers: Sequence[Offer], share_requests: Sequence[ShareRequest],
                  ledger: ShareLedger, batteries: Mapping[str, Battery], eta: float,
                  tau: int, t: int, needed) -> list[ShareEvent]:
    """Share only what each prosumer will need back within the record lifetime.

    ``needed(prosumer_id)`` gives the prosumer's future deficit over the
    window in which a record created now can still be reclaimed; energy the
    prosumer already has parked under live records counts against it.
    """
    events: list[ShareEvent] = []
    for offer in offers:
        for req in share_requests:
            if offer.amount <= 0:
                break
            if req.amount <= 0:
                continue
            energy = min(offer.amount, req.amount)
            want = needed(offer.prosumer_id) - ledger.live_remaining(t, owner=offer.prosumer_id)
            if want <= 1e-12:
                break
            s = min(energy, want)
            events.append(_make_share(offer, req, s, ledger, batteries, eta, tau, t,
                                      offer.prosumer_id))
    return events
