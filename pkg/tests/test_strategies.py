import numpy as np
import pytest

from gridshare.dataset import ClientRecord, ProductType
from gridshare.market import PriceState, TradeKind
from gridshare.storage import CENTRAL, Battery, ShareLedger
from gridshare.strategies import (GroupState, MicrogridState, NeedOracle, Strategy, begin_step,
                                  step, submit)

UP = 0.163


def _client(cid, prod, cons):
    return ClientRecord(cid, "K", False, ProductType.Fixed, 1, 0.0,
                        consumption=np.asarray(cons, float), production=np.asarray(prod, float))


def _group(layout, balance=1e4, up=UP):
    """layout: list of (id, production series, consumption series, capacity, stored)."""
    states = []
    for cid, prod, cons, cap, stored in layout:
        states.append(MicrogridState(_client(cid, prod, cons), Battery(cap, stored=stored)))
    accounts = {s.client_id: balance for s in states}
    accounts[CENTRAL] = 0.0
    steps = len(layout[0][1]) if layout else 1
    return GroupState(states, accounts, ShareLedger(), PriceState.initial([up] * steps, up / 3))


def test_submit_surplus_overflow_offered():
    g = _group([("m", [12], [0], 10, 0)])
    book = submit(g, UP, Strategy.TNB, 0, begin_step(g, 0))
    assert g.states[0].battery.stored == 10
    assert [(o.prosumer_id, o.amount) for o in book.offers] == [("m", 2)]


def test_submit_deficit_covered_by_battery():
    g = _group([("m", [0], [5], 10, 8)])
    book = submit(g, UP, Strategy.TNB, 0, begin_step(g, 0))
    assert g.states[0].battery.stored == 3
    assert not (book.buy_requests or book.share_requests)


def test_submit_poor_client_requests_a_share():
    g = _group([("m", [0], [10], 12, 2)], balance=0.10)
    book = submit(g, UP, Strategy.P2PSE, 0, begin_step(g, 0))
    assert book.buy_requests == []
    # battery emptied to 0, so remaining capacity 12 > deficit 8
    assert [(r.consumer_id, r.amount) for r in book.share_requests] == [("m", 8)]


def test_submit_share_request_capped_by_room():
    g = _group([("m", [0, 0], [10, 0], 5, 0)], balance=0.0)
    book = submit(g, UP, Strategy.CSE, 0, begin_step(g, 0))
    assert book.share_requests[0].amount == 5


def test_submit_without_batteries_ignores_them():
    g = _group([("m", [0], [5], 10, 8)])
    book = submit(g, UP, Strategy.TRADING, 0, begin_step(g, 0))
    assert g.states[0].battery.stored == 8
    assert book.buy_requests[0].amount == 5


def test_submit_sse_reclaims_own_shares_first():
    g = _group([("p", [0, 0], [0, 4], 10, 0), ("h", [0, 0], [0, 0], 10, 0)])
    g.ledger.reserve_store(g.batteries["h"], "p", "h", 3, t=0, tau=12)
    rep = begin_step(g, 1)
    book = submit(g, UP, Strategy.SSE, 1, rep)
    assert rep.reclaimed == 3
    assert book.buy_requests[0].amount == pytest.approx(1)


def test_no_trading_passthrough():
    g = _group([("a", [0], [7], 10, 0), ("b", [7], [0], 10, 0), ("z", [0], [0], 10, 0)])
    rep = step(g, 0, "no_trading")
    assert rep.trades == [] and rep.price is None
    assert [s.deficit for s in g.states] == [7, 0, 0]
    assert [s.excess for s in g.states] == [0, 7, 0]


def test_trading_single_match():
    g = _group([("p", [10], [0], 10, 0), ("c", [0], [10], 10, 0)])
    rep = step(g, 0, "trading")
    assert sum(t.amount for t in rep.trades) == 10
    assert g.by_id["c"].deficit == 0


def test_trading_broke_consumer_goes_to_grid():
    g = _group([("p", [10], [0], 10, 0), ("c", [0], [10], 10, 0)], balance=0.0)
    rep = step(g, 0, "trading")
    assert rep.trades == []
    assert g.by_id["c"].deficit == 10


def test_trading_empty_group():
    g = GroupState([], {CENTRAL: 0.0}, ShareLedger(), PriceState.initial([UP], UP / 3))
    rep = step(g, 0, "trading")
    assert rep.trades == [] and rep.n_offers == 0


def test_tnb_two_step_trace():
    g = _group([("m", [10, 0, 3], [0, 6, 0], 10, 0)])
    rep = step(g, 0, "tnb")
    assert rep.n_offers == 0 and g.states[0].battery.stored == 10
    step(g, 1, "tnb")
    assert g.states[0].deficit == 0 and g.states[0].battery.stored == 4
    g.states[0].battery.stored = 10
    rep = step(g, 2, "tnb")
    assert rep.n_offers == 1 and g.states[0].excess == 3


def test_cse_share_then_resale():
    # t=0: p has 80 surplus, c is broke and needs 80 -> central share.
    # central has no money yet, so seed it to afford the purchase
    g = _group([("p", [80, 0], [0, 0], 0, 0), ("c", [0, 0], [80, 0], 100, 0),
                ("b", [0, 0], [0, 40], 0, 0)], balance=0.0)
    g.accounts[CENTRAL] = 1000.0
    g.accounts["b"] = 100.0
    rep = step(g, 0, "cse")
    ev = rep.shares[0]
    assert (ev.amount, ev.delivered, ev.stored) == (80, 40, 40)
    assert ev.record.sharer_id == CENTRAL and ev.record.expires_at == 12
    assert ev.payment == pytest.approx(80 * rep.price)
    assert g.accounts["p"] == pytest.approx(80 * rep.price)
    central_before = g.accounts[CENTRAL]
    rep = step(g, 1, "cse")
    assert [(t.kind, t.amount) for t in rep.trades] == [(TradeKind.RESALE_OF_SHARE, 40)]
    assert g.accounts[CENTRAL] == pytest.approx(central_before + 40 * rep.price)
    assert g.batteries["c"].stored == pytest.approx(0)


def test_cse_without_share_requests_is_tnb_with_fee():
    layout = [("p", [5, 0, 9], [0, 3, 0], 2, 0), ("c", [0, 0, 0], [4, 4, 4], 1, 0)]
    a, b = _group(layout), _group(layout)
    fees = 0.0
    for t in range(3):
        ra, rb = step(a, t, "cse"), step(b, t, "tnb")
        assert [(x.seller, x.buyer, x.amount) for x in ra.trades] == \
               [(x.seller, x.buyer, x.amount) for x in rb.trades]
        fees += sum(x.fee_paid for x in ra.trades)
    assert a.accounts[CENTRAL] == pytest.approx(fees) and fees > 0


def test_p2pse_share_and_peer_resale():
    g = _group([("p", [100, 0], [0, 0], 0, 0), ("c", [0, 0], [80, 0], 100, 0),
                ("b", [0, 0], [0, 40], 0, 0)], balance=0.0)
    g.accounts["b"] = 100.0
    rep = step(g, 0, "p2pse", eta=0.5, tau=12)
    rec = rep.shares[0].record
    assert (rec.sharer_id, rec.host_id, rec.remaining, rec.expires_at) == ("p", "c", 40, 12)
    assert g.accounts["p"] == 0 and g.accounts["c"] == 0
    rep = step(g, 1, "p2pse", eta=0.5, tau=12)
    assert rep.trades[0].kind is TradeKind.RESALE_OF_SHARE
    assert g.accounts["p"] == pytest.approx(40 * rep.price)


def test_p2pse_unsold_share_becomes_hosts():
    g = _group([("p", [100] + [0] * 12, [0] * 13, 0, 0),
                ("c", [0] * 13, [80] + [0] * 12, 100, 0)], balance=0.0)
    step(g, 0, "p2pse")
    for t in range(1, 13):
        g.ledger.expire_shares(g.batteries, t)
        step(g, t, "p2pse")
    assert g.batteries["c"].reserved == 0 and g.batteries["c"].stored == 40


def test_sse_hand_trace():
    # p: surplus 100 now, then a 60 deficit inside the window
    prod_p = [100] + [0] * 12
    cons_p = [0, 60] + [0] * 11
    g = _group([("p", prod_p, cons_p, 0, 0), ("c", [0] * 13, [80] + [0] * 12, 100, 0)],
               balance=0.0)
    oracle = NeedOracle([s.client for s in g.states])
    rep = step(g, 0, "sse", oracle=oracle)
    ev = rep.shares[0]
    assert (ev.amount, ev.delivered, ev.stored) == (60, 30, 30)
    assert g.states[0].excess == 40
    rep = step(g, 1, "sse", oracle=oracle)
    assert rep.reclaimed == 30


def test_sse_no_need_no_share():
    g = _group([("p", [100, 0], [0, 0], 0, 0), ("c", [0, 0], [80, 0], 100, 0)], balance=0.0)
    rep = step(g, 0, "sse", oracle=NeedOracle([s.client for s in g.states]))
    assert rep.shares == [] and g.states[0].excess == 100


def test_sse_requires_oracle():
    g = _group([("p", [1], [0], 0, 0)])
    with pytest.raises(ValueError):
        step(g, 0, "sse")


def test_oracle_needed():
    c = _client("x", [0, 0, 1, 0, 0], [0, 2, 1, 3, 0])
    o = NeedOracle([c])
    assert o.needed("x", 0, 3) == 5
    assert NeedOracle([_client("s", [5] * 4, [1] * 4)]).needed("s", 0, 3) == 0
    trunc = NeedOracle([_client("y", [0] * 3, [0, 0, 4])])
    assert trunc.needed("y", 0, 12) == 4
    assert trunc.needed("y", 2, 12) == 0


def test_strategy_flags():
    assert not Strategy.TRADING.uses_batteries and Strategy.TNB.uses_batteries
    assert {s for s in Strategy if s.shares} == {Strategy.CSE, Strategy.P2PSE, Strategy.SSE}
