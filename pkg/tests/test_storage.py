import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridshare.storage import Battery, ContractViolation, ShareLedger


def test_charge_clamps_at_capacity():
    b = Battery(10, stored=7)
    assert b.charge(5) == 3
    assert b.stored == 10


def test_charge_zero_is_identity():
    b = Battery(10, stored=4, reserved=1)
    assert b.charge(0) == 0
    assert (b.stored, b.reserved) == (4, 1)


def test_charge_two_steps():
    b = Battery(10)
    assert b.charge(4) == 4
    assert b.charge(8) == 6
    assert b.stored == 10


def test_negative_amounts_rejected():
    b = Battery(10)
    with pytest.raises(ContractViolation):
        b.charge(-1)
    with pytest.raises(ContractViolation):
        b.discharge_unreserved(-1)


@pytest.mark.parametrize("stored, reserved, want, delivered, left", [
    (8, 5, 6, 3, 5),
    (5, 5, 4, 0, 5),
    (8, 0, 6, 6, 2),
])
def test_discharge_unreserved(stored, reserved, want, delivered, left):
    b = Battery(10, stored=stored, reserved=reserved)
    assert b.discharge_unreserved(want) == delivered
    assert b.stored == left
    assert b.reserved == reserved


def test_reserve_store_in_bounds():
    ledger = ShareLedger()
    b = Battery(10, stored=2)
    rec = ledger.reserve_store(b, "P", "H", 4, t=0, tau=12)
    assert (b.stored, b.reserved, rec.remaining) == (6, 4, 4)


def test_reserve_zero_is_dead_record():
    ledger = ShareLedger()
    b = Battery(10, stored=2)
    rec = ledger.reserve_store(b, "P", "H", 0, t=3, tau=12)
    assert not rec.is_live(3)
    assert (b.stored, b.reserved) == (2, 0)


def test_reserve_expiry_stamp():
    rec = ShareLedger().reserve_store(Battery(10), "P", "H", 1, t=100, tau=12)
    assert rec.expires_at == 112


def test_reserve_over_capacity_is_violation():
    with pytest.raises(ContractViolation):
        ShareLedger().reserve_store(Battery(10, stored=8), "P", "H", 3, t=0, tau=12)


def test_draw_fifo():
    ledger = ShareLedger()
    bats = {"H1": Battery(10), "H2": Battery(10)}
    r1 = ledger.reserve_store(bats["H1"], "P", "H1", 3, t=0, tau=12)
    r2 = ledger.reserve_store(bats["H2"], "P", "H2", 5, t=0, tau=12)
    assert ledger.draw_reserved(bats, "P", 6, t=1) == 6
    assert r1.remaining == 0
    assert r2.remaining == 2
    assert (bats["H1"].stored, bats["H1"].reserved) == (0, 0)
    assert (bats["H2"].stored, bats["H2"].reserved) == (2, 2)


def test_draw_partial_leaves_second_record_untouched():
    ledger = ShareLedger()
    bats = {"H": Battery(20)}
    r1 = ledger.reserve_store(bats["H"], "P", "H", 5, t=0, tau=12)
    r2 = ledger.reserve_store(bats["H"], "P", "H", 5, t=0, tau=12)
    ledger.draw_reserved(bats, "P", 4, t=1)
    assert r1.remaining == 1
    assert r2.remaining == 5


def test_draw_nothing_for_other_owner():
    ledger = ShareLedger()
    bats = {"H": Battery(10)}
    ledger.reserve_store(bats["H"], "P", "H", 5, t=0, tau=12)
    assert ledger.draw_reserved(bats, "Q", 5, t=1) == 0


def test_draw_host_filter():
    ledger = ShareLedger()
    bats = {"H1": Battery(10), "H2": Battery(10)}
    ledger.reserve_store(bats["H1"], "P", "H1", 3, t=0, tau=12)
    r2 = ledger.reserve_store(bats["H2"], "P", "H2", 5, t=0, tau=12)
    assert ledger.draw_reserved(bats, "P", 4, t=1, host_filter="H2") == 4
    assert r2.remaining == 1


def test_draw_skips_expired():
    ledger = ShareLedger()
    bats = {"H": Battery(10)}
    ledger.reserve_store(bats["H"], "P", "H", 5, t=100, tau=12)
    assert ledger.draw_reserved(bats, "P", 5, t=112) == 0
    assert ledger.draw_reserved(bats, "P", 5, t=111) == 5


def test_expire_releases_ownership_not_energy():
    ledger = ShareLedger()
    bats = {"H": Battery(10, stored=1)}
    rec = ledger.reserve_store(bats["H"], "P", "H", 3, t=100, tau=12)
    assert ledger.expire_shares(bats, 111) == {}
    released = ledger.expire_shares(bats, 112)
    assert released == {"H": 3}
    assert bats["H"].stored == 4
    assert bats["H"].reserved == 0
    assert rec.remaining == 0 and rec.expired == 3


def test_expire_emptied_record_is_noop():
    ledger = ShareLedger()
    bats = {"H": Battery(10)}
    ledger.reserve_store(bats["H"], "P", "H", 3, t=0, tau=12)
    ledger.draw_reserved(bats, "P", 3, t=1)
    assert ledger.expire_shares(bats, 12) == {}
    assert bats["H"].stored == 0


def test_ledger_ids_increase():
    ledger = ShareLedger()
    b = Battery(100)
    ids = [ledger.reserve_store(b, "P", "H", 1, t=0, tau=2).record_id for _ in range(5)]
    assert ids == sorted(ids) and len(set(ids)) == 5


def test_dump_csv(tmp_path):
    ledger = ShareLedger()
    ledger.reserve_store(Battery(10), "P", "H", 2.5, t=4, tau=12)
    path = tmp_path / "ledger.csv"
    ledger.dump_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "record_id,sharer,host,created_at,expires_at,initial,remaining"
    assert lines[1] == "0,P,H,4,16,2.5,2.5"


# random operation sequences against a small pool of batteries
ops = st.lists(st.tuples(
    st.sampled_from(["charge", "discharge", "reserve", "draw", "expire", "tick"]),
    st.integers(0, 2), st.integers(0, 2),
    st.floats(0, 15, allow_nan=False)), max_size=60)


@settings(max_examples=200, deadline=None)
@given(ops, st.lists(st.floats(1, 20, allow_nan=False), min_size=3, max_size=3))
def test_battery_ledger_invariants(seq, caps):
    names = ["A", "B", "C"]
    bats = {n: Battery(c) for n, c in zip(names, caps)}
    ledger = ShareLedger()
    t = 0
    inflow = outflow = 0.0
    start = sum(b.stored for b in bats.values())
    for op, i, j, x in seq:
        host, owner = names[i], names[j]
        b = bats[host]
        if op == "charge":
            inflow += b.charge(x)
        elif op == "discharge":
            outflow += b.discharge_unreserved(x)
        elif op == "reserve":
            amt = min(x, b.remaining_capacity)
            ledger.reserve_store(b, owner, host, amt, t, tau=3)
            inflow += amt
        elif op == "draw":
            before = [(r.record_id, r.remaining) for r in ledger]
            got = ledger.draw_reserved(bats, owner, x, t)
            assert got <= x + 1e-12
            outflow += got
            for (rid, rem), r in zip(before, ledger):
                if not r.is_live(t) and r.expires_at <= t:
                    assert r.remaining == rem
        elif op == "expire":
            ledger.expire_shares(bats, t)
        else:
            t += 1
            ledger.expire_shares(bats, t)
        for n, bb in bats.items():
            assert -1e-9 <= bb.reserved <= bb.stored + 1e-9
            assert bb.stored <= bb.capacity + 1e-9
            hosted = sum(r.remaining for r in ledger
                         if r.host_id == n and r.remaining > 0 and r.expires_at > t)
            # records already past expiry but not yet swept still count until expire runs
            pending = sum(r.remaining for r in ledger
                          if r.host_id == n and r.remaining > 0 and r.expires_at <= t)
            assert abs(bb.reserved - hosted - pending) < 1e-9
        total = sum(bb.stored for bb in bats.values())
        assert abs(start + inflow - outflow - total) < 1e-9
