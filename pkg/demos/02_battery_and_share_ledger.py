"""
Batteries and parked shared energy
==================================

Shared energy is split: part is used at once, the rest is parked in the
receiver's battery and stays reserved for the sharer until it expires.
"""

from gridshare.storage import Battery, ShareLedger

# %%
# Charging clamps at capacity; discharging only reaches unreserved charge.
b = Battery(capacity=10.0)
print("accepted", b.charge(4), b.charge(8), "stored", b.stored)

# %%
# Park 3 kWh of P's energy in host H's battery at t=100 with a 12-step life.
ledger = ShareLedger()
bats = {"H": Battery(10.0, stored=5.0)}
rec = ledger.reserve_store(bats["H"], "P", "H", 3.0, t=100, tau=12)
print(rec)
print("H can use", bats["H"].unreserved, "of", bats["H"].stored)

# %%
# P draws back 2 kWh later on; the host's reservation shrinks with it.
print("drawn", ledger.draw_reserved(bats, "P", 2.0, t=105), bats["H"])

# %%
# At t=112 the record closes. The last kWh stays where it is but now belongs
# to the host.
print("released", ledger.expire_shares(bats, 112), bats["H"])
print(f"used {rec.used:g} of {rec.initial:g}, expired {rec.expired:g}")
