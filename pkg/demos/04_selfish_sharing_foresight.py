"""
Selfish sharing with perfect foresight
======================================

A selfish sharer only gives away what it will need back before the parked
energy expires, and takes it back before buying anything. With exact
knowledge of future deficits, nothing it parks goes to waste.
"""

import numpy as np

from gridshare import RunConfig, run
from gridshare.dataset import ClientRecord, ProductType
from gridshare.strategies import NeedOracle

rng = np.random.default_rng(3)
steps = 72
hours = np.arange(steps) % 24
sun = np.clip(np.sin((hours - 6) / 12 * np.pi), 0, None)


def client(cid, cons, prod):
    return ClientRecord(cid, "k", False, ProductType.Spot, 1, 0.0, cons, prod)


clients = [client(f"house{i}", rng.uniform(0.3, 1.5, steps), (2 + i) * sun) for i in range(3)]
clients += [client(f"shop{i}", rng.uniform(1.0, 2.5, steps), np.zeros(steps)) for i in range(3)]

# %%
# What the oracle sees for one house: its deficit over the coming 11 hours.
oracle = NeedOracle(clients)
print([round(oracle.needed("house0", t, 11), 2) for t in range(8, 20)])

# %%
# Broke shops cannot buy, so they ask for shares. Compare who keeps what.
for strategy in ("p2pse", "sse"):
    m = run(RunConfig(strategy=strategy, initial_balance=0.0), clients).aggregate
    print(f"{strategy:<6} shared {m.shared_by_prosumers:6.2f} kWh, "
          f"reused {m.pct_sold_or_reused_shared:5.1f}%, expired {m.expired_shared:5.2f} kWh, "
          f"grid {m.energy_from_grid:6.2f} kWh")
