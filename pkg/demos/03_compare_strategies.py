"""
All six strategies on a small fixture
=====================================

Three microgrids over two days: a steady solar prosumer, a daytime
consumer and a balanced household. Balances are small on purpose so that
clients run out of money and fall back on sharing.
"""

from pathlib import Path

from gridshare import RunConfig, load_clients, sweep
from gridshare.simulator import compute_summary, format_table, grid_reduction

DATA = Path(__file__).resolve().parent.parent / "tests" / "data" / "golden_3x48.csv"

clients = load_clients(DATA)
print(f"{len(clients)} clients, {clients[0].steps} hourly steps")

# %%
results = sweep(RunConfig(initial_balance=0.5, rng_seed=7), clients)
rows = compute_summary(results)
print(format_table(rows))

# %%
# Grid energy saved relative to plain trading.
for name, pct in grid_reduction(dict(rows)).items():
    print(f"{name:<10} {pct:6.2f}%")

# %%
# How the parked energy ended up, per sharing strategy.
for name in ("cse", "p2pse", "sse"):
    m = results[name].aggregate
    print(f"{name:<6} parked {m.stored_shared:7.3f}  resold {m.resold_shared:7.3f}  "
          f"reclaimed {m.reclaimed_shared:7.3f}  expired {m.expired_shared:7.3f}")
