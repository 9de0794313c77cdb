"""
Markets within a county and across counties
===========================================

Within-county markets run each county on its own and report the mean of
the county totals; the across-county market pools everyone.
"""

import numpy as np

from gridshare import RunConfig, run
from gridshare.dataset import ClientRecord, ProductType, Scenario, partition

rng = np.random.default_rng(11)
steps = 48
clients = []
for i in range(8):
    county = "north" if i < 3 else "south"
    scale = 4.0 if i % 2 else 0.3
    clients.append(ClientRecord(f"m{i}", county, False, ProductType.Fixed, 1 + i % 3, 0.0,
                                rng.uniform(0, 2, steps), rng.uniform(0, scale, steps)))

print([(g.group_id, g.members) for g in partition(clients, Scenario.WithinCounty)])

# %%
for scenario in ("within_county", "across_counties"):
    res = run(RunConfig(strategy="p2pse", scenario=scenario), clients)
    for label, row in res.summary_rows():
        print(f"{scenario:<16} {label:<10} grid {row['energy_from_grid_kwh']:7.2f} kWh  "
              f"traded {row['p2p_traded_energy_kwh']:6.2f} kWh")

# %%
# Running a county alone gives exactly its group inside the within-county run.
north = [c for c in clients if c.county_id == "north"]
alone = run(RunConfig(strategy="p2pse"), north).aggregate
inside = run(RunConfig(strategy="p2pse", scenario="within_county"), clients).groups[0].metrics
print("identical:", alone == inside)
