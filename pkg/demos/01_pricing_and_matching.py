"""
Local price and first-come first-served matching
================================================

Each hour the group clears one local price from the count of buy requests
against the count of offers, then walks the book in arrival order.
"""

from gridshare.market import BuyRequest, Offer, PriceState, compute_price, match_fcfs

# %%
# Price memory starts at the utility price. More buyers than sellers push
# it up, but never past the utility price; no buyers at all pull it down
# to the feed-in floor.
state = PriceState.initial([0.163] * 4, fit_floor=0.163 / 3)
for requests, offers in [(3, 2), (1, 1), (0, 5), (2, 0)]:
    p = compute_price(state, 0, requests, offers)
    print(f"R={requests} O={offers} -> {p:.4f} EUR/kWh  history={[round(x, 4) for x in state.history]}")

# %%
# Matching: requests in order, each consuming offers in order.
offers = [Offer("A", 100, 0), Offer("B", 50, 1)]
requests = [BuyRequest("C", 120, 0), BuyRequest("D", 40, 1)]
balances = {k: 1_000.0 for k in "ABCD"}
trades, left_offers, left_requests = match_fcfs(offers, requests, 0.10, 0.0, balances)
for t in trades:
    print(f"{t.seller} -> {t.buyer}: {t.amount:g} kWh for {t.cost:.2f} EUR")
print("unmet:", [(r.consumer_id, r.amount) for r in left_requests])

# %%
# With a 10% fee the seller sees 90% of what the buyer pays.
balances = {"S": 0.0, "B": 10.0}
match_fcfs([Offer("S", 100, 0)], [BuyRequest("B", 100, 0)], 0.10, 0.10, balances)
print(balances)

# %%
# A buyer short on money gets a partial fill, never a negative balance.
balances = {"S": 0.0, "B": 0.25}
trades, _, rest = match_fcfs([Offer("S", 10, 0)], [BuyRequest("B", 10, 0)], 0.10, 0.0, balances)
print(f"filled {trades[0].amount:g} of 10 kWh, still needs {rest[0].amount:g}; balance {balances['B']}")
