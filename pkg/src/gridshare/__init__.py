"""Peer-to-peer energy trading and battery-backed sharing between microgrids."""

from .dataset import (ClientRecord, Horizon, MarketGroup, ProductType, Scenario,
                      assign_battery_capacity, fill_missing, load_clients, net_energy,
                      partition)
from .market import (BuyRequest, Offer, PriceState, ShareRequest, Trade, TradeKind,
                     compute_price, match_fcfs, sell_stored_shares, share_out)
from .simulator import MetricsReport, RunConfig, RunResult, run, sweep
from .storage import CENTRAL, Battery, ShareLedger, ShareRecord
from .strategies import NeedOracle, Strategy

__version__ = "0.1.0"
