"""Battery model and the share-record ledger.

A share record is the non-monetary payment instrument of the sharing
strategies: energy parked in a host battery that still belongs to the
sharer until it is drawn or the record expires.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional

CENTRAL = "CENTRAL"

# absorbs float dust when a record or reservation is drained to zero
_EPS = 1e-12


class ContractViolation(ValueError):
    """Raised when a caller breaks an operation's precondition."""


@dataclass
class Battery:
    capacity: float
    stored: float = 0.0
    reserved: float = 0.0

    @property
    def remaining_capacity(self) -> float:
        return max(0.0, self.capacity - self.stored)

    @property
    def unreserved(self) -> float:
        return max(0.0, self.stored - self.reserved)

    def charge(self, amount: float) -> float:
        """Store up to ``amount`` kWh; returns what the battery accepted."""
        if amount < 0:
            raise ContractViolation(f"negative charge amount {amount}")
        accepted = min(amount, self.remaining_capacity)
        self.stored += accepted
        if self.stored > self.capacity:
            self.stored = self.capacity
        return accepted

    def discharge_unreserved(self, amount: float) -> float:
        """Deliver up to ``amount`` kWh of the host's own (unreserved) charge."""
        if amount < 0:
            raise ContractViolation(f"negative discharge amount {amount}")
        delivered = min(amount, self.unreserved)
        self.stored -= delivered
        if self.stored < self.reserved:
            self.stored = self.reserved
        return delivered

    def _take_reserved(self, amount: float) -> None:
        self.stored -= amount
        self.reserved -= amount
        if self.reserved < _EPS:
            self.reserved = 0.0
        if self.stored < self.reserved:
            self.stored = self.reserved


@dataclass
class ShareRecord:
    record_id: int
    sharer_id: str
    host_id: str
    initial: float
    remaining: float
    created_at: int
    expires_at: int
    expired: float = 0.0

    @property
    def used(self) -> float:
        """Energy taken out of the record before expiry (resold or reclaimed)."""
        return self.initial - self.remaining - self.expired

    def is_live(self, t: int) -> bool:
        return t < self.expires_at and self.remaining > 0


@dataclass
class ShareLedger:
    """Creation-ordered share records; iteration is FIFO."""

    records: list[ShareRecord] = field(default_factory=list)
    _next_id: int = 0
    # records that may still hold energy; compacted once per step on expiry
    _open: list[ShareRecord] = field(default_factory=list, repr=False)

    def __iter__(self) -> Iterator[ShareRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def live(self, t: int, owner: Optional[str] = None,
             host: Optional[str] = None) -> Iterator[ShareRecord]:
        for rec in self._open:
            if not rec.is_live(t):
                continue
            if owner is not None and rec.sharer_id != owner:
                continue
            if host is not None and rec.host_id != host:
                continue
            yield rec

    def live_remaining(self, t: int, owner: Optional[str] = None,
                       host: Optional[str] = None) -> float:
        return sum(rec.remaining for rec in self.live(t, owner, host))

    def reserve_store(self, battery: Battery, sharer: str, host: str,
                      amount: float, t: int, tau: int) -> ShareRecord:
        """Park ``amount`` kWh in ``host``'s battery on behalf of ``sharer``."""
        if amount < 0:
            raise ContractViolation(f"negative reserve amount {amount}")
        room = battery.capacity - battery.stored
        if amount > room + _EPS:
            raise ContractViolation(
                f"reserve of {amount} kWh exceeds remaining capacity {room} of {host}")
        amount = min(amount, max(room, 0.0))
        battery.stored += amount
        battery.reserved += amount
        rec = ShareRecord(self._next_id, sharer, host, amount, amount, t, t + tau)
        self._next_id += 1
        self.records.append(rec)
        if amount > 0:
            self._open.append(rec)
        return rec

    def consume(self, rec: ShareRecord, battery: Battery, amount: float) -> float:
        """Take up to ``amount`` from one record, draining its host battery."""
        q = min(amount, rec.remaining)
        if q <= 0:
            return 0.0
        rec.remaining -= q
        if rec.remaining < _EPS:
            rec.remaining = 0.0
        battery._take_reserved(q)
        return q

    def draw_reserved(self, batteries: Mapping[str, Battery], owner: str,
                      amount: float, t: int,
                      host_filter: Optional[str] = None) -> float:
        """Consume ``owner``'s live records FIFO until ``amount`` is met.

        Returns the drawn quantity, never more than ``amount``.
        """
        if amount < 0:
            raise ContractViolation(f"negative draw amount {amount}")
        drawn = 0.0
        for rec in self.live(t, owner=owner, host=host_filter):
            if drawn >= amount:
                break
            drawn += self.consume(rec, batteries[rec.host_id], amount - drawn)
        return drawn

    def expire_shares(self, batteries: Mapping[str, Battery], t: int) -> dict[str, float]:
        """Close every record with ``expires_at <= t``.

        The leftover energy stays where it is but becomes the host's own:
        reserved drops, stored does not.
        """
        released: dict[str, float] = {}
        for rec in self._open:
            if rec.expires_at <= t and rec.remaining > 0:
                b = batteries[rec.host_id]
                b.reserved -= rec.remaining
                if b.reserved < _EPS:
                    b.reserved = 0.0
                released[rec.host_id] = released.get(rec.host_id, 0.0) + rec.remaining
                rec.expired = rec.remaining
                rec.remaining = 0.0
        self._open = [r for r in self._open if r.remaining > 0]
        return released

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["record_id", "sharer", "host", "created_at", "expires_at",
                        "initial", "remaining"])
            for r in self.records:
                w.writerow([r.record_id, r.sharer_id, r.host_id, r.created_at,
                            r.expires_at, repr(r.initial), repr(r.remaining)])
