"""Per-router forwarding state: FIB, hop-index table (HRT), delivery table (DRT).

The FIB maps global prefixes to (next hop, hop-count distance).  The HRT
anchors per-flow reverse state: each entry binds a private hop index to the
previous hop and the scalar that arrived from it.  The DRT lets an egress
router find the HRT anchor again when a local host replies to an anonymous
origin ID.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

from .addressing import Address, AddressExhausted, LocalInterval, Prefix

LOCAL = "local"  # FIB next-hop sentinel for a directly attached prefix


@dataclass
class FibEntry:
    prefix: Prefix
    next_hop: str
    distance: int


class Fib:
    """Longest-prefix-match table, one entry per prefix."""

    def __init__(self) -> None:
        self._entries: dict[tuple[Address, int], FibEntry] = {}
        self._lengths: list[int] = []  # distinct prefix lengths, descending

    def install(self, prefix: Prefix, next_hop: str, distance: int) -> None:
        if distance < 0:
            raise ValueError(f"negative distance {distance} for {prefix}")
        self._entries[(prefix.base, prefix.length)] = FibEntry(prefix, next_hop, distance)
        if prefix.length not in self._lengths:
            self._lengths.append(prefix.length)
            self._lengths.sort(reverse=True)

    def lookup(self, d: Address) -> FibEntry | None:
        # Probe candidate prefixes longest-first; first hit wins.
        for plen in self._lengths:
            mask = 0 if plen == 0 else (0xFFFFFFFF << (32 - plen)) & 0xFFFFFFFF
            entry = self._entries.get((d & mask, plen))
            if entry is not None:
                return entry
        return None

    def get(self, prefix: Prefix) -> FibEntry | None:
        return self._entries.get((prefix.base, prefix.length))

    def entries(self) -> list[FibEntry]:
        return sorted(self._entries.values(), key=lambda e: (e.prefix.length, e.prefix.base))

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class HrtEntry:
    hip: Address
    next_hop: str
    map: Address
    last_used: int


class ScalarOutOfInterval(ValueError):
    def __init__(self, ship_in: Address, own: LocalInterval) -> None:
        super().__init__(
            f"arriving scalar {ship_in} outside own interval [{own.start}, {own.end})"
        )


class Hrt:
    """Hop-index table.

    Invariants: one entry per hip; one entry per (next_hop, map) pair, so a
    long-lived flow refreshes its anchor instead of piling up duplicates.
    """

    def __init__(self) -> None:
        self._by_hip: dict[Address, HrtEntry] = {}
        self._by_flow: dict[tuple[str, Address], HrtEntry] = {}
        self.high_water = 0

    def find_or_alloc(
        self,
        ship_in: Address,
        prev: str,
        own: LocalInterval,
        rng: random.Random,
        now: int,
    ) -> tuple[Address, bool]:
        """Return (hip, fresh) for an arriving flow scalar.

        Reuses the existing entry for a repeated (prev, ship_in) flow.  A new
        flow takes ship_in itself as its index when free; on a collision it
        draws a uniformly random unoccupied index from the own interval.
        """
        if not own.contains(ship_in):
            raise ScalarOutOfInterval(ship_in, own)
        existing = self._by_flow.get((prev, ship_in))
        if existing is not None:
            existing.last_used = now
            return existing.hip, False
        if len(self._by_hip) >= own.length:
            raise AddressExhausted(f"hop-index table full ({own.length} entries)")
        if ship_in not in self._by_hip:
            hip = ship_in
        elif (own.length - len(self._by_hip)) * 2 >= own.length:
            while True:
                hip = own.start + rng.randrange(own.length)
                if hip not in self._by_hip:
                    break
        else:
            candidates = [a for a in range(own.start, own.end) if a not in self._by_hip]
            hip = rng.choice(candidates)
        entry = HrtEntry(hip=hip, next_hop=prev, map=ship_in, last_used=now)
        self._by_hip[hip] = entry
        self._by_flow[(prev, ship_in)] = entry
        self.high_water = max(self.high_water, len(self._by_hip))
        return hip, True

    def lookup(self, hip: Address, now: int) -> HrtEntry | None:
        entry = self._by_hip.get(hip)
        if entry is not None:
            entry.last_used = now
        return entry

    def peek(self, hip: Address) -> HrtEntry | None:
        """Lookup without refreshing last_used (observer use only)."""
        return self._by_hip.get(hip)

    def evict_idle(self, now: int, idle_limit: int) -> int:
        if idle_limit <= 0:
            raise ValueError("idle_limit must be positive")
        stale = [hip for hip, e in self._by_hip.items() if now - e.last_used > idle_limit]
        for hip in stale:
            entry = self._by_hip.pop(hip)
            del self._by_flow[(entry.next_hop, entry.map)]
        return len(stale)

    def entries(self) -> list[HrtEntry]:
        return sorted(self._by_hip.values(), key=lambda e: e.hip)

    def __len__(self) -> int:
        return len(self._by_hip)


class UpsertOutcome(enum.Enum):
    INSERTED = "inserted"
    REFRESHED = "refreshed"
    OVERWRITTEN = "overwritten"


@dataclass
class DrtEntry:
    origin: Address
    hip: Address
    last_used: int


class Drt:
    """Delivery table at an egress: origin ID seen by local hosts -> HRT anchor."""

    def __init__(self) -> None:
        self._by_origin: dict[Address, DrtEntry] = {}
        self.collisions = 0
        self.high_water = 0

    def upsert(self, origin: Address, hip: Address, now: int) -> UpsertOutcome:
        """Installs or refreshes the anchor; a differing hip overwrites (last
        writer wins) and bumps the collision counter."""
        entry = self._by_origin.get(origin)
        if entry is None:
            self._by_origin[origin] = DrtEntry(origin, hip, now)
            self.high_water = max(self.high_water, len(self._by_origin))
            return UpsertOutcome.INSERTED
        entry.last_used = now
        if entry.hip == hip:
            return UpsertOutcome.REFRESHED
        entry.hip = hip
        self.collisions += 1
        return UpsertOutcome.OVERWRITTEN

    def lookup(self, origin: Address, now: int) -> Address | None:
        entry = self._by_origin.get(origin)
        if entry is None:
            return None
        entry.last_used = now
        return entry.hip

    def peek(self, origin: Address) -> DrtEntry | None:
        return self._by_origin.get(origin)

    def evict_idle(self, now: int, idle_limit: int) -> int:
        if idle_limit <= 0:
            raise ValueError("idle_limit must be positive")
        stale = [o for o, e in self._by_origin.items() if now - e.last_used > idle_limit]
        for origin in stale:
            del self._by_origin[origin]
        return len(stale)

    def entries(self) -> list[DrtEntry]:
        return sorted(self._by_origin.values(), key=lambda e: e.origin)

    def __len__(self) -> int:
        return len(self._by_origin)


def evict_idle(table: Hrt | Drt, now: int, idle_limit: int) -> int:
    """Drop entries idle for more than idle_limit ticks; returns the count.

    An entry touched at tick `now` is never evicted at tick `now`.
    """
    return table.evict_idle(now, idle_limit)
