"""Address scalars, local intervals, and the per-hop swap bijection.

Addresses are plain 32-bit unsigned scalars.  Each router owns one contiguous
local interval of them; all intervals in a deployment share a single length.
Neighbors exchange their intervals, and a router rewrites datagram fields
between its own interval and a neighbor's with a secret modular shift.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

Address = int

ADDRESS_BITS = 32
ADDRESS_MAX = (1 << ADDRESS_BITS) - 1


class IntervalError(ValueError):
    """An address fell outside the interval an operation required."""


class AddressExhausted(RuntimeError):
    """No free scalar is left in a local interval."""


@dataclass(frozen=True)
class LocalInterval:
    """Half-open block of address scalars [start, start + length)."""

    start: Address
    length: int

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise ValueError(f"interval length must be positive, got {self.length}")
        if self.start < 0 or self.end - 1 > ADDRESS_MAX:
            raise ValueError(f"interval [{self.start}, {self.end}) leaves 32-bit range")

    @property
    def end(self) -> Address:
        return self.start + self.length

    def contains(self, a: Address) -> bool:
        return self.start <= a < self.end

    def overlaps(self, other: "LocalInterval") -> bool:
        return self.start < other.end and other.start < self.end


def interval_contains(interval: LocalInterval, a: Address) -> bool:
    """Membership test for a scalar in a half-open interval."""
    return interval.contains(a)


@dataclass(frozen=True)
class Prefix:
    """Global routing prefix: base address plus mask length 0..32."""

    base: Address
    length: int

    def __post_init__(self) -> None:
        if not 0 <= self.length <= 32:
            raise ValueError(f"prefix length must be 0..32, got {self.length}")
        if not 0 <= self.base <= ADDRESS_MAX:
            raise ValueError(f"prefix base {self.base} is not a 32-bit value")
        if self.base & ~self.mask:
            raise ValueError(f"prefix {self.base}/{self.length} has host bits set")

    @property
    def mask(self) -> int:
        if self.length == 0:
            return 0
        return (ADDRESS_MAX << (ADDRESS_BITS - self.length)) & ADDRESS_MAX

    @property
    def size(self) -> int:
        return 1 << (ADDRESS_BITS - self.length)

    def covers(self, a: Address) -> bool:
        return (a & self.mask) == self.base

    def overlaps_interval(self, interval: LocalInterval) -> bool:
        return self.base < interval.end and interval.start < self.base + self.size

    @classmethod
    def parse(cls, text: str) -> "Prefix":
        body, _, plen = text.partition("/")
        if not plen:
            raise ValueError(f"prefix {text!r} lacks a /length")
        return cls(parse_address(body), int(plen))

    def __str__(self) -> str:
        return f"{format_address(self.base, dotted=True)}/{self.length}"


class SecretOffset:
    """A router's private shift for the swap bijection.

    The scalar never appears in repr/str output so it cannot wander into
    logs, dumps, or serialized artifacts by accident.
    """

    __slots__ = ("_value",)

    def __init__(self, value: int) -> None:
        if value < 0:
            raise ValueError("secret offset must be non-negative")
        self._value = value

    @property
    def value(self) -> int:
        return self._value

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SecretOffset) and other._value == self._value

    def __hash__(self) -> int:
        return hash(("SecretOffset", self._value))

    def __repr__(self) -> str:  # deliberately opaque
        return "SecretOffset(<hidden>)"


@dataclass
class ListTable:
    """A router's own interval plus the interval each neighbor announced."""

    own: LocalInterval
    neighbors: dict[str, LocalInterval] = field(default_factory=dict)

    def neighbor(self, node: str) -> LocalInterval | None:
        return self.neighbors.get(node)


def map_out(eps: SecretOffset, own: LocalInterval, neigh: LocalInterval, x: Address) -> Address:
    """Rewrite scalar x from this router's interval into a neighbor's.

    y = neigh.start + ((eps + x - own.start) mod L), with L the shared
    interval length.  Bijective for any eps, so the neighbor-side scalar
    reveals nothing about x without eps.
    """
    if own.length != neigh.length:
        raise IntervalError(f"interval lengths differ: {own.length} != {neigh.length}")
    if not own.contains(x):
        raise IntervalError(f"scalar {x} outside own interval [{own.start}, {own.end})")
    return neigh.start + (eps.value + x - own.start) % own.length


def map_in(eps: SecretOffset, own: LocalInterval, neigh: LocalInterval, y: Address) -> Address:
    """Invert map_out: recover the own-interval scalar from a neighbor-side one."""
    if own.length != neigh.length:
        raise IntervalError(f"interval lengths differ: {own.length} != {neigh.length}")
    if not neigh.contains(y):
        raise IntervalError(f"scalar {y} outside neighbor interval [{neigh.start}, {neigh.end})")
    return own.start + (y - neigh.start - eps.value) % own.length


def assign_host_address(table: ListTable, occupied: set[Address], rng: random.Random) -> Address:
    """Pick a uniformly random free scalar from the router's own interval.

    Deterministic for a given rng state.  Raises AddressExhausted when the
    interval has no free scalar left.
    """
    own = table.own
    taken = sum(1 for a in occupied if own.contains(a))
    free = own.length - taken
    if free == 0:
        raise AddressExhausted(f"no free address in [{own.start}, {own.end})")
    if free * 2 >= own.length:
        while True:
            a = own.start + rng.randrange(own.length)
            if a not in occupied:
                return a
    candidates = [a for a in range(own.start, own.end) if a not in occupied]
    return rng.choice(candidates)


@dataclass(frozen=True)
class PlanViolation:
    clause: str
    message: str

    def __str__(self) -> str:
        return f"[{self.clause}] {self.message}"


def validate_interval_plan(
    tables: Mapping[str, ListTable], prefixes: Iterable[Prefix]
) -> list[PlanViolation]:
    """Check a deployment's interval plan; empty list means valid.

    Clauses, in reporting order:
      a. every interval (own and announced) has the one shared length;
      b. within each router's table, own and neighbor intervals are
         pairwise disjoint;
      c. no interval overlaps any global prefix;
      d. the interval a router stores for a neighbor equals that
         neighbor's own interval.
    """
    violations: list[PlanViolation] = []
    if not tables:
        return violations
    ref_len = next(iter(tables.values())).own.length

    for rid in tables:
        table = tables[rid]
        for label, iv in [("own", table.own)] + sorted(table.neighbors.items()):
            if iv.length != ref_len:
                violations.append(
                    PlanViolation(
                        "a",
                        f"router {rid}: interval for {label} has length "
                        f"{iv.length}, expected {ref_len}",
                    )
                )

    for rid in tables:
        table = tables[rid]
        entries = [("own", table.own)] + sorted(table.neighbors.items())
        for i, (name_a, iv_a) in enumerate(entries):
            for name_b, iv_b in entries[i + 1 :]:
                if iv_a.overlaps(iv_b):
                    violations.append(
                        PlanViolation(
                            "b",
                            f"router {rid}: intervals for {name_a} and {name_b} "
                            f"overlap ([{iv_a.start}, {iv_a.end}) vs "
                            f"[{iv_b.start}, {iv_b.end}))",
                        )
                    )

    prefix_list = list(prefixes)
    for rid in sorted(tables):
        own = tables[rid].own
        for pfx in prefix_list:
            if pfx.overlaps_interval(own):
                violations.append(
                    PlanViolation(
                        "c",
                        f"router {rid}: interval [{own.start}, {own.end}) "
                        f"overlaps prefix {pfx}",
                    )
                )

    for rid in sorted(tables):
        for nid, iv in sorted(tables[rid].neighbors.items()):
            if nid in tables and tables[nid].own != iv:
                violations.append(
                    PlanViolation(
                        "d",
                        f"router {rid} stores [{iv.start}, {iv.end}) for "
                        f"neighbor {nid}, but {nid} owns "
                        f"[{tables[nid].own.start}, {tables[nid].own.end})",
                    )
                )

    return violations


def parse_address(text: str) -> Address:
    """Accept a raw decimal scalar or a dotted quad."""
    if "." in text:
        parts = text.split(".")
        if len(parts) != 4:
            raise ValueError(f"malformed dotted address {text!r}")
        value = 0
        for part in parts:
            octet = int(part)
            if not 0 <= octet <= 255:
                raise ValueError(f"octet {octet} out of range in {text!r}")
            value = (value << 8) | octet
        return value
    value = int(text)
    if not 0 <= value <= ADDRESS_MAX:
        raise ValueError(f"address {value} is not a 32-bit value")
    return value


def format_address(a: Address, dotted: bool = False) -> str:
    if not dotted:
        return str(a)
    return ".".join(str((a >> shift) & 0xFF) for shift in (24, 16, 8, 0))
