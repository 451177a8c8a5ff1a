"""Per-router forwarding pipeline.

Pure state-machine transitions: every operation takes a router's state plus
one arriving datagram and returns a verdict and zero or more emissions.  The
event loop in simnet applies the emissions; nothing here touches the clock
or the wire directly.

Two modes exist.  The swap mode enforces three rules on every inter-router
hop:

  * provenance: the arriving source and origin scalars must lie inside the
    receiving router's own interval, because the upstream neighbor was the
    one who had to write them there;
  * ttl acceptance: a datagram is accepted only if its ttl strictly exceeds
    the router's stored hop-count distance to the destination, and the ttl
    is then rewritten *down* to that distance, which makes forwarding loops
    impossible whatever the FIB contents;
  * swap: source and origin are rewritten into the next hop's interval with
    the router's secret shift, so no global flow identifier survives a hop.

Baseline mode is the classic decrement-and-forward pipeline with none of
the above, kept for contrast experiments.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace

from .addressing import (
    Address,
    AddressExhausted,
    IntervalError,
    ListTable,
    SecretOffset,
    map_in,
    map_out,
)
from .tables import LOCAL, Drt, Fib, Hrt


class Mode(enum.Enum):
    TFR = "tfr"
    BASELINE = "baseline"


class Classification(enum.Enum):
    FORWARD_GLOBAL = "forward_global"
    REVERSE_LOCAL = "reverse_local"
    DELIVER_LOCAL_HOST = "deliver_local_host"
    INVALID = "invalid"


class Action(enum.Enum):
    FORWARDED = "forwarded"
    DELIVERED = "delivered"
    DROPPED = "dropped"


class Reason(enum.Enum):
    OK = "ok"
    TFR_REJECT = "tfr_reject"
    NO_ROUTE = "no_route"
    NO_HRT_STATE = "no_hrt_state"
    NO_DRT_STATE = "no_drt_state"
    BAD_PROVENANCE = "bad_provenance"
    TTL_EXPIRED = "ttl_expired"
    TABLE_EXHAUSTED = "table_exhausted"


@dataclass
class Datagram:
    src: Address
    dst: Address
    ttl: int
    origin: Address
    payload: str = ""
    trace_id: int = -1


@dataclass
class VerdictRecord:
    action: Action
    reason: Reason
    offending_neighbor: str | None = None

    def __post_init__(self) -> None:
        if self.reason is Reason.BAD_PROVENANCE and self.offending_neighbor is None:
            raise ValueError("bad_provenance verdicts must name the offending neighbor")


@dataclass
class StepResult:
    verdict: VerdictRecord
    emissions: list[tuple[str, Datagram]] = field(default_factory=list)


@dataclass
class RouterState:
    rid: str
    list_table: ListTable
    secret: SecretOffset
    fib: Fib
    hrt: Hrt
    drt: Drt
    hosts: dict[str, Address] = field(default_factory=dict)
    rng: random.Random = field(default_factory=random.Random)


def _drop(reason: Reason, offending: str | None = None) -> StepResult:
    return StepResult(VerdictRecord(Action.DROPPED, reason, offending))


def classify(router: RouterState, from_node: str, dgram: Datagram) -> Classification:
    """Decide which pipeline an arrival enters.

    An arrival from a neighbor is reverse-direction iff its destination sits
    in the interval that neighbor announced: a reverse destination is the
    scalar this router minted into that neighbor's space on the forward
    pass, coming back unchanged, so the arrival link, not the scalar alone,
    carries the meaning.  An arrival from an attached host is
    reverse-direction iff it targets the router's own interval (a reply to
    an anonymous origin).
    """
    if from_node in router.hosts:
        if router.list_table.own.contains(dgram.dst):
            return Classification.REVERSE_LOCAL
    else:
        iv = router.list_table.neighbor(from_node)
        if iv is not None and iv.contains(dgram.dst):
            return Classification.REVERSE_LOCAL
    hit = router.fib.lookup(dgram.dst)
    if hit is None:
        return Classification.INVALID
    if hit.next_hop == LOCAL:
        return Classification.DELIVER_LOCAL_HOST
    return Classification.FORWARD_GLOBAL


def tfr_accept(distance: int, ttl: int) -> int | None:
    """Accept iff ttl strictly exceeds the stored distance; new ttl is the
    distance itself.  Returns the rewritten ttl, or None on rejection."""
    if ttl > distance:
        return distance
    return None


def ingress_from_host(router: RouterState, host: str, dgram: Datagram, now: int) -> StepResult:
    """First-hop handling for a host-injected forward datagram.

    The host's claimed source must equal its assigned address.  The ttl is
    seeded with this router's distance to the destination, per-flow reverse
    state is anchored, and both source and origin leave rewritten into the
    next hop's interval.
    """
    assigned = router.hosts.get(host)
    if assigned is None or dgram.src != assigned:
        return _drop(Reason.BAD_PROVENANCE, offending=host)
    hit = router.fib.lookup(dgram.dst)
    if hit is None:
        return _drop(Reason.NO_ROUTE)
    if hit.next_hop == LOCAL:
        # Ingress and egress coincide: no swap, identity mappings throughout.
        return egress_deliver(router, host, dgram, now)
    own = router.list_table.own
    try:
        hip, _ = router.hrt.find_or_alloc(dgram.src, host, own, router.rng, now)
    except AddressExhausted:
        return _drop(Reason.TABLE_EXHAUSTED)
    neigh = router.list_table.neighbors[hit.next_hop]
    out = replace(
        dgram,
        src=map_out(router.secret, own, neigh, hip),
        origin=map_out(router.secret, own, neigh, dgram.src),
        ttl=hit.distance,
    )
    return StepResult(VerdictRecord(Action.FORWARDED, Reason.OK), [(hit.next_hop, out)])


def relay_forward(router: RouterState, from_node: str, dgram: Datagram, now: int) -> StepResult:
    """Forward-direction transit hop.

    Order matters: provenance, route, ttl acceptance, then state creation,
    so rejected datagrams leave no residue in the tables.
    """
    own = router.list_table.own
    if not (own.contains(dgram.src) and own.contains(dgram.origin)):
        return _drop(Reason.BAD_PROVENANCE, offending=from_node)
    hit = router.fib.lookup(dgram.dst)
    if hit is None:
        return _drop(Reason.NO_ROUTE)
    new_ttl = tfr_accept(hit.distance, dgram.ttl)
    if new_ttl is None:
        return _drop(Reason.TFR_REJECT)
    if hit.next_hop == LOCAL:
        return egress_deliver(router, from_node, dgram, now)
    try:
        hip, _ = router.hrt.find_or_alloc(dgram.src, from_node, own, router.rng, now)
    except AddressExhausted:
        return _drop(Reason.TABLE_EXHAUSTED)
    neigh = router.list_table.neighbors[hit.next_hop]
    out = replace(
        dgram,
        src=map_out(router.secret, own, neigh, hip),
        origin=map_out(router.secret, own, neigh, dgram.origin),
        ttl=new_ttl,
    )
    return StepResult(VerdictRecord(Action.FORWARDED, Reason.OK), [(hit.next_hop, out)])


def egress_deliver(router: RouterState, from_node: str, dgram: Datagram, now: int) -> StepResult:
    """Last-hop handling where the destination prefix is attached.

    The delivered datagram shows the origin ID as its source; the pairing of
    that origin ID with the arriving flow scalar is remembered in the DRT so
    a reply can find its way back, and the flow scalar itself is anchored in
    the HRT pointing at the hop it came from.
    """
    own = router.list_table.own
    if not (own.contains(dgram.src) and own.contains(dgram.origin)):
        return _drop(Reason.BAD_PROVENANCE, offending=from_node)
    target = None
    for hid, addr in router.hosts.items():
        if addr == dgram.dst:
            target = hid
            break
    if target is None:
        return _drop(Reason.NO_ROUTE)
    try:
        hip, _ = router.hrt.find_or_alloc(dgram.src, from_node, own, router.rng, now)
    except AddressExhausted:
        return _drop(Reason.TABLE_EXHAUSTED)
    router.drt.upsert(dgram.origin, hip, now)
    delivered = replace(dgram, src=dgram.origin, ttl=0)
    return StepResult(VerdictRecord(Action.DELIVERED, Reason.OK), [(target, delivered)])


def egress_reverse_initiate(
    router: RouterState, host: str, dgram: Datagram, reverse_ttl: int, now: int
) -> StepResult:
    """A local host answered an anonymous origin ID.

    The DRT resolves the origin ID to the HRT anchor for the flow that
    produced it; the reply leaves toward that flow's previous hop with the
    anchored scalar as destination.  Host-facing fields pass through
    unmapped: only inter-router hops swap.
    """
    assigned = router.hosts.get(host)
    if assigned is None or dgram.src != assigned:
        return _drop(Reason.BAD_PROVENANCE, offending=host)
    hip = router.drt.lookup(dgram.dst, now)
    if hip is None:
        return _drop(Reason.NO_DRT_STATE)
    entry = router.hrt.lookup(hip, now)
    if entry is None:
        return _drop(Reason.NO_HRT_STATE)
    out = Datagram(
        src=dgram.src,
        dst=entry.map,
        ttl=reverse_ttl,
        origin=dgram.dst,
        payload=dgram.payload,
        trace_id=dgram.trace_id,
    )
    if entry.next_hop in router.hosts:
        # Round trip that never left this router: deliver straight back.
        return StepResult(VerdictRecord(Action.DELIVERED, Reason.OK), [(entry.next_hop, out)])
    return StepResult(VerdictRecord(Action.FORWARDED, Reason.OK), [(entry.next_hop, out)])


def relay_reverse(router: RouterState, from_node: str, dgram: Datagram, now: int) -> StepResult:
    """Reverse-direction transit hop.

    The destination scalar is mapped back into this router's own interval,
    where it indexes the HRT anchor left by the forward direction.  The
    origin rides the same inverse mapping.  Reverse ttl is plain decrement.
    """
    arrival_iv = router.list_table.neighbor(from_node)
    if arrival_iv is None:
        return _drop(Reason.BAD_PROVENANCE, offending=from_node)
    try:
        idx = map_in(router.secret, router.list_table.own, arrival_iv, dgram.dst)
    except IntervalError:
        return _drop(Reason.BAD_PROVENANCE, offending=from_node)
    entry = router.hrt.lookup(idx, now)
    if entry is None:
        return _drop(Reason.NO_HRT_STATE)
    if dgram.ttl <= 1:
        return _drop(Reason.TTL_EXPIRED)
    new_ttl = dgram.ttl - 1
    try:
        origin_in = map_in(router.secret, router.list_table.own, arrival_iv, dgram.origin)
    except IntervalError:
        return _drop(Reason.BAD_PROVENANCE, offending=from_node)
    if entry.next_hop in router.hosts:
        delivered = replace(dgram, dst=origin_in, origin=origin_in, ttl=new_ttl)
        return StepResult(VerdictRecord(Action.DELIVERED, Reason.OK), [(entry.next_hop, delivered)])
    out = replace(dgram, dst=entry.map, origin=origin_in, ttl=new_ttl)
    return StepResult(VerdictRecord(Action.FORWARDED, Reason.OK), [(entry.next_hop, out)])


def baseline_forward(router: RouterState, from_node: str, dgram: Datagram) -> StepResult:
    """Classic pipeline: route on the FIB, decrement ttl, never rewrite
    addresses, never check provenance."""
    hit = router.fib.lookup(dgram.dst)
    if hit is None:
        return _drop(Reason.NO_ROUTE)
    if hit.next_hop == LOCAL:
        target = None
        for hid, addr in router.hosts.items():
            if addr == dgram.dst:
                target = hid
                break
        if target is None:
            return _drop(Reason.NO_ROUTE)
        return StepResult(VerdictRecord(Action.DELIVERED, Reason.OK), [(target, dgram)])
    if dgram.ttl <= 1:
        return _drop(Reason.TTL_EXPIRED)
    out = replace(dgram, ttl=dgram.ttl - 1)
    return StepResult(VerdictRecord(Action.FORWARDED, Reason.OK), [(hit.next_hop, out)])


def process(
    router: RouterState,
    from_node: str,
    dgram: Datagram,
    mode: Mode,
    reverse_ttl: int,
    now: int,
) -> StepResult:
    """Dispatch one arrival through the pipeline selected by mode and
    classification."""
    if mode is Mode.BASELINE:
        return baseline_forward(router, from_node, dgram)
    kind = classify(router, from_node, dgram)
    if from_node in router.hosts:
        if dgram.src != router.hosts[from_node]:
            return _drop(Reason.BAD_PROVENANCE, offending=from_node)
        if kind is Classification.REVERSE_LOCAL:
            return egress_reverse_initiate(router, from_node, dgram, reverse_ttl, now)
        if kind in (Classification.FORWARD_GLOBAL, Classification.DELIVER_LOCAL_HOST):
            return ingress_from_host(router, from_node, dgram, now)
        return _drop(Reason.NO_ROUTE)
    if kind is Classification.REVERSE_LOCAL:
        return relay_reverse(router, from_node, dgram, now)
    if kind in (Classification.FORWARD_GLOBAL, Classification.DELIVER_LOCAL_HOST):
        return relay_forward(router, from_node, dgram, now)
    return _drop(Reason.NO_ROUTE)
