"""Deterministic discrete-event simulation of one deployment.

Time is an integer tick; every link (router-router and host-router alike)
delays exactly one tick.  The event heap orders by (tick, sequence), where
sequence numbers are handed out in scheduling order, so a run is a pure
function of the scenario text and the seed.  Per-router randomness comes
from substreams seeded as "<seed>:<router id>", which keeps one router's
draws independent of how often any other router draws.

The world also keeps observer-side records that no router can see: per-flow
hop traces, per-link capture logs, and terminal verdicts.  Tests and the
metrics report are built from those.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from heapq import heappop, heappush

from .addressing import (
    IntervalError,
    Prefix,
    SecretOffset,
    assign_host_address,
    map_in,
    parse_address,
)
from .control import ConfigError, build_fibs, inject_fib_cycle, set_stale_distances
from .datapath import (
    Action,
    Datagram,
    Mode,
    Reason,
    RouterState,
    VerdictRecord,
    process,
)
from .scenario import Limits, PerturbSpec, Scenario
from .tables import Drt, Hrt


class InvariantError(RuntimeError):
    """The simulation reached a state the design rules out."""


@dataclass
class HostState:
    hid: str
    router: str
    addr: int
    role: str
    autoreply: int | None = None


@dataclass
class AdversaryState:
    aid: str
    kind: str
    router: str
    tick: int = 0
    count: int = 1
    dst: int | None = None
    addr: int | None = None  # spoof_host: address registered at the router
    forged_src: int | None = None  # spoof_host: claimed source
    src: int | None = None  # spoof_router
    oid: int | None = None  # spoof_router
    ttl: int = 60  # spoof_router
    tap: tuple[str, str] | None = None  # replay_router: captured directed link


@dataclass
class TraceEntry:
    """One datagram crossing one link, as seen by the omniscient observer."""

    tick: int
    from_node: str
    to_node: str
    src: int
    dst: int
    ttl: int
    origin: int
    trace_id: int


@dataclass
class TerminalVerdict:
    record: VerdictRecord
    node: str
    tick: int


@dataclass
class HopTrace:
    trace_id: int
    entries: list[TraceEntry] = field(default_factory=list)
    verdict: TerminalVerdict | None = None


@dataclass
class TracebackResult:
    origin: int
    egress: str
    path: list[str]  # routers from the egress back toward the ingress
    host: str | None = None
    untrusted: str | None = None
    failure: str | None = None

    @property
    def resolved(self) -> bool:
        return self.failure is None


class World:
    """All simulated state plus the observer records for one run."""

    def __init__(self, mode: Mode, seed: int, limits: Limits) -> None:
        self.mode = mode
        self.seed = seed
        self.limits = limits
        self.routers: dict[str, RouterState] = {}
        self.hosts: dict[str, HostState] = {}
        self.adversaries: dict[str, AdversaryState] = {}
        self.links: set[frozenset[str]] = set()
        self.prefixes: list[Prefix] = []
        self.now = 0
        self.truncated = False
        self.injected = 0
        self.traces: dict[int, HopTrace] = {}
        self.entry_log: list[TraceEntry] = []
        self.captures: dict[tuple[str, str], list[TraceEntry]] = {}
        self._heap: list[tuple[int, int, tuple]] = []
        self._seq = 0
        self._next_trace_id = 0

    def schedule(self, tick: int, event: tuple) -> None:
        heappush(self._heap, (tick, self._seq, event))
        self._seq += 1


def _resolve_dst(world: World, raw: str) -> int:
    if raw.startswith("@"):
        return world.hosts[raw[1:]].addr
    return parse_address(raw)


def build_world(sc: Scenario) -> World:
    """Instantiate routers, tables, hosts, adversaries, and scripted events."""
    world = World(mode=sc.mode, seed=sc.seed, limits=replace(sc.limits))
    tables = sc.list_tables()
    fibs = build_fibs(sc.topology())
    world.prefixes = [p.prefix for p in sc.prefixes]
    world.links = {frozenset(link) for link in sc.links}

    for rs in sc.routers:
        world.routers[rs.rid] = RouterState(
            rid=rs.rid,
            list_table=tables[rs.rid],
            secret=SecretOffset(rs.eps),
            fib=fibs[rs.rid],
            hrt=Hrt(),
            drt=Drt(),
            hosts={},
            rng=random.Random(f"{sc.seed}:{rs.rid}"),
        )

    # Explicitly addressed endpoints claim their scalars before any draw,
    # so a random assignment can never collide with a declared one.
    occupied: dict[str, set[int]] = {rid: set() for rid in world.routers}
    for hs in sc.hosts:
        if hs.addr is not None:
            occupied[hs.router].add(hs.addr)
    for spec in sc.adversaries:
        if spec.kind == "spoof_host":
            occupied[spec.router].add(parse_address(spec.params["addr"]))

    for hs in sc.hosts:
        if hs.addr is not None:
            addr = hs.addr
        else:
            addr = assign_host_address(
                tables[hs.router], occupied[hs.router], world.routers[hs.router].rng
            )
            occupied[hs.router].add(addr)
        world.hosts[hs.hid] = HostState(hs.hid, hs.router, addr, hs.role, hs.autoreply)
        world.routers[hs.router].hosts[hs.hid] = addr
        world.links.add(frozenset((hs.hid, hs.router)))

    for spec in sc.adversaries:
        p = spec.params
        adv = AdversaryState(aid=spec.aid, kind=spec.kind, router=spec.router, tick=int(p["t"]))
        if spec.kind == "spoof_host":
            adv.addr = parse_address(p["addr"])
            adv.forged_src = parse_address(p["forged_src"])
            adv.dst = _resolve_dst(world, p["dst"])
            adv.count = int(p.get("n", "1"))
            # Registered like a legitimate host: the attack is in the forged
            # source, not in the attachment.
            world.routers[spec.router].hosts[spec.aid] = adv.addr
        elif spec.kind == "spoof_router":
            adv.src = parse_address(p["src"])
            adv.oid = parse_address(p["oid"])
            adv.dst = _resolve_dst(world, p["dst"])
            adv.count = int(p.get("n", "1"))
            adv.ttl = int(p.get("ttl", "60"))
        else:
            frm, _, to = p["tap"].partition("->")
            adv.tap = (frm, to)
        world.adversaries[spec.aid] = adv
        world.links.add(frozenset((spec.aid, spec.router)))

    for pspec in sc.perturbations:
        world.schedule(pspec.tick, ("perturb", pspec))
    for send in sc.traffic:
        world.schedule(
            send.tick, ("send", send.host, _resolve_dst(world, send.dst), send.payload)
        )
    for adv in world.adversaries.values():
        world.schedule(adv.tick, ("adv", adv.aid))
    return world


def _new_trace(world: World) -> int:
    tid = world._next_trace_id
    world._next_trace_id += 1
    world.traces[tid] = HopTrace(tid)
    world.injected += 1
    return tid


def _emit(world: World, frm: str, to: str, dgram: Datagram) -> None:
    if not 0 <= dgram.ttl <= 255:
        raise InvariantError(f"ttl {dgram.ttl} left the u8 range on {frm}->{to}")
    entry = TraceEntry(
        tick=world.now,
        from_node=frm,
        to_node=to,
        src=dgram.src,
        dst=dgram.dst,
        ttl=dgram.ttl,
        origin=dgram.origin,
        trace_id=dgram.trace_id,
    )
    world.traces[dgram.trace_id].entries.append(entry)
    world.entry_log.append(entry)
    world.captures.setdefault((frm, to), []).append(entry)
    world.schedule(world.now + 1, ("arrive", frm, to, dgram))


def _record_terminal(world: World, tid: int, record: VerdictRecord, node: str, tick: int) -> None:
    trace = world.traces[tid]
    if trace.verdict is not None:
        raise InvariantError(f"trace {tid} got a second terminal verdict at {node}")
    trace.verdict = TerminalVerdict(record, node, tick)


def host_send(world: World, hid: str, dst: int, payload: str = "") -> int:
    """Inject one datagram from an attached host; returns its trace id."""
    host = world.hosts.get(hid)
    if host is None:
        raise ConfigError(f"unknown host {hid!r}")
    tid = _new_trace(world)
    ttl = 255 if world.mode is Mode.TFR else world.limits.baseline_ttl
    dgram = Datagram(
        src=host.addr, dst=dst, ttl=ttl, origin=host.addr, payload=payload, trace_id=tid
    )
    _emit(world, host.hid, host.router, dgram)
    return tid


def _apply_perturbation(world: World, spec: PerturbSpec) -> None:
    fibs = {rid: st.fib for rid, st in world.routers.items()}
    if spec.kind == "cycle":
        inject_fib_cycle(fibs, spec.routers, spec.prefix, world.links)
    else:
        assert spec.router is not None and spec.dist is not None
        set_stale_distances(fibs, [(spec.router, spec.prefix, spec.dist)])


def _run_adversary(world: World, adv: AdversaryState) -> None:
    if adv.kind == "spoof_host":
        ttl = 255 if world.mode is Mode.TFR else world.limits.baseline_ttl
        for k in range(adv.count):
            tid = _new_trace(world)
            dgram = Datagram(
                src=adv.forged_src,
                dst=adv.dst,
                ttl=ttl,
                origin=adv.forged_src,
                payload=f"forged:{k}",
                trace_id=tid,
            )
            _emit(world, adv.aid, adv.router, dgram)
    elif adv.kind == "spoof_router":
        for k in range(adv.count):
            tid = _new_trace(world)
            dgram = Datagram(
                src=adv.src,
                dst=adv.dst,
                ttl=adv.ttl,
                origin=adv.oid,
                payload=f"forged:{k}",
                trace_id=tid,
            )
            _emit(world, adv.aid, adv.router, dgram)
    else:
        # Replay everything captured on the tapped link so far, verbatim.
        for seen in list(world.captures.get(adv.tap, ())):
            tid = _new_trace(world)
            dgram = Datagram(
                src=seen.src,
                dst=seen.dst,
                ttl=seen.ttl,
                origin=seen.origin,
                payload="replay",
                trace_id=tid,
            )
            _emit(world, adv.aid, adv.router, dgram)


def _arrive(world: World, frm: str, to: str, dgram: Datagram) -> None:
    if to in world.routers:
        router = world.routers[to]
        result = process(router, frm, dgram, world.mode, world.limits.reverse_ttl, world.now)
        if result.verdict.action is Action.DROPPED:
            _record_terminal(world, dgram.trace_id, result.verdict, to, world.now)
        else:
            for nxt, out in result.emissions:
                _emit(world, to, nxt, out)
    elif to in world.hosts:
        host = world.hosts[to]
        _record_terminal(
            world, dgram.trace_id, VerdictRecord(Action.DELIVERED, Reason.OK), to, world.now
        )
        if host.autoreply is not None:
            world.schedule(
                world.now + host.autoreply,
                ("send", host.hid, dgram.src, "re:" + dgram.payload),
            )
    else:
        # Datagram steered into an adversary node: it goes nowhere.
        _record_terminal(
            world,
            dgram.trace_id,
            VerdictRecord(Action.DROPPED, Reason.NO_ROUTE),
            to,
            world.now,
        )


def _sweep(world: World) -> None:
    for state in world.routers.values():
        state.hrt.evict_idle(world.now, world.limits.idle_limit)
        state.drt.evict_idle(world.now, world.limits.idle_limit)


def run(world: World, until: int | None = None) -> World:
    """Drain the event heap up to and including tick `until`."""
    if until is None:
        until = world.limits.until
    heap = world._heap
    while heap and heap[0][0] <= until:
        tick, _seq, event = heappop(heap)
        if tick > world.now:
            world.now = tick
            _sweep(world)
        kind = event[0]
        if kind == "arrive":
            _, frm, to, dgram = event
            _arrive(world, frm, to, dgram)
        elif kind == "send":
            _, hid, dst, payload = event
            host_send(world, hid, dst, payload)
        elif kind == "perturb":
            _apply_perturbation(world, event[1])
        else:
            _run_adversary(world, world.adversaries[event[1]])
    world.truncated = bool(heap)
    return world


def observe_link(world: World, frm: str, to: str) -> list[TraceEntry]:
    """Every datagram that crossed the directed link, in wire order."""
    return list(world.captures.get((frm, to), ()))


def traceback(world: World, egress: str, origin: int) -> TracebackResult:
    """Walk per-hop state backward from an egress-side origin ID.

    Each upstream router inverts its own swap to recover the index it was
    holding before the hop; the walk ends at an attached host (resolved), a
    non-compliant node (untrusted), or a missing table entry (failed).  Uses
    peek-only reads so the walk never refreshes idle timers.
    """
    if egress not in world.routers:
        raise ValueError(f"unknown router {egress!r}")
    anchor = world.routers[egress].drt.peek(origin)
    if anchor is None:
        return TracebackResult(origin, egress, [egress], failure="no_drt_state")
    hip = anchor.hip
    path = [egress]
    cur = egress
    for _ in range(len(world.routers) + 1):
        entry = world.routers[cur].hrt.peek(hip)
        if entry is None:
            return TracebackResult(origin, egress, path, failure=f"broken_chain_at_{cur}")
        prev = entry.next_hop
        if prev in world.adversaries:
            return TracebackResult(origin, egress, path, untrusted=prev)
        if prev in world.hosts:
            return TracebackResult(origin, egress, path, host=prev)
        if prev not in world.routers:
            return TracebackResult(origin, egress, path, failure=f"unknown_hop_{prev}")
        upstream = world.routers[prev]
        announced = upstream.list_table.neighbor(cur)
        if announced is None:
            return TracebackResult(origin, egress, path, failure=f"no_link_{prev}_{cur}")
        try:
            hip = map_in(upstream.secret, upstream.list_table.own, announced, entry.map)
        except IntervalError:
            return TracebackResult(origin, egress, path, failure=f"unmappable_at_{prev}")
        path.append(prev)
        cur = prev
    return TracebackResult(origin, egress, path, failure="walk_budget_exceeded")


def trace_loop_hops(trace: HopTrace) -> int:
    """Hops that re-entered a node the trace had already visited."""
    if not trace.entries:
        return 0
    seen = {trace.entries[0].from_node}
    hops = 0
    for entry in trace.entries:
        if entry.to_node in seen:
            hops += 1
        else:
            seen.add(entry.to_node)
    return hops


def metrics(world: World) -> dict[str, int]:
    delivered = 0
    dropped = 0
    reasons = {r: 0 for r in Reason}
    for tid in sorted(world.traces):
        tv = world.traces[tid].verdict
        if tv is None:
            continue
        if tv.record.action is Action.DELIVERED:
            delivered += 1
        else:
            dropped += 1
        reasons[tv.record.reason] += 1

    out: dict[str, int] = {
        "injected": world.injected,
        "delivered": delivered,
        "dropped": dropped,
        "forwarded": sum(
            1
            for e in world.entry_log
            if e.from_node in world.routers and e.to_node in world.routers
        ),
        "loop_hops": sum(trace_loop_hops(t) for t in world.traces.values()),
        "drt_collisions": sum(st.drt.collisions for st in world.routers.values()),
    }
    for reason in Reason:
        out[f"reason.{reason.value}"] = reasons[reason]
    for rid in sorted(world.routers):
        out[f"hrt_high_water.{rid}"] = world.routers[rid].hrt.high_water
        out[f"drt_high_water.{rid}"] = world.routers[rid].drt.high_water
    return out


def check_invariants(world: World) -> list[str]:
    """Observer-side audit of a finished run; empty list means clean."""
    problems: list[str] = []
    if len(world.traces) != world.injected:
        problems.append(f"{world.injected} injections but {len(world.traces)} traces")
    verdicts = 0
    for tid in sorted(world.traces):
        trace = world.traces[tid]
        if not trace.entries:
            problems.append(f"trace {tid} never crossed a link")
            continue
        for prev, cur in zip(trace.entries, trace.entries[1:]):
            if prev.to_node != cur.from_node:
                problems.append(
                    f"trace {tid} teleports: ...->{prev.to_node} then {cur.from_node}->..."
                )
            if cur.tick < prev.tick:
                problems.append(f"trace {tid} goes back in time at t={cur.tick}")
        for entry in trace.entries:
            if not 0 <= entry.ttl <= 255:
                problems.append(f"trace {tid} carries ttl {entry.ttl}")
        if trace.verdict is None:
            if not world.truncated:
                problems.append(f"trace {tid} has no terminal verdict")
        else:
            verdicts += 1
    if not world.truncated and verdicts != world.injected:
        problems.append(f"{world.injected} injected, {verdicts} resolved")
    return problems


def format_trace_entry(entry: TraceEntry) -> str:
    return (
        f"t={entry.tick} link={entry.from_node}->{entry.to_node} "
        f"src={entry.src} dst={entry.dst} ttl={entry.ttl} "
        f"oid={entry.origin} id={entry.trace_id}"
    )


def format_verdict(tid: int, tv: TerminalVerdict) -> str:
    offending = tv.record.offending_neighbor or "-"
    return (
        f"id={tid} action={tv.record.action.value} reason={tv.record.reason.value} "
        f"at={tv.node} t={tv.tick} offending={offending}"
    )


def serialize_trace(world: World) -> str:
    return "".join(format_trace_entry(e) + "\n" for e in world.entry_log)


def serialize_verdicts(world: World) -> str:
    lines = []
    for tid in sorted(world.traces):
        tv = world.traces[tid].verdict
        if tv is not None:
            lines.append(format_verdict(tid, tv))
    return "".join(line + "\n" for line in lines)


def serialize_metrics(values: dict[str, int]) -> str:
    return "".join(f"{key}={values[key]}\n" for key in sorted(values))
