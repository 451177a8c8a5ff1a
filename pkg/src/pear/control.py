"""Control plane: topology, shortest-path FIB construction, and adversarial
FIB perturbations used to pressure-test the forwarding rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .addressing import Prefix
from .tables import LOCAL, Fib


class ConfigError(ValueError):
    """A topology or perturbation request referenced something impossible."""


@dataclass
class Topology:
    """Static deployment shape: compliant routers, links, prefix attachments."""

    routers: list[str]
    links: list[tuple[str, str]]
    prefixes: dict[Prefix, str] = field(default_factory=dict)
    hosts: dict[str, str] = field(default_factory=dict)  # host id -> router id

    def adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {r: [] for r in self.routers}
        for a, b in self.links:
            adj[a].append(b)
            adj[b].append(a)
        for neighbors in adj.values():
            neighbors.sort()
        return adj

    def link_set(self) -> set[frozenset[str]]:
        return {frozenset(link) for link in self.links}


def validate_topology(topo: Topology) -> list[str]:
    """Static checks; returns a list of problems (empty when sound)."""
    problems: list[str] = []
    seen = set()
    for r in topo.routers:
        if r in seen:
            problems.append(f"duplicate router id {r}")
        seen.add(r)
    if LOCAL in seen:
        problems.append(f"router id {LOCAL!r} is reserved")
    for a, b in topo.links:
        if a == b:
            problems.append(f"self link at {a}")
        for end in (a, b):
            if end not in seen:
                problems.append(f"link references unknown router {end}")
    for pfx, r in topo.prefixes.items():
        if r not in seen:
            problems.append(f"prefix {pfx} attached to unknown router {r}")
    for h, r in topo.hosts.items():
        if r not in seen:
            problems.append(f"host {h} attached to unknown router {r}")
        if h in seen:
            problems.append(f"host id {h} collides with a router id")
    if topo.routers and not problems:
        # Connectivity: BFS from the first router.
        adj = topo.adjacency()
        reached = {topo.routers[0]}
        frontier = [topo.routers[0]]
        while frontier:
            nxt = []
            for node in frontier:
                for nb in adj[node]:
                    if nb not in reached:
                        reached.add(nb)
                        nxt.append(nb)
            frontier = nxt
        for r in topo.routers:
            if r not in reached:
                problems.append(f"router {r} unreachable from {topo.routers[0]}")
    return problems


def build_fibs(topo: Topology) -> dict[str, Fib]:
    """Min-hop FIBs via breadth-first search from each prefix's attachment.

    Equal-cost next hops tie-break on the lowest router id, so construction
    is deterministic.  Routers with no path to a prefix get no entry for it.
    """
    adj = topo.adjacency()
    fibs = {r: Fib() for r in topo.routers}
    for pfx in topo.prefixes:
        root = topo.prefixes[pfx]
        dist = {root: 0}
        frontier = [root]
        while frontier:
            nxt = []
            for node in frontier:
                for nb in adj[node]:
                    if nb not in dist:
                        dist[nb] = dist[node] + 1
                        nxt.append(nb)
            frontier = nxt
        for r, d in dist.items():
            if r == root:
                fibs[r].install(pfx, LOCAL, 0)
                continue
            next_hop = min(nb for nb in adj[r] if dist.get(nb, -1) == d - 1)
            fibs[r].install(pfx, next_hop, d)
    return fibs


def inject_fib_cycle(
    fibs: Mapping[str, Fib],
    cycle: Sequence[str],
    prefix: Prefix,
    links: set[frozenset[str]],
) -> None:
    """Point each cycle member's next hop for `prefix` at its successor.

    Distances are left untouched: the induced inconsistency between stored
    distance and actual path is exactly what the forwarding rule must absorb.
    """
    if len(cycle) < 2:
        raise ConfigError("cycle needs at least two routers")
    if len(set(cycle)) != len(cycle):
        raise ConfigError(f"cycle {list(cycle)} repeats a router")
    for i, r in enumerate(cycle):
        succ = cycle[(i + 1) % len(cycle)]
        if frozenset((r, succ)) not in links:
            raise ConfigError(f"cycle members {r} and {succ} are not adjacent")
        if r not in fibs:
            raise ConfigError(f"cycle references unknown router {r}")
        entry = fibs[r].get(prefix)
        if entry is None:
            raise ConfigError(f"router {r} has no FIB entry for {prefix}")
        entry.next_hop = succ


def set_stale_distances(
    fibs: Mapping[str, Fib], overrides: Iterable[tuple[str, Prefix, int]]
) -> None:
    """Overwrite stored hop-count distances without touching next hops."""
    for rid, prefix, distance in overrides:
        if rid not in fibs:
            raise ConfigError(f"stale-distance override for unknown router {rid}")
        entry = fibs[rid].get(prefix)
        if entry is None:
            raise ConfigError(f"router {rid} has no FIB entry for {prefix}")
        if distance < 0:
            raise ConfigError(f"negative distance {distance} for {rid}/{prefix}")
        entry.distance = distance
