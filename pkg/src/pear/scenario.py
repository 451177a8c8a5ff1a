"""Scenario files: a line-oriented description of one simulated deployment.

Grammar (one directive per line, `#` starts a comment):

    mode tfr|baseline
    seed <uint>
    region <start> <length>
    li_len <length>
    limits [until=N] [idle_limit=N] [reverse_ttl=N] [baseline_ttl=N]
    router <id> li=<start> eps=<offset>
    link <a> <b>
    prefix <base>/<len> at=<router>
    host <id> at=<router> role=client|server [addr=A] [prefix=P] [autoreply=N]
    send t=<tick> from=<host> dst=<addr|@host> [payload=<text>]
    perturb cycle t=<tick> prefix=<P> routers=<r1,r2,...>
    perturb stale t=<tick> router=<r> prefix=<P> dist=<n>
    adversary <id> kind=spoof_host at=<router> addr=A forged_src=A t=N dst=<addr|@host> [n=N]
    adversary <id> kind=spoof_router at=<router> src=A oid=A t=N dst=<addr|@host> [n=N] [ttl=N]
    adversary <id> kind=replay_router at=<router> tap=<a>-><b> t=N
    allow_invalid_plan true|false

Addresses are raw decimals or dotted quads.  The exact on-disk formats for
scenarios and run outputs are specified in docs/formats.md.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .addressing import (
    ListTable,
    LocalInterval,
    Prefix,
    parse_address,
    validate_interval_plan,
)
from .control import Topology, validate_topology
from .datapath import Mode

ADVERSARY_KINDS = ("spoof_host", "spoof_router", "replay_router")


class ScenarioError(ValueError):
    """Scenario text failed to parse or validate; .errors lists every problem."""

    def __init__(self, errors: list[str]) -> None:
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class RouterSpec:
    rid: str
    li_start: int
    eps: int
    line: int = field(default=0, compare=False)


@dataclass
class PrefixSpec:
    prefix: Prefix
    router: str
    line: int = field(default=0, compare=False)


@dataclass
class HostSpec:
    hid: str
    router: str
    role: str
    addr: int | None = None
    prefix: Prefix | None = None
    autoreply: int | None = None
    line: int = field(default=0, compare=False)


@dataclass
class SendSpec:
    tick: int
    host: str
    dst: str  # raw: decimal, dotted, or @host reference
    payload: str = ""
    line: int = field(default=0, compare=False)


@dataclass
class PerturbSpec:
    kind: str  # "cycle" | "stale"
    tick: int
    prefix: Prefix
    routers: tuple[str, ...] = ()
    router: str | None = None
    dist: int | None = None
    line: int = field(default=0, compare=False)


@dataclass
class AdversarySpec:
    aid: str
    kind: str
    router: str
    params: dict[str, str] = field(default_factory=dict)
    line: int = field(default=0, compare=False)


@dataclass
class Limits:
    until: int = 200
    idle_limit: int = 10_000
    reverse_ttl: int = 64
    baseline_ttl: int = 64


@dataclass
class Scenario:
    mode: Mode = Mode.TFR
    seed: int = 0
    region: LocalInterval | None = None
    li_len: int = 0
    routers: list[RouterSpec] = field(default_factory=list)
    links: list[tuple[str, str]] = field(default_factory=list)
    prefixes: list[PrefixSpec] = field(default_factory=list)
    hosts: list[HostSpec] = field(default_factory=list)
    traffic: list[SendSpec] = field(default_factory=list)
    perturbations: list[PerturbSpec] = field(default_factory=list)
    adversaries: list[AdversarySpec] = field(default_factory=list)
    limits: Limits = field(default_factory=Limits)
    allow_invalid_plan: bool = False
    plan_warnings: list[str] = field(default_factory=list)
    path: str | None = None

    def router_ids(self) -> set[str]:
        return {r.rid for r in self.routers}

    def router(self, rid: str) -> RouterSpec:
        for r in self.routers:
            if r.rid == rid:
                return r
        raise KeyError(rid)

    def list_tables(self) -> dict[str, ListTable]:
        """Derive every router's interval table from the link graph."""
        own = {r.rid: LocalInterval(r.li_start, self.li_len) for r in self.routers}
        tables = {rid: ListTable(own=iv) for rid, iv in own.items()}
        for a, b in self.links:
            tables[a].neighbors[b] = own[b]
            tables[b].neighbors[a] = own[a]
        return tables

    def topology(self) -> Topology:
        return Topology(
            routers=[r.rid for r in self.routers],
            links=list(self.links),
            prefixes={p.prefix: p.router for p in self.prefixes},
            hosts={h.hid: h.router for h in self.hosts},
        )


def _split_kv(tokens: list[str], line_no: int, errors: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            errors.append(f"line {line_no}: expected key=value, got {tok!r}")
            continue
        if key in out:
            errors.append(f"line {line_no}: duplicate key {key!r}")
        out[key] = value
    return out


def _want(kv: dict[str, str], keys: set[str], line_no: int, errors: list[str]) -> None:
    for key in sorted(kv):
        if key not in keys:
            errors.append(f"line {line_no}: unknown key {key!r}")


def _int(kv: dict[str, str], key: str, line_no: int, errors: list[str], default: int | None = None) -> int | None:
    if key not in kv:
        if default is None:
            errors.append(f"line {line_no}: missing required key {key!r}")
        return default
    try:
        return int(kv[key])
    except ValueError:
        errors.append(f"line {line_no}: {key}={kv[key]!r} is not an integer")
        return default


def parse_scenario(text: str, path: str | None = None) -> tuple[Scenario, list[str]]:
    """Parse scenario text; returns the scenario plus accumulated errors."""
    sc = Scenario(path=path)
    errors: list[str] = []
    seen_region = False
    seen_li_len = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        directive, rest = tokens[0], tokens[1:]

        if directive == "mode":
            if len(rest) != 1 or rest[0] not in ("tfr", "baseline"):
                errors.append(f"line {line_no}: mode must be 'tfr' or 'baseline'")
            else:
                sc.mode = Mode(rest[0])
        elif directive == "seed":
            try:
                sc.seed = int(rest[0])
            except (IndexError, ValueError):
                errors.append(f"line {line_no}: seed needs one integer")
        elif directive == "region":
            try:
                start, length = int(rest[0]), int(rest[1])
                sc.region = LocalInterval(start, length)
                seen_region = True
            except (IndexError, ValueError) as exc:
                errors.append(f"line {line_no}: bad region: {exc}")
        elif directive == "li_len":
            try:
                sc.li_len = int(rest[0])
                seen_li_len = True
                if sc.li_len <= 0:
                    errors.append(f"line {line_no}: li_len must be positive")
            except (IndexError, ValueError):
                errors.append(f"line {line_no}: li_len needs one integer")
        elif directive == "limits":
            kv = _split_kv(rest, line_no, errors)
            _want(kv, {"until", "idle_limit", "reverse_ttl", "baseline_ttl"}, line_no, errors)
            for name in ("until", "idle_limit", "reverse_ttl", "baseline_ttl"):
                if name in kv:
                    value = _int(kv, name, line_no, errors)
                    if value is not None:
                        setattr(sc.limits, name, value)
        elif directive == "router":
            if not rest:
                errors.append(f"line {line_no}: router needs an id")
                continue
            kv = _split_kv(rest[1:], line_no, errors)
            _want(kv, {"li", "eps"}, line_no, errors)
            li = _int(kv, "li", line_no, errors)
            eps = _int(kv, "eps", line_no, errors)
            if li is not None and eps is not None:
                sc.routers.append(RouterSpec(rest[0], li, eps, line=line_no))
        elif directive == "link":
            if len(rest) != 2:
                errors.append(f"line {line_no}: link needs exactly two router ids")
            else:
                sc.links.append((rest[0], rest[1]))
        elif directive == "prefix":
            if not rest:
                errors.append(f"line {line_no}: prefix needs <base>/<len>")
                continue
            kv = _split_kv(rest[1:], line_no, errors)
            _want(kv, {"at"}, line_no, errors)
            if "at" not in kv:
                errors.append(f"line {line_no}: prefix needs at=<router>")
                continue
            try:
                pfx = Prefix.parse(rest[0])
            except ValueError as exc:
                errors.append(f"line {line_no}: {exc}")
                continue
            sc.prefixes.append(PrefixSpec(pfx, kv["at"], line=line_no))
        elif directive == "host":
            if not rest:
                errors.append(f"line {line_no}: host needs an id")
                continue
            kv = _split_kv(rest[1:], line_no, errors)
            _want(kv, {"at", "role", "addr", "prefix", "autoreply"}, line_no, errors)
            if "at" not in kv or "role" not in kv:
                errors.append(f"line {line_no}: host needs at= and role=")
                continue
            spec = HostSpec(rest[0], kv["at"], kv["role"], line=line_no)
            if "addr" in kv:
                try:
                    spec.addr = parse_address(kv["addr"])
                except ValueError as exc:
                    errors.append(f"line {line_no}: {exc}")
            if "prefix" in kv:
                try:
                    spec.prefix = Prefix.parse(kv["prefix"])
                except ValueError as exc:
                    errors.append(f"line {line_no}: {exc}")
            if "autoreply" in kv:
                spec.autoreply = _int(kv, "autoreply", line_no, errors)
            sc.hosts.append(spec)
        elif directive == "send":
            kv = _split_kv(rest, line_no, errors)
            _want(kv, {"t", "from", "dst", "payload"}, line_no, errors)
            tick = _int(kv, "t", line_no, errors)
            if tick is None or "from" not in kv or "dst" not in kv:
                errors.append(f"line {line_no}: send needs t=, from=, dst=")
                continue
            sc.traffic.append(
                SendSpec(tick, kv["from"], kv["dst"], kv.get("payload", ""), line=line_no)
            )
        elif directive == "perturb":
            if not rest or rest[0] not in ("cycle", "stale"):
                errors.append(f"line {line_no}: perturb kind must be 'cycle' or 'stale'")
                continue
            kind = rest[0]
            kv = _split_kv(rest[1:], line_no, errors)
            tick = _int(kv, "t", line_no, errors)
            if "prefix" not in kv or tick is None:
                errors.append(f"line {line_no}: perturb needs t= and prefix=")
                continue
            try:
                pfx = Prefix.parse(kv["prefix"])
            except ValueError as exc:
                errors.append(f"line {line_no}: {exc}")
                continue
            if kind == "cycle":
                _want(kv, {"t", "prefix", "routers"}, line_no, errors)
                routers = tuple(r for r in kv.get("routers", "").split(",") if r)
                if len(routers) < 2:
                    errors.append(f"line {line_no}: cycle needs routers=<r1,r2,...>")
                    continue
                sc.perturbations.append(
                    PerturbSpec("cycle", tick, pfx, routers=routers, line=line_no)
                )
            else:
                _want(kv, {"t", "prefix", "router", "dist"}, line_no, errors)
                dist = _int(kv, "dist", line_no, errors)
                if "router" not in kv or dist is None:
                    errors.append(f"line {line_no}: stale needs router= and dist=")
                    continue
                sc.perturbations.append(
                    PerturbSpec("stale", tick, pfx, router=kv["router"], dist=dist, line=line_no)
                )
        elif directive == "adversary":
            if not rest:
                errors.append(f"line {line_no}: adversary needs an id")
                continue
            kv = _split_kv(rest[1:], line_no, errors)
            if kv.get("kind") not in ADVERSARY_KINDS:
                errors.append(
                    f"line {line_no}: adversary kind must be one of {', '.join(ADVERSARY_KINDS)}"
                )
                continue
            if "at" not in kv:
                errors.append(f"line {line_no}: adversary needs at=<router>")
                continue
            kind = kv.pop("kind")
            router = kv.pop("at")
            sc.adversaries.append(AdversarySpec(rest[0], kind, router, kv, line=line_no))
        elif directive == "allow_invalid_plan":
            if len(rest) != 1 or rest[0] not in ("true", "false"):
                errors.append(f"line {line_no}: allow_invalid_plan must be true or false")
            else:
                sc.allow_invalid_plan = rest[0] == "true"
        else:
            errors.append(f"line {line_no}: unknown directive {directive!r}")

    if not seen_region:
        errors.append("scenario missing 'region' directive")
    if not seen_li_len:
        errors.append("scenario missing 'li_len' directive")
    if not sc.routers and not errors:
        errors.append("scenario declares no routers")
    return sc, errors


def validate_scenario(sc: Scenario) -> list[str]:
    """Cross-reference and plan checks; returns remaining problems."""
    errors: list[str] = []
    if sc.region is None or sc.li_len <= 0 or not sc.routers:
        return ["scenario incomplete (region, li_len, routers are required)"]

    rids = set()
    for r in sc.routers:
        if r.rid in rids:
            errors.append(f"line {r.line}: duplicate router id {r.rid}")
        rids.add(r.rid)
        if not 0 <= r.eps < sc.li_len:
            errors.append(f"line {r.line}: eps {r.eps} outside [0, {sc.li_len})")
        try:
            iv = LocalInterval(r.li_start, sc.li_len)
        except ValueError as exc:
            errors.append(f"line {r.line}: {exc}")
            continue
        if iv.start < sc.region.start or iv.end > sc.region.end:
            errors.append(
                f"line {r.line}: interval [{iv.start}, {iv.end}) outside region "
                f"[{sc.region.start}, {sc.region.end})"
            )

    node_ids = set(rids)
    seen_links = set()
    for a, b in sc.links:
        if a == b:
            errors.append(f"self link at {a}")
        for end in (a, b):
            if end not in rids:
                errors.append(f"link {a}-{b} references unknown router {end}")
        key = frozenset((a, b))
        if key in seen_links:
            errors.append(f"duplicate link {a}-{b}")
        seen_links.add(key)

    prefix_by_value: dict[Prefix, PrefixSpec] = {}
    for p in sc.prefixes:
        if p.prefix in prefix_by_value:
            errors.append(f"line {p.line}: duplicate prefix {p.prefix}")
        prefix_by_value[p.prefix] = p
        if p.router not in rids:
            errors.append(f"line {p.line}: prefix {p.prefix} attached to unknown router {p.router}")
        if p.prefix.overlaps_interval(sc.region):
            errors.append(f"line {p.line}: prefix {p.prefix} overlaps the local region")

    explicit_addrs: dict[str, set[int]] = {rid: set() for rid in rids}
    for h in sc.hosts:
        if h.hid in node_ids:
            errors.append(f"line {h.line}: id {h.hid} already in use")
        node_ids.add(h.hid)
        if h.router not in rids:
            errors.append(f"line {h.line}: host {h.hid} at unknown router {h.router}")
            continue
        if h.role not in ("client", "server"):
            errors.append(f"line {h.line}: host role must be client or server")
            continue
        if h.autoreply is not None and h.autoreply < 1:
            errors.append(f"line {h.line}: autoreply delay must be >= 1")
        if h.role == "server":
            if h.prefix is None or h.addr is None:
                errors.append(f"line {h.line}: server host needs prefix= and addr=")
                continue
            if not h.prefix.covers(h.addr):
                errors.append(f"line {h.line}: addr {h.addr} not covered by {h.prefix}")
            spec = prefix_by_value.get(h.prefix)
            if spec is None:
                errors.append(f"line {h.line}: prefix {h.prefix} not declared")
            elif spec.router != h.router:
                errors.append(
                    f"line {h.line}: prefix {h.prefix} attached at {spec.router}, "
                    f"but host sits at {h.router}"
                )
        else:
            if h.prefix is not None:
                errors.append(f"line {h.line}: client host cannot declare prefix=")
            if h.addr is not None:
                rspec = sc.router(h.router)
                iv = LocalInterval(rspec.li_start, sc.li_len)
                if not iv.contains(h.addr):
                    errors.append(
                        f"line {h.line}: addr {h.addr} outside router {h.router}'s interval"
                    )
        if h.addr is not None:
            if h.addr in explicit_addrs[h.router]:
                errors.append(f"line {h.line}: addr {h.addr} already taken at {h.router}")
            explicit_addrs[h.router].add(h.addr)

    host_ids = {h.hid for h in sc.hosts}

    def check_dst(raw: str, line: int) -> None:
        if raw.startswith("@"):
            if raw[1:] not in host_ids:
                errors.append(f"line {line}: dst references unknown host {raw[1:]}")
        else:
            try:
                parse_address(raw)
            except ValueError as exc:
                errors.append(f"line {line}: {exc}")

    for s in sc.traffic:
        if s.tick < 0:
            errors.append(f"line {s.line}: send tick must be >= 0")
        if s.host not in host_ids:
            errors.append(f"line {s.line}: send from unknown host {s.host}")
        check_dst(s.dst, s.line)

    for p in sc.perturbations:
        if p.tick < 0:
            errors.append(f"line {p.line}: perturb tick must be >= 0")
        if p.prefix not in prefix_by_value:
            errors.append(f"line {p.line}: perturb references undeclared prefix {p.prefix}")
        if p.kind == "cycle":
            for r in p.routers:
                if r not in rids:
                    errors.append(f"line {p.line}: cycle references unknown router {r}")
            if all(r in rids for r in p.routers):
                for i, r in enumerate(p.routers):
                    succ = p.routers[(i + 1) % len(p.routers)]
                    if frozenset((r, succ)) not in seen_links:
                        errors.append(f"line {p.line}: cycle members {r},{succ} not adjacent")
        else:
            if p.router not in rids:
                errors.append(f"line {p.line}: stale override for unknown router {p.router}")
            if p.dist is not None and p.dist < 0:
                errors.append(f"line {p.line}: stale distance must be >= 0")

    for adv in sc.adversaries:
        if adv.aid in node_ids:
            errors.append(f"line {adv.line}: id {adv.aid} already in use")
        node_ids.add(adv.aid)
        if adv.router not in rids:
            errors.append(f"line {adv.line}: adversary at unknown router {adv.router}")
            continue
        params = adv.params

        def need_int(key: str, lo: int = 0, hi: int | None = None, default: int | None = None) -> None:
            if key not in params:
                if default is None:
                    errors.append(f"line {adv.line}: adversary needs {key}=")
                return
            try:
                value = int(params[key])
            except ValueError:
                errors.append(f"line {adv.line}: {key}={params[key]!r} is not an integer")
                return
            if value < lo or (hi is not None and value > hi):
                errors.append(f"line {adv.line}: {key}={value} out of range")

        def need_addr(key: str) -> None:
            if key not in params:
                errors.append(f"line {adv.line}: adversary needs {key}=")
                return
            try:
                parse_address(params[key])
            except ValueError as exc:
                errors.append(f"line {adv.line}: {exc}")

        if adv.kind == "spoof_host":
            need_addr("addr")
            need_addr("forged_src")
            need_int("t")
            need_int("n", lo=1, default=1)
            if "dst" in params:
                check_dst(params["dst"], adv.line)
            else:
                errors.append(f"line {adv.line}: adversary needs dst=")
        elif adv.kind == "spoof_router":
            need_addr("src")
            need_addr("oid")
            need_int("t")
            need_int("n", lo=1, default=1)
            need_int("ttl", lo=1, hi=255, default=60)
            if "dst" in params:
                check_dst(params["dst"], adv.line)
            else:
                errors.append(f"line {adv.line}: adversary needs dst=")
        else:  # replay_router
            need_int("t")
            tap = params.get("tap", "")
            frm, sep, to = tap.partition("->")
            if not sep or frm not in rids or to not in rids:
                errors.append(f"line {adv.line}: replay tap must be <router>-><router>")
            elif frozenset((frm, to)) not in seen_links:
                errors.append(f"line {adv.line}: tap {tap} is not a link")

    if not 0 <= sc.limits.until:
        errors.append("limits: until must be >= 0")
    if sc.limits.idle_limit < 1:
        errors.append("limits: idle_limit must be >= 1")
    for name in ("reverse_ttl", "baseline_ttl"):
        value = getattr(sc.limits, name)
        if not 1 <= value <= 255:
            errors.append(f"limits: {name} must be in [1, 255]")

    if errors:
        return errors

    problems = validate_topology(sc.topology())
    errors.extend(problems)

    plan = validate_interval_plan(sc.list_tables(), [p.prefix for p in sc.prefixes])
    if plan:
        rendered = [str(v) for v in plan]
        if sc.allow_invalid_plan:
            sc.plan_warnings = rendered
        else:
            errors.extend(rendered)
    return errors


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; raises ScenarioError on any problem."""
    text = Path(path).read_text()
    sc, errors = parse_scenario(text, path=str(path))
    if not errors:
        errors = validate_scenario(sc)
    if errors:
        raise ScenarioError(errors)
    return sc
