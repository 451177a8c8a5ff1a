import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pear.addressing import AddressExhausted, LocalInterval, Prefix
from pear.tables import (
    LOCAL,
    Drt,
    Fib,
    Hrt,
    ScalarOutOfInterval,
    UpsertOutcome,
    evict_idle,
)

IV = LocalInterval(1000, 16)


# ----------------------------------------------------------------------- fib

def _fib_with(specs):
    fib = Fib()
    for text, nh, dist in specs:
        fib.install(Prefix.parse(text), nh, dist)
    return fib


def test_fib_longest_prefix_wins():
    fib = _fib_with([
        ("0.0.0.0/0", "gw", 9),
        ("10.0.0.0/8", "a", 3),
        ("10.1.0.0/16", "b", 2),
        ("10.1.1.0/24", "c", 1),
    ])
    assert fib.lookup((10 << 24) | (1 << 16) | (1 << 8) | 7).next_hop == "c"
    assert fib.lookup((10 << 24) | (1 << 16) | (2 << 8)).next_hop == "b"
    assert fib.lookup((10 << 24) | (9 << 16)).next_hop == "a"
    assert fib.lookup(11 << 24).next_hop == "gw"


def test_fib_lookup_miss():
    fib = _fib_with([("10.0.0.0/8", "a", 3)])
    assert fib.lookup(11 << 24) is None


def test_fib_reinstall_replaces():
    fib = _fib_with([("10.0.0.0/8", "a", 3)])
    fib.install(Prefix.parse("10.0.0.0/8"), "b", 7)
    assert len(fib) == 1
    assert fib.lookup(10 << 24).next_hop == "b"
    assert fib.lookup(10 << 24).distance == 7


def test_fib_rejects_negative_distance():
    fib = Fib()
    with pytest.raises(ValueError):
        fib.install(Prefix.parse("10.0.0.0/8"), "a", -1)


@settings(max_examples=100)
@given(
    plens=st.lists(st.integers(min_value=0, max_value=32), min_size=1, max_size=6),
    addr=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_fib_matches_brute_force(plens, addr):
    fib = Fib()
    installed = []
    for k, plen in enumerate(plens):
        mask = 0 if plen == 0 else (0xFFFFFFFF << (32 - plen)) & 0xFFFFFFFF
        pfx = Prefix(addr & mask if k % 2 == 0 else ((addr ^ 0x80000000) & mask), plen)
        fib.install(pfx, f"n{k}", k)
        installed.append(pfx)
    hit = fib.lookup(addr)
    covering = [p for p in installed if p.covers(addr)]
    if not covering:
        assert hit is None
    else:
        assert hit is not None
        assert hit.prefix.length == max(p.length for p in covering)


# ----------------------------------------------------------------------- hrt

def test_hrt_anchor_takes_arriving_scalar():
    hrt = Hrt()
    hip, fresh = hrt.find_or_alloc(1005, "up", IV, random.Random(1), now=4)
    assert (hip, fresh) == (1005, True)
    entry = hrt.peek(1005)
    assert entry.next_hop == "up"
    assert entry.map == 1005
    assert entry.last_used == 4


def test_hrt_repeated_flow_refreshes():
    hrt = Hrt()
    hrt.find_or_alloc(1005, "up", IV, random.Random(1), now=4)
    hip, fresh = hrt.find_or_alloc(1005, "up", IV, random.Random(99), now=9)
    assert (hip, fresh) == (1005, False)
    assert hrt.peek(1005).last_used == 9
    assert len(hrt) == 1


def test_hrt_collision_draws_new_index():
    hrt = Hrt()
    hrt.find_or_alloc(1005, "up", IV, random.Random(1), now=0)
    rng = random.Random(2)
    hip, fresh = hrt.find_or_alloc(1005, "other", IV, rng, now=1)
    assert fresh
    assert hip != 1005
    assert IV.contains(hip)
    entry = hrt.peek(hip)
    assert entry.map == 1005
    assert entry.next_hop == "other"
    assert len(hrt) == 2


def test_hrt_rejects_foreign_scalar():
    hrt = Hrt()
    with pytest.raises(ScalarOutOfInterval):
        hrt.find_or_alloc(999, "up", IV, random.Random(1), now=0)
    with pytest.raises(ScalarOutOfInterval):
        hrt.find_or_alloc(1016, "up", IV, random.Random(1), now=0)


def test_hrt_exhaustion():
    tiny = LocalInterval(0, 3)
    hrt = Hrt()
    for k in range(3):
        hrt.find_or_alloc(0, f"n{k}", tiny, random.Random(k), now=0)
    with pytest.raises(AddressExhausted):
        hrt.find_or_alloc(1, "n9", tiny, random.Random(9), now=0)


def test_hrt_lookup_touches_peek_does_not():
    hrt = Hrt()
    hrt.find_or_alloc(1005, "up", IV, random.Random(1), now=0)
    hrt.peek(1005)
    assert hrt.peek(1005).last_used == 0
    hrt.lookup(1005, now=7)
    assert hrt.peek(1005).last_used == 7
    assert hrt.lookup(1015, now=7) is None


def test_hrt_eviction_boundary():
    hrt = Hrt()
    hrt.find_or_alloc(1005, "up", IV, random.Random(1), now=0)
    assert evict_idle(hrt, now=10, idle_limit=10) == 0  # exactly at the limit
    assert len(hrt) == 1
    assert evict_idle(hrt, now=11, idle_limit=10) == 1
    assert len(hrt) == 0
    # The flow key is released with the entry.
    hip, fresh = hrt.find_or_alloc(1005, "up", IV, random.Random(1), now=12)
    assert fresh


def test_hrt_touched_now_survives_sweep():
    hrt = Hrt()
    hrt.find_or_alloc(1005, "up", IV, random.Random(1), now=50)
    assert evict_idle(hrt, now=50, idle_limit=1) == 0


def test_hrt_rejects_bad_idle_limit():
    with pytest.raises(ValueError):
        Hrt().evict_idle(now=0, idle_limit=0)


def test_hrt_entries_sorted_and_high_water():
    hrt = Hrt()
    hrt.find_or_alloc(1009, "a", IV, random.Random(1), now=0)
    hrt.find_or_alloc(1002, "b", IV, random.Random(1), now=0)
    assert [e.hip for e in hrt.entries()] == [1002, 1009]
    assert hrt.high_water == 2
    evict_idle(hrt, now=100, idle_limit=1)
    assert len(hrt) == 0
    assert hrt.high_water == 2  # peak is sticky


@settings(max_examples=50, deadline=None)
@given(
    ops=st.lists(
        st.tuples(st.integers(min_value=0, max_value=15), st.sampled_from(["u1", "u2", "u3"])),
        min_size=1,
        max_size=40,
    ),
    seed=st.integers(min_value=0, max_value=999),
)
def test_hrt_invariants_random_ops(ops, seed):
    own = LocalInterval(0, 16)
    hrt = Hrt()
    rng = random.Random(seed)
    for now, (scalar, prev) in enumerate(ops):
        try:
            hrt.find_or_alloc(scalar, prev, own, rng, now=now)
        except AddressExhausted:
            break
    entries = hrt.entries()
    hips = [e.hip for e in entries]
    flows = [(e.next_hop, e.map) for e in entries]
    assert len(hips) == len(set(hips))
    assert len(flows) == len(set(flows))
    assert all(own.contains(e.hip) and own.contains(e.map) for e in entries)
    assert hrt.high_water >= len(entries)


# ----------------------------------------------------------------------- drt

def test_drt_upsert_outcomes():
    drt = Drt()
    assert drt.upsert(3980, 3005, now=1) is UpsertOutcome.INSERTED
    assert drt.upsert(3980, 3005, now=2) is UpsertOutcome.REFRESHED
    assert drt.collisions == 0
    assert drt.upsert(3980, 3007, now=3) is UpsertOutcome.OVERWRITTEN
    assert drt.collisions == 1
    assert drt.lookup(3980, now=4) == 3007
    assert len(drt) == 1


def test_drt_lookup_and_peek():
    drt = Drt()
    drt.upsert(10, 20, now=0)
    assert drt.lookup(99, now=1) is None
    drt.peek(10)
    assert drt.peek(10).last_used == 0
    drt.lookup(10, now=6)
    assert drt.peek(10).last_used == 6


def test_drt_eviction_boundary():
    drt = Drt()
    drt.upsert(10, 20, now=0)
    drt.upsert(11, 21, now=5)
    assert evict_idle(drt, now=10, idle_limit=10) == 0
    assert evict_idle(drt, now=11, idle_limit=10) == 1
    assert drt.peek(10) is None
    assert drt.peek(11) is not None


def test_drt_entries_sorted_high_water():
    drt = Drt()
    drt.upsert(30, 1, now=0)
    drt.upsert(10, 2, now=0)
    assert [e.origin for e in drt.entries()] == [10, 30]
    assert drt.high_water == 2


def test_local_sentinel():
    assert LOCAL == "local"
