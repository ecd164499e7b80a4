from __future__ import annotations

import math
import random
from collections import Counter, deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from becpsim.engine import derive_rng
from becpsim.membership import (IsolatedNodeError, PeerCache, bootstrap, get_random_node,
                                ncp_exchange)


def reaches_all(adj: dict[int, set[int]], n: int, start: int = 0) -> bool:
    seen = {start}
    todo = deque([start])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return len(seen) == n


def chi2_critical(df: int, z: float = 3.0) -> float:
    # Wilson-Hilferty approximation of the chi-square upper quantile
    a = 2.0 / (9.0 * df)
    return df * (1.0 - a + z * math.sqrt(a)) ** 3


def test_single_node_has_empty_cache():
    (only,) = bootstrap(1, 50, random.Random(1))
    assert len(only) == 0


def test_bootstrap_fills_caches():
    caches = bootstrap(500, 50, derive_rng(1, "bootstrap"))
    for i, cache in enumerate(caches):
        assert len(cache) == 50
        assert i not in cache
        assert all(0 <= x < 500 for x in cache)


def test_bootstrap_small_network_takes_everyone():
    caches = bootstrap(6, 50, random.Random(2))
    for i, cache in enumerate(caches):
        assert cache.entries == frozenset(range(6)) - {i}


def test_bootstrap_rejects_zero_capacity():
    with pytest.raises(ValueError):
        bootstrap(10, 0, random.Random(1))
    assert len(bootstrap(1, 0, random.Random(1))[0]) == 0


@pytest.mark.parametrize("seed", range(1, 6))
def test_bootstrap_graph_is_strongly_connected(seed):
    n = 100
    caches = bootstrap(n, 50, derive_rng(seed, "bootstrap"))
    fwd = {i: set(c) for i, c in enumerate(caches)}
    rev: dict[int, set[int]] = {i: set() for i in range(n)}
    for i, peers in fwd.items():
        for p in peers:
            rev[p].add(i)
    assert reaches_all(fwd, n) and reaches_all(rev, n)


def test_single_entry_cache():
    assert get_random_node(PeerCache(0, 50, [7]), random.Random(1)) == 7


def test_empty_cache_is_isolated():
    with pytest.raises(IsolatedNodeError):
        get_random_node(PeerCache(3, 50), random.Random(1))


def test_random_node_is_uniform():
    cache = PeerCache(0, 50, range(1, 51))
    rng = random.Random(11)
    draws = 100_000
    counts = Counter(get_random_node(cache, rng) for _ in range(draws))
    assert 0 not in counts
    expected = draws / 50
    stat = sum((counts[i] - expected) ** 2 / expected for i in range(1, 51))
    assert stat < chi2_critical(49)


def test_owner_never_stored():
    cache = PeerCache(4, 10, [1, 4, 5])
    assert cache.entries == {1, 5}
    ncp_exchange(cache, [4, 6], 4, random.Random(0))
    assert 4 not in cache


def test_disjoint_merge_truncates_to_capacity():
    local = PeerCache(0, 50, range(1, 31))
    received = list(range(31, 61))
    ncp_exchange(local, received, 61, random.Random(5))
    assert len(local) == 50
    assert local.entries <= set(range(1, 62))


def test_merging_own_view_changes_nothing():
    local = PeerCache(0, 50, range(1, 41))
    before = local.entries
    ncp_exchange(local, sorted(before), 1, random.Random(5))
    assert local.entries == before


def test_eviction_is_uniform_over_merged_pool():
    # 10 kept + 5 new at capacity 10: each of the 15 survives with chance 2/3
    trials = 6000
    rng = random.Random(8)
    kept = Counter()
    for _ in range(trials):
        local = PeerCache(0, 10, range(1, 11))
        ncp_exchange(local, range(11, 15), 15, rng)
        kept.update(local)
    for node in range(1, 16):
        p = kept[node] / trials
        assert abs(p - 2 / 3) < 4 * math.sqrt(2 / 9 / trials)


def test_ring_census_balances_in_degree():
    n, cap = 64, 50
    rng = derive_rng(3, "ring")
    caches = [PeerCache(i, cap, [(i + 1) % n]) for i in range(n)]
    for _ in range(20):
        for i in range(n):
            peer = get_random_node(caches[i], rng)
            push = caches[i].sample(8, rng)
            reply = caches[peer].sample(8, rng)
            ncp_exchange(caches[peer], push, i, rng)
            ncp_exchange(caches[i], reply, peer, rng)
        # weak connectivity, checked every cycle
        und: dict[int, set[int]] = {i: set() for i in range(n)}
        for i, c in enumerate(caches):
            for p in c:
                und[i].add(p)
                und[p].add(i)
        assert reaches_all(und, n)
    indeg = Counter(p for c in caches for p in c)
    degrees = [indeg[i] for i in range(n)]
    assert min(degrees) > 0
    assert max(degrees) / min(degrees) < 3


@settings(max_examples=80, deadline=None)
@given(
    owner=st.integers(0, 30),
    cap=st.integers(1, 12),
    local=st.sets(st.integers(0, 30), max_size=12),
    received=st.lists(st.integers(0, 30), max_size=10),
    sender=st.integers(0, 30),
    seed=st.integers(0, 1000),
)
def test_exchange_invariants(owner, cap, local, received, sender, seed):
    local = set(sorted(local - {owner})[:cap])
    cache = PeerCache(owner, cap, local)
    ncp_exchange(cache, received, sender, random.Random(seed))
    assert len(cache) <= cap
    assert owner not in cache
    assert cache.entries <= local | set(received) | {sender}
    assert len(list(cache)) == len(cache.entries)
