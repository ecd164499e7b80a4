"""Node cache protocol: bounded random views of the membership.

Every node keeps at most ``capacity`` peer ids.  A random sample of the
view rides on each gossip message; the receiver merges it, adds the sender,
and evicts uniformly at random back down to capacity.
"""

from __future__ import annotations

import random
from collections.abc import Iterable


class IsolatedNodeError(LookupError):
    """The node's peer cache is empty, so it has nobody to talk to."""


def _partial_shuffle(pool: list[int], k: int, rng: random.Random) -> None:
    """Move a uniform random k-subset of ``pool`` to its front, in place."""
    rand = rng.random
    n = len(pool)
    for i in range(k):
        j = i + int(rand() * (n - i))
        pool[i], pool[j] = pool[j], pool[i]


class PeerCache:
    __slots__ = ("owner", "capacity", "_entries")

    def __init__(self, owner: int, capacity: int, entries: Iterable[int] = ()) -> None:
        self.owner = owner
        self.capacity = capacity
        self._entries: list[int] = sorted(set(entries) - {owner})
        if len(self._entries) > capacity:
            raise ValueError(f"{len(self._entries)} entries exceed capacity {capacity}")

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, node: object) -> bool:
        return node in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __repr__(self) -> str:
        return f"PeerCache(owner={self.owner}, entries={self._entries})"

    @property
    def entries(self) -> frozenset[int]:
        return frozenset(self._entries)

    def sample(self, k: int, rng: random.Random) -> tuple[int, ...]:
        if k >= len(self._entries):
            return tuple(self._entries)
        entries = self._entries
        n = len(entries)
        rand = rng.random
        picked: set[int] = set()
        while len(picked) < k:
            picked.add(int(rand() * n))
        return tuple(entries[i] for i in sorted(picked))


def bootstrap(n: int, n_cache: int, rng: random.Random) -> list[PeerCache]:
    """Initial views: each node gets ``min(n_cache, n - 1)`` distinct random peers."""
    if n < 0:
        raise ValueError("node count must be non-negative")
    if n > 1 and n_cache < 1:
        raise ValueError("n_cache must be at least 1 when there is more than one node")
    size = min(n_cache, n - 1) if n > 0 else 0
    caches = []
    for i in range(n):
        # draw from the n-1 other ids, shifting past self
        picks = rng.sample(range(n - 1), size)
        caches.append(PeerCache(i, n_cache, (p + 1 if p >= i else p for p in picks)))
    return caches


def get_random_node(cache: PeerCache, rng: random.Random) -> int:
    entries = cache._entries
    if not entries:
        raise IsolatedNodeError(f"node {cache.owner} has an empty peer cache")
    return entries[int(rng.random() * len(entries))]


def ncp_exchange(
    local: PeerCache, received: Iterable[int], sender: int, rng: random.Random
) -> PeerCache:
    """Merge a received sample and the sender into ``local`` (in place)."""
    entries = local._entries
    present = set(entries)
    present.add(local.owner)
    added = []
    for x in received:
        if x not in present:
            present.add(x)
            added.append(x)
    if sender not in present:
        added.append(sender)
    if not added:
        return local
    entries = entries + added
    surplus = len(entries) - local.capacity
    if surplus > 0:
        _partial_shuffle(entries, surplus, rng)
        del entries[:surplus]
    local._entries = entries
    return local
