"""PBFT normal-case operation with a fixed primary (node 0), no view changes.

Per block: the primary broadcasts pre-prepare, every replica broadcasts
prepare, and every replica that has the pre-prepare plus ``2f + 1``
prepares broadcasts commit.  A replica accepts the block on ``2f + 1``
commits.  Each replica's own votes reach it over loopback.
"""

from __future__ import annotations

from typing import NamedTuple

from ..chain import GENESIS, Block, ChainMonitor
from ..config import SimConfig
from ..engine import Simulator, derive_rng
from .common import broadcast

PRIMARY = 0


class PrePrepare(NamedTuple):
    view: int
    block: Block


class Prepare(NamedTuple):
    height: int
    sender: int


class Commit(NamedTuple):
    height: int
    sender: int


class _Propose(NamedTuple):
    pass


def fault_bound(n: int) -> int:
    return max(0, (n - 1) // 3)


def quorum(n: int) -> int:
    return 2 * fault_bound(n) + 1


class _Slot:
    __slots__ = ("block", "prepares", "commits", "sent_commit", "done")

    def __init__(self) -> None:
        self.block: Block | None = None
        self.prepares = 0
        self.commits = 0
        self.sent_commit = False
        self.done = False


class PbftProtocol:
    name = "pbft"

    def __init__(self, config: SimConfig, sim: Simulator, monitor: ChainMonitor) -> None:
        self.config = config
        self.sim = sim
        self.monitor = monitor
        self.n = config.n
        self.q = quorum(self.n)
        self.rngs = [derive_rng(config.seed, "node", i) for i in range(self.n)]
        self.slots: list[dict[int, _Slot]] = [{} for _ in range(self.n)]
        self.accepted_height = [0] * self.n
        self.tip = GENESIS
        sim.handler = self.handle

    def start(self) -> None:
        if self.n:
            self.sim.schedule(0.0, PRIMARY, _Propose())

    def _slot(self, node: int, height: int) -> _Slot:
        slots = self.slots[node]
        slot = slots.get(height)
        if slot is None:
            slot = slots[height] = _Slot()
        return slot

    def _stale(self, node: int, msg) -> bool:
        height = msg.block.id if type(msg) is PrePrepare else msg.height
        return height <= self.accepted_height[node]

    def _advance(self, node: int, height: int, slot: _Slot) -> None:
        if slot.block is None:
            return
        if not slot.sent_commit and slot.prepares >= self.q:
            slot.sent_commit = True
            broadcast(self.sim, node, self.n, Commit(height, node), self.rngs[node])
        if slot.sent_commit and not slot.done and slot.commits >= self.q:
            slot.done = True
            self.monitor.record_commit(node, slot.block, self.sim.now)
            del self.slots[node][height]
            self.accepted_height[node] = height
            if node == PRIMARY:
                self.tip = slot.block
                self.sim.schedule(self.sim.now + self.config.t_block_s, PRIMARY, _Propose())

    def handle(self, target: int, msg) -> None:
        kind = type(msg)
        if kind is not _Propose and self._stale(target, msg):
            return
        if kind is Prepare:
            slot = self._slot(target, msg.height)
            slot.prepares += 1
            self._advance(target, msg.height, slot)
        elif kind is Commit:
            slot = self._slot(target, msg.height)
            slot.commits += 1
            self._advance(target, msg.height, slot)
        elif kind is PrePrepare:
            height = msg.block.id
            slot = self._slot(target, height)
            if slot.block is not None:
                return
            slot.block = msg.block
            broadcast(self.sim, target, self.n, Prepare(height, target), self.rngs[target])
            self._advance(target, height, slot)
        elif kind is _Propose:
            block = Block(self.tip.id + 1, PRIMARY, self.sim.now, self.tip)
            broadcast(self.sim, PRIMARY, self.n, PrePrepare(0, block), self.rngs[PRIMARY])
