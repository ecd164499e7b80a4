"""Single-leader Paxos, one decree per block height.

Node 0 proposes.  Every instance runs all five legs: prepare, promise,
accept, accepted, learn.  The block itself is created once the promises
are in, so its timestamp marks the start of the accept leg.  In this
benign, loss-free setting the leader waits for every acceptor's reply
before moving on.
"""

from __future__ import annotations

from typing import NamedTuple

from ..chain import GENESIS, Block, ChainMonitor
from ..config import SimConfig
from ..engine import Simulator, derive_rng
from .common import broadcast, majority

LEADER = 0


class Prepare(NamedTuple):
    ballot: int


class Promise(NamedTuple):
    ballot: int
    sender: int


class Accept(NamedTuple):
    ballot: int
    block: Block


class Accepted(NamedTuple):
    ballot: int
    sender: int


class Learn(NamedTuple):
    block: Block


class _Propose(NamedTuple):
    pass


class PaxosProtocol:
    name = "paxos"

    def __init__(self, config: SimConfig, sim: Simulator, monitor: ChainMonitor,
                 wait_for_all: bool = True) -> None:
        self.config = config
        self.sim = sim
        self.monitor = monitor
        self.n = config.n
        self.quorum = self.n if wait_for_all else majority(self.n)
        self.rngs = [derive_rng(config.seed, "node", i) for i in range(self.n)]
        self.promised = [0] * self.n
        self.tip = GENESIS
        self.ballot = 0
        self.promises = 0
        self.accepts = 0
        self.block: Block | None = None
        sim.handler = self.handle

    def start(self) -> None:
        if self.n:
            self.sim.schedule(0.0, LEADER, _Propose())

    def _reply(self, src: int, payload) -> None:
        if src == LEADER:
            self.handle(LEADER, payload)
        else:
            self.sim.send(LEADER, payload, self.rngs[src])

    def handle(self, target: int, msg) -> None:
        sim = self.sim
        kind = type(msg)
        if kind is _Propose:
            self.ballot += 1
            self.promises = self.accepts = 0
            self.block = None
            broadcast(sim, LEADER, self.n, Prepare(self.ballot), self.rngs[LEADER])
        elif kind is Prepare:
            if msg.ballot > self.promised[target]:
                self.promised[target] = msg.ballot
                self._reply(target, Promise(msg.ballot, target))
        elif kind is Promise:
            if msg.ballot != self.ballot or self.block is not None:
                return
            self.promises += 1
            if self.promises >= self.quorum:
                self.block = Block(self.tip.id + 1, LEADER, sim.now, self.tip)
                broadcast(sim, LEADER, self.n, Accept(self.ballot, self.block), self.rngs[LEADER])
        elif kind is Accept:
            if msg.ballot >= self.promised[target]:
                self._reply(target, Accepted(msg.ballot, target))
        elif kind is Accepted:
            if msg.ballot != self.ballot:
                return
            self.accepts += 1
            if self.accepts == self.quorum:
                broadcast(sim, LEADER, self.n, Learn(self.block), self.rngs[LEADER])
        elif kind is Learn:
            self.monitor.record_commit(target, msg.block, sim.now)
            if target == LEADER:
                self.tip = msg.block
                sim.schedule(sim.now + self.config.t_block_s, LEADER, _Propose())
