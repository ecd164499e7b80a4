"""Raft leader election plus block replication.

Followers start with election timeouts drawn from the configured range.
A node whose timer expires becomes a candidate.  Terms are ballots
``(round, -started_at, -node)``: within one round the earlier candidacy
outranks the later one, so the first node to time out collects the votes
even when every node has already started its own candidacy, which is the
normal case when latency exceeds the spread of the timeout range.  A vote
grant resets the voter's timer.  Only grants are answered.  The leader
sends heartbeats every cycle, appends one block at a time, commits it on
a majority of acks and then broadcasts a commit notice.  The next block
follows ``t_block_s`` after the leader's own copy of that notice arrives.
"""

from __future__ import annotations

from typing import NamedTuple, Tuple

from ..chain import GENESIS, Block, ChainMonitor
from ..config import SimConfig
from ..engine import Simulator, derive_rng
from .common import broadcast, majority

FOLLOWER, CANDIDATE, LEADER = "follower", "candidate", "leader"

Term = Tuple[int, float, int]
INITIAL_TERM: Term = (0, 0.0, 0)


def next_term(term: Term, now: float, node: int) -> Term:
    return (term[0] + 1, -now, -node)


class RequestVote(NamedTuple):
    term: Term
    candidate: int
    last_height: int


class Vote(NamedTuple):
    term: Term
    voter: int


class Heartbeat(NamedTuple):
    term: Term
    leader: int


class Append(NamedTuple):
    term: Term
    leader: int
    block: Block


class Ack(NamedTuple):
    term: Term
    height: int
    sender: int


class CommitNotice(NamedTuple):
    term: Term
    block: Block


class _ElectionTimeout(NamedTuple):
    token: int


class _HeartbeatTick(NamedTuple):
    term: Term


class _Propose(NamedTuple):
    term: Term


class _Node:
    __slots__ = ("term", "voted_for", "role", "votes", "token", "leader", "log_tip",
                 "acks", "rng")

    def __init__(self, rng) -> None:
        self.term: Term = INITIAL_TERM
        self.voted_for: int | None = None
        self.role = FOLLOWER
        self.votes = 0
        self.token = 0
        self.leader: int | None = None
        self.log_tip = GENESIS
        self.acks: dict[int, int] = {}
        self.rng = rng


class RaftProtocol:
    name = "raft"

    def __init__(self, config: SimConfig, sim: Simulator, monitor: ChainMonitor) -> None:
        self.config = config
        self.sim = sim
        self.monitor = monitor
        self.n = config.n
        self.quorum = majority(self.n)
        self.nodes = [_Node(derive_rng(config.seed, "node", i)) for i in range(self.n)]
        self.committed_tip = [GENESIS] * self.n
        self.elections_won = 0
        sim.handler = self.handle

    def start(self) -> None:
        for i in range(self.n):
            self._reset_timer(i)

    def _reset_timer(self, i: int) -> None:
        node = self.nodes[i]
        node.token += 1
        c = self.config
        delay = node.rng.uniform(c.timeout_min_s, c.timeout_max_s)
        self.sim.schedule(self.sim.now + delay, i, _ElectionTimeout(node.token))

    def _step_down(self, i: int, term: Term) -> None:
        node = self.nodes[i]
        if term > node.term:
            node.term = term
            node.voted_for = None
        node.role = FOLLOWER

    def _become_leader(self, i: int) -> None:
        node = self.nodes[i]
        node.role = LEADER
        node.leader = i
        node.token += 1  # cancels the pending election timeout
        self.elections_won += 1
        broadcast(self.sim, i, self.n, Heartbeat(node.term, i), node.rng, include_self=False)
        self.sim.schedule(self.sim.now + self.config.cycle_s, i, _HeartbeatTick(node.term))
        self.sim.schedule(self.sim.now, i, _Propose(node.term))

    def _from_leader(self, i: int, term: Term, leader: int) -> bool:
        """Common handling of leader traffic; False if the sender is stale."""
        node = self.nodes[i]
        if term < node.term:
            return False
        if term > node.term or node.role != FOLLOWER:
            self._step_down(i, term)
        node.leader = leader
        self._reset_timer(i)
        return True

    def handle(self, i: int, msg) -> None:
        node = self.nodes[i]
        sim = self.sim
        kind = type(msg)
        if kind is Heartbeat:
            self._from_leader(i, msg.term, msg.leader)
        elif kind is Append:
            if self._from_leader(i, msg.term, msg.leader):
                node.log_tip = msg.block
                sim.send(msg.leader, Ack(msg.term, msg.block.id, i), node.rng)
        elif kind is Ack:
            if node.role != LEADER or msg.term != node.term:
                return
            got = node.acks.get(msg.height)
            if got is None:
                return
            node.acks[msg.height] = got + 1
            if got + 1 == self.quorum:
                broadcast(sim, i, self.n, CommitNotice(node.term, node.log_tip), node.rng)
        elif kind is CommitNotice:
            if self.committed_tip[i].id < msg.block.id:
                self.committed_tip[i] = msg.block
                node.log_tip = msg.block if node.log_tip.id < msg.block.id else node.log_tip
                self.monitor.record_commit(i, msg.block, sim.now)
                if node.role == LEADER and msg.term == node.term:
                    del node.acks[msg.block.id]
                    sim.schedule(sim.now + self.config.t_block_s, i, _Propose(node.term))
        elif kind is _HeartbeatTick:
            if node.role == LEADER and msg.term == node.term:
                broadcast(sim, i, self.n, Heartbeat(node.term, i), node.rng, include_self=False)
                sim.schedule(sim.now + self.config.cycle_s, i, _HeartbeatTick(node.term))
        elif kind is _Propose:
            if node.role != LEADER or msg.term != node.term:
                return
            block = Block(node.log_tip.id + 1, i, sim.now, node.log_tip)
            node.log_tip = block
            node.acks[block.id] = 1  # the leader's own copy
            if 1 >= self.quorum:
                broadcast(sim, i, self.n, CommitNotice(node.term, block), node.rng)
            broadcast(sim, i, self.n, Append(node.term, i, block), node.rng, include_self=False)
        elif kind is _ElectionTimeout:
            if msg.token != node.token or node.role == LEADER:
                return
            node.term = next_term(node.term, sim.now, i)
            node.role = CANDIDATE
            node.voted_for = i
            node.votes = 1
            node.leader = None
            self._reset_timer(i)
            if node.votes >= self.quorum:
                self._become_leader(i)
                return
            broadcast(sim, i, self.n, RequestVote(node.term, i, node.log_tip.id), node.rng,
                      include_self=False)
        elif kind is RequestVote:
            if msg.term < node.term:
                return
            if msg.term > node.term:
                self._step_down(i, msg.term)
            if node.voted_for in (None, msg.candidate) and msg.last_height >= node.log_tip.id:
                node.voted_for = msg.candidate
                self._reset_timer(i)
                sim.send(msg.candidate, Vote(msg.term, i), node.rng)
        elif kind is Vote:
            if node.role != CANDIDATE or msg.term != node.term:
                return
            node.votes += 1
            if node.votes == self.quorum:
                self._become_leader(i)
