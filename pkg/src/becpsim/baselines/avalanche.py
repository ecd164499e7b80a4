"""Avalanche run over a linear chain instead of a DAG.

Each node keeps, per undecided height, a Snowball instance over the
candidate blocks it has seen, and a preferred chain that extends its
decided prefix.  Every cycle it samples ``k`` peers and asks each for its
preference at every height from its lowest undecided one up to its
preferred tip; the query carries the querier's chain, so it also
disseminates blocks.  A height whose answers reach ``alpha * k`` for one
candidate counts a successful query for that candidate.  A height is
decided after ``beta2`` consecutive successes, or ``beta1`` if no
competing candidate was ever seen there.  Heights are decided in order.

Nodes act only on their cycle activations.  Block generation happens in
the first activation at or after each ``t_block_s`` boundary, after that
activation's query round, so a fresh block is first announced one cycle
later.  New blocks extend the node's preferred tip, the highest block it
knows on a consistent chain.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import NamedTuple, Optional

from ..becp import start_offset
from ..chain import GENESIS, Block, BlockKey, ChainMonitor
from ..config import SimConfig
from ..engine import Simulator, derive_rng


class Query(NamedTuple):
    qid: int
    sender: int
    lo: int
    chain: tuple[Block, ...]


class Response(NamedTuple):
    qid: int
    prefs: tuple[Optional[Block], ...]


class _Cycle(NamedTuple):
    k: int


class SnowballState:
    __slots__ = ("preferred", "counters", "consecutive", "decided", "conflict")

    def __init__(self) -> None:
        self.preferred: Optional[Block] = None
        self.counters: dict[BlockKey, int] = {}
        self.consecutive = 0
        self.decided = False
        self.conflict = False

    @property
    def no_conflict_seen(self) -> bool:
        return not self.conflict

    def record_success(self, block: Block) -> bool:
        """Apply one successful query; returns True if the preference changed."""
        key = block.key
        self.counters[key] = self.counters.get(key, 0) + 1
        if self.preferred is not None and self.preferred.key == key:
            self.consecutive += 1
            return False
        self.preferred = block
        self.consecutive = 1
        return True


class _Pending:
    __slots__ = ("lo", "answers")

    def __init__(self, lo: int) -> None:
        self.lo = lo
        self.answers: list[tuple[Optional[Block], ...]] = []


class AvalancheNode:
    def __init__(self, node_id: int, config: SimConfig, rng) -> None:
        self.id = node_id
        self.rng = rng
        self.k = config.k
        self.threshold = math.ceil(config.alpha * config.k - 1e-9)
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.p_block = config.p_block
        self.decided: list[Block] = [GENESIS]
        self.prefs: list[Block] = []  # preferred chain above the decided prefix
        self.known: dict[int, dict[BlockKey, Block]] = {}
        self.sb: dict[int, SnowballState] = {}
        self.pending: dict[int, _Pending] = {}
        self.next_qid = 0
        # blocks are shared, never copied, so identity is a cheap membership
        # test; the map holds the blocks alive so ids are never reused
        self.seen: dict[int, Block] = {id(GENESIS): GENESIS}

    @property
    def base(self) -> int:
        """Lowest undecided height."""
        return len(self.decided)

    def tip(self) -> Block:
        return self.prefs[-1] if self.prefs else self.decided[-1]

    def preference_at(self, height: int) -> Optional[Block]:
        if height < len(self.decided):
            return self.decided[height]
        i = height - len(self.decided)
        return self.prefs[i] if i < len(self.prefs) else None

    def state(self, height: int) -> SnowballState:
        st = self.sb.get(height)
        if st is None:
            st = self.sb[height] = SnowballState()
        return st

    # chain bookkeeping

    def _best_child(self, parent: Block) -> Optional[Block]:
        cands = self.known.get(parent.id + 1)
        if not cands:
            return None
        pkey = parent.key
        best = None
        best_rank = None
        counters = self.state(parent.id + 1).counters
        for b in cands.values():
            if b.parent is None or b.parent.key != pkey:
                continue
            rank = (-counters.get(b.key, 0), b.t, b.o)
            if best is None or rank < best_rank:
                best, best_rank = b, rank
        return best

    def _extend(self) -> None:
        """Grow the preferred chain from its tip using known candidates."""
        while True:
            tip = self.tip()
            h = tip.id + 1
            st = self.sb.get(h)
            nxt = None
            if st is not None and st.preferred is not None and st.preferred.parent is not None \
                    and st.preferred.parent.key == tip.key:
                nxt = st.preferred
            else:
                nxt = self._best_child(tip)
                if nxt is not None:
                    st = self.state(h)
                    st.preferred = nxt
                    st.consecutive = 0
            if nxt is None:
                return
            self.prefs.append(nxt)

    def _truncate(self, height: int) -> None:
        """Drop the preferred chain from ``height`` upwards and rebuild it."""
        del self.prefs[height - len(self.decided):]
        self._extend()

    def learn(self, block: Block) -> None:
        if id(block) in self.seen:
            return
        self.seen[id(block)] = block
        h = block.id
        if h < len(self.decided):
            return
        cands = self.known.get(h)
        if cands is None:
            cands = self.known[h] = {}
        elif block.key in cands:
            return
        cands[block.key] = block
        if len(cands) > 1:
            self.state(h).conflict = True
        if h == self.tip().id + 1:
            self._extend()
            return
        # before any successful query the preference is the earliest candidate
        current = self.preference_at(h)
        if current is None or current is block:
            return
        st = self.state(h)
        if st.counters or (block.t, block.o) >= (current.t, current.o):
            return
        parent = self.preference_at(h - 1)
        if block.parent is not None and parent is not None and block.parent.key == parent.key:
            st.preferred = block
            st.consecutive = 0
            self._truncate(h)

    # block generation

    def generate_block(self, now: float) -> Optional[Block]:
        if self.rng.random() >= self.p_block:
            return None
        tip = self.tip()
        block = Block(tip.id + 1, self.id, now, tip)
        self.learn(block)
        return block

    # querying

    def make_query(self) -> Optional[Query]:
        if not self.prefs:
            return None
        qid = self.next_qid
        self.next_qid += 1
        self.pending[qid] = _Pending(len(self.decided))
        return Query(qid, self.id, len(self.decided), tuple(self.prefs))

    def answer(self, query: Query) -> Response:
        seen = self.seen
        for b in query.chain:
            if id(b) not in seen:
                self.learn(b)
        return Response(query.qid, self.preferences(query.lo, len(query.chain)))

    def preferences(self, lo: int, width: int) -> tuple[Optional[Block], ...]:
        """Preferred blocks at heights ``lo .. lo + width - 1`` (None past the tip)."""
        d = len(self.decided)
        hi = lo + width
        if lo >= d:
            out = self.prefs[lo - d:hi - d]
        else:
            out = self.decided[lo:hi] + self.prefs[:max(0, hi - d)]
        if len(out) < width:
            out = out + [None] * (width - len(out))
        return tuple(out)

    def on_response(self, resp: Response, now: float, monitor: ChainMonitor | None) -> None:
        pend = self.pending.get(resp.qid)
        if pend is None:
            return
        seen = self.seen
        for b in resp.prefs:
            if b is not None and id(b) not in seen:
                self.learn(b)
        pend.answers.append(resp.prefs)
        if len(pend.answers) < self.k:
            return
        del self.pending[resp.qid]
        self._apply(pend)
        self._decide(now, monitor)

    def _apply(self, pend: _Pending) -> None:
        threshold = self.threshold
        for i, column in enumerate(zip(*pend.answers)):
            h = pend.lo + i
            if h < len(self.decided):
                continue
            counts = Counter(map(id, column))
            best = None
            for b in column:
                if b is None or counts[id(b)] < threshold:
                    continue
                if best is None or (counts[id(b)], -b.t, -b.o) > (counts[id(best)], -best.t,
                                                                     -best.o):
                    best = b
            if best is None:
                continue
            block = best
            # only a candidate on our preferred chain can be adopted
            parent = self.preference_at(h - 1)
            if parent is None or block.parent is None or block.parent.key != parent.key:
                continue
            st = self.state(h)
            if st.record_success(block):
                self._truncate(h)

    def _decide(self, now: float, monitor: ChainMonitor | None) -> None:
        while self.prefs:
            h = len(self.decided)
            st = self.sb.get(h)
            if st is None:
                return
            needed = self.beta2 if st.conflict else self.beta1
            if st.consecutive < needed:
                return
            block = self.prefs.pop(0)
            st.decided = True
            self.decided.append(block)
            self.known.pop(h, None)
            self.sb.pop(h, None)
            if monitor is not None:
                monitor.record_commit(self.id, block, now)


class AvalancheProtocol:
    name = "avalanche"

    def __init__(self, config: SimConfig, sim: Simulator, monitor: ChainMonitor) -> None:
        self.config = config
        self.sim = sim
        self.monitor = monitor
        self.n = config.n
        self.nodes = [AvalancheNode(i, config, derive_rng(config.seed, "node", i))
                      for i in range(self.n)]
        self.offsets = [start_offset(i, config.cycle_s, config.d1_s) for i in range(self.n)]
        self.gen_round = [0] * self.n
        sim.handler = self.handle

    def start(self) -> None:
        for i, off in enumerate(self.offsets):
            self.sim.schedule(off, i, _Cycle(0))

    def sample_peers(self, node: AvalancheNode) -> list[int]:
        others = self.n - 1
        k = self.config.k
        rand = node.rng.random
        if others <= 0:
            return []
        if others < k:
            picks = [int(rand() * others) for _ in range(k)]
        else:
            seen: set[int] = set()
            picks = []
            while len(picks) < k:
                p = int(rand() * others)
                if p not in seen:
                    seen.add(p)
                    picks.append(p)
        me = node.id
        return [p + 1 if p >= me else p for p in picks]

    def handle(self, target: int, msg) -> None:
        node = self.nodes[target]
        sim = self.sim
        kind = type(msg)
        if kind is Response:
            node.on_response(msg, sim.now, self.monitor)
        elif kind is Query:
            sim.send(msg.sender, node.answer(msg), node.rng)
        else:
            k = msg.k
            cfg = self.config
            peers = self.sample_peers(node)
            if peers:
                query = node.make_query()
                if query is not None:
                    for p in peers:
                        sim.send(p, query, node.rng)
            m = self.gen_round[target]
            if k * cfg.cycle_s >= m * cfg.t_block_s - 1e-9:
                self.gen_round[target] = m + 1
                node.generate_block(sim.now)
            sim.schedule(self.offsets[target] + (k + 1) * cfg.cycle_s, target, _Cycle(k + 1))
