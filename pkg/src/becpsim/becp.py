"""Blockchain epidemic consensus node.

Each node runs three things over one gossip exchange per cycle:

* a push-sum system-size estimate (value mass 1 at one initiator, weight 1
  everywhere, so ``weight / value`` tends to N);
* peer sampling (see :mod:`becpsim.membership`), piggybacked on the same
  messages;
* per-block phase tracking.  Every cached block carries two push-sum pairs.
  ``(vp, wp)`` counts nodes that hold the block; ``(va, wa)`` counts nodes
  that agree on it.  A node moves a block to AGREEMENT once its informed
  count stops changing for ``psi`` cycles, and to COMMIT once the agreeing
  count does the same.

Competing blocks at one height are settled by earliest creation time, then
lowest originator id.  Losing an already-held block removes it together
with everything built on it.

Block generation is attempted once per ``t_block_s``, on the first
activation at or after each boundary and after that activation's exchange.
"""

from __future__ import annotations

import math
import random
from collections.abc import Iterable
from enum import IntEnum
from typing import NamedTuple, Optional

from .chain import GENESIS, Block, BlockKey, ChainMonitor
from .config import SimConfig
from .engine import Simulator, derive_rng
from .membership import IsolatedNodeError, PeerCache, bootstrap, get_random_node, ncp_exchange

_TINY = 1e-12


class Phase(IntEnum):
    PROPAGATION = 0
    AGREEMENT = 1
    COMMIT = 2


PROPAGATION, AGREEMENT, COMMIT = Phase.PROPAGATION, Phase.AGREEMENT, Phase.COMMIT


class BlockTuple:
    """A node's cache entry for one block."""

    __slots__ = ("block", "vp", "wp", "va", "wa", "state", "prev_estimate",
                 "stable_cycles", "agreed", "children")

    def __init__(self, block: Block, vp: float, wp: float, va: float, wa: float,
                 state: Phase = PROPAGATION) -> None:
        self.block = block
        self.vp = vp
        self.wp = wp
        self.va = va
        self.wa = wa
        self.state = state
        self.prev_estimate: Optional[float] = None
        self.stable_cycles = 0
        self.agreed = state >= AGREEMENT
        self.children: list[BlockTuple] = []

    @property
    def id(self) -> int:
        return self.block.id

    @property
    def o(self) -> int:
        return self.block.o

    @property
    def t(self) -> float:
        return self.block.t

    @property
    def confirmed(self) -> bool:
        return self.state == COMMIT

    def pairs(self) -> tuple[float, float, float, float]:
        return self.vp, self.wp, self.va, self.wa

    def estimate(self) -> Optional[float]:
        num, den = (self.vp, self.wp) if self.state == PROPAGATION else (self.va, self.wa)
        if den <= 0:
            return None
        return num / den

    def __repr__(self) -> str:
        return (f"BlockTuple({self.block!r}, vp={self.vp:.4g}, wp={self.wp:.4g}, "
                f"va={self.va:.4g}, wa={self.wa:.4g}, {self.state.name})")


class TupleSummary(NamedTuple):
    block: Block
    vp: float
    wp: float
    va: float
    wa: float
    state: Phase


class CycleMessage(NamedTuple):
    sender: int
    ssep_value: float
    ssep_weight: float
    tuples: tuple[TupleSummary, ...]
    peers: tuple[int, ...]
    is_reply: bool


class MassLedger:
    """Bookkeeping for the aggregation audit.

    Tracks, per block, how much value was contributed (+1 per informed or
    agreeing node) and how much mass left circulation: dropped on receipt,
    evicted by backward, or frozen by a commit.
    """

    def __init__(self) -> None:
        self.contributed_v: dict[BlockKey, float] = {}
        self.contributed_a: dict[BlockKey, float] = {}
        self.retired: dict[BlockKey, list[float]] = {}
        self.blocks: dict[BlockKey, Block] = {}

    def created(self, block: Block) -> None:
        self.blocks[block.key] = block
        self.contributed_v[block.key] = 1.0
        self.contributed_a[block.key] = 0.0
        self.retired[block.key] = [0.0, 0.0, 0.0, 0.0]

    def add_v(self, key: BlockKey) -> None:
        self.contributed_v[key] += 1.0

    def add_a(self, key: BlockKey) -> None:
        self.contributed_a[key] += 1.0

    def retire(self, key: BlockKey, vp: float, wp: float, va: float, wa: float) -> None:
        r = self.retired[key]
        r[0] += vp
        r[1] += wp
        r[2] += va
        r[3] += wa


class BecpNode:
    def __init__(
        self,
        node_id: int,
        config: SimConfig,
        rng: random.Random,
        peers: PeerCache,
        monitor: ChainMonitor | None = None,
        ledger: MassLedger | None = None,
    ) -> None:
        self.id = node_id
        self.epsilon1 = config.epsilon1
        self.psi = config.psi
        self.p_block = config.p_block
        self.ncp_sample = config.ncp_sample
        self.rng = rng
        self.peers = peers
        self.monitor = monitor
        self.ledger = ledger
        root = BlockTuple(GENESIS, 0.0, 0.0, 0.0, 0.0, COMMIT)
        self.cache: dict[int, BlockTuple] = {0: root}
        self.pref = root
        self.last_confirmed = 0
        self.ssep_value = 0.0
        self.ssep_weight = 1.0

    # size estimation

    def get_system_size(self) -> Optional[float]:
        """``weight / value``, or ``None`` while no value mass has arrived."""
        if self.ssep_value <= 0.0 or self.ssep_weight <= 0.0:
            return None
        return self.ssep_weight / self.ssep_value

    # cache views

    def unconfirmed(self) -> list[BlockTuple]:
        cache = self.cache
        return [cache[h] for h in range(self.last_confirmed + 1, self.pref.block.id + 1)]

    def confirmed_chain(self) -> list[Block]:
        return [self.cache[h].block for h in range(self.last_confirmed + 1)]

    # block generation

    def generate_block(self, now: float) -> Optional[Block]:
        """One generation attempt; returns the new block or ``None``."""
        if self.rng.random() >= self.p_block:
            return None
        height = self.pref.block.id + 1
        existing = self.cache.get(height)
        if existing is not None and existing.block.o == self.id:
            return None
        block = Block(height, self.id, now, self.pref.block)
        tup = BlockTuple(block, 1.0, 1.0, 0.0, 1.0)
        self.pref.children.append(tup)
        self.cache[height] = tup
        self.pref = tup
        if self.ledger is not None:
            self.ledger.created(block)
        return block

    # duplicate resolution

    def backward(self, tup: BlockTuple) -> list[BlockTuple]:
        """Remove ``tup`` and every descendant from the cache; returns them."""
        if tup.state == COMMIT:
            raise ValueError(f"cannot discard confirmed {tup!r}")
        removed = []
        stack = [(tup, False)]
        while stack:
            node, expanded = stack.pop()
            if not expanded:
                stack.append((node, True))
                stack.extend((child, False) for child in node.children)
                continue
            # children first, then the node itself
            if self.cache.get(node.block.id) is node:
                del self.cache[node.block.id]
            removed.append(node)
            if self.ledger is not None:
                self.ledger.retire(node.block.key, node.vp, node.wp, node.va, node.wa)
        parent = self.cache.get(tup.block.id - 1)
        if parent is not None and tup in parent.children:
            parent.children.remove(tup)
        return removed

    def _drop(self, s: TupleSummary) -> None:
        if self.ledger is not None:
            self.ledger.retire(s.block.key, s.vp, s.wp, s.va, s.wa)

    def _admit(self, s: TupleSummary, parent: BlockTuple) -> BlockTuple:
        tup = BlockTuple(s.block, s.vp + 1.0, s.wp, s.va, s.wa)
        ledger = self.ledger
        if ledger is not None:
            ledger.add_v(s.block.key)
        if s.state == AGREEMENT:
            # joining a block that is already past propagation: agree right away
            tup.state = AGREEMENT
            tup.va += 1.0
            tup.agreed = True
            if ledger is not None:
                ledger.add_a(s.block.key)
        parent.children.append(tup)
        self.cache[s.block.id] = tup
        self.pref = tup
        return tup

    def resolve_duplicate(self, incoming: Iterable[TupleSummary]) -> None:
        cache = self.cache
        for s in incoming:
            b = s.block
            tau = cache.get(b.id)
            if tau is None:
                if b.parent_key == self.pref.block.key:
                    self._admit(s, self.pref)
                else:
                    self._drop(s)
                continue
            if tau.state == COMMIT:
                self._drop(s)
                continue
            cur = tau.block
            if b.key == cur.key:
                tau.vp += s.vp
                tau.wp += s.wp
                tau.va += s.va
                tau.wa += s.wa
                continue
            wins = b.t < cur.t or (b.t == cur.t and b.o < cur.o)
            if wins and b.parent_key == cur.parent_key:
                parent = cache[b.id - 1]
                self.backward(tau)
                self._admit(s, parent)
            else:
                self._drop(s)

    # per-cycle phase update

    def update_states(self, now: float) -> None:
        size = self.get_system_size()
        eps = self.epsilon1
        for h in range(self.last_confirmed + 1, self.pref.block.id + 1):
            tup = self.cache[h]
            if tup.state == COMMIT:
                continue
            e = tup.estimate()
            if e is None:
                tup.stable_cycles = 0
                tup.prev_estimate = None
                continue
            prev = tup.prev_estimate
            if prev is not None and abs(e - prev) / max(e, _TINY) < eps:
                tup.stable_cycles += 1
            else:
                tup.stable_cycles = 0
            tup.prev_estimate = e
            if tup.stable_cycles < self.psi or size is None or e < 0.5 * size:
                continue
            if tup.state == PROPAGATION:
                tup.state = AGREEMENT
                if not tup.agreed:
                    tup.va += 1.0
                    tup.agreed = True
                    if self.ledger is not None:
                        self.ledger.add_a(tup.block.key)
                tup.stable_cycles = 0
                tup.prev_estimate = None
            else:
                self.commit(tup, now)

    def commit(self, tup: BlockTuple, now: float) -> None:
        """Confirm ``tup`` and any unconfirmed ancestors, lowest first."""
        for h in range(self.last_confirmed + 1, tup.block.id + 1):
            t = self.cache[h]
            t.state = COMMIT
            if self.ledger is not None:
                self.ledger.retire(t.block.key, t.vp, t.wp, t.va, t.wa)
            if self.monitor is not None:
                self.monitor.record_commit(self.id, t.block, now)
        self.last_confirmed = tup.block.id

    # gossip

    def make_message(self, is_reply: bool) -> CycleMessage:
        """Halve every local pair and package the halves for one peer."""
        self.ssep_value *= 0.5
        self.ssep_weight *= 0.5
        summaries = []
        for tup in self.unconfirmed():
            tup.vp *= 0.5
            tup.wp *= 0.5
            tup.va *= 0.5
            tup.wa *= 0.5
            summaries.append(TupleSummary(tup.block, tup.vp, tup.wp, tup.va, tup.wa, tup.state))
        return CycleMessage(self.id, self.ssep_value, self.ssep_weight, tuple(summaries),
                            self.peers.sample(self.ncp_sample, self.rng), is_reply)

    def on_cycle(self, now: float) -> Optional[tuple[int, CycleMessage]]:
        self.update_states(now)
        try:
            peer = get_random_node(self.peers, self.rng)
        except IsolatedNodeError:
            return None
        return peer, self.make_message(False)

    def on_message(self, msg: CycleMessage) -> Optional[CycleMessage]:
        """Merge an incoming exchange; returns the reply for a push."""
        self.ssep_value += msg.ssep_value
        self.ssep_weight += msg.ssep_weight
        self.resolve_duplicate(msg.tuples)
        ncp_exchange(self.peers, msg.peers, msg.sender, self.rng)
        if msg.is_reply:
            return None
        return self.make_message(True)


def ssep_init(nodes: list[BecpNode], initiator: int = 0) -> None:
    for node in nodes:
        node.ssep_value = 1.0 if node.id == initiator else 0.0
        node.ssep_weight = 1.0


def start_offset(node_id: int, cycle_s: float, d1_s: float) -> float:
    """Stagger initial activations in ``d1_s`` steps across one cycle."""
    slots = max(1, math.ceil(cycle_s / d1_s - 1e-9))
    return d1_s * (node_id % slots)


class _Tick(NamedTuple):
    k: int  # activation index


class BecpProtocol:
    """Wires :class:`BecpNode` instances to a :class:`Simulator`."""

    name = "becp"

    def __init__(self, config: SimConfig, sim: Simulator, monitor: ChainMonitor,
                 audit: bool = False) -> None:
        self.config = config
        self.sim = sim
        self.monitor = monitor
        self.ledger = MassLedger() if audit else None
        caches = bootstrap(config.n, config.n_cache, derive_rng(config.seed, "bootstrap"))
        self.nodes = [
            BecpNode(i, config, derive_rng(config.seed, "node", i), caches[i], monitor,
                     self.ledger)
            for i in range(config.n)
        ]
        ssep_init(self.nodes)
        self.offsets = [start_offset(i, config.cycle_s, config.d1_s) for i in range(config.n)]
        self.gen_round = [0] * config.n
        sim.handler = self.handle

    def start(self) -> None:
        for i, off in enumerate(self.offsets):
            self.sim.schedule(off, i, _Tick(0))

    def handle(self, target: int, payload) -> None:
        node = self.nodes[target]
        sim = self.sim
        if type(payload) is CycleMessage:
            reply = node.on_message(payload)
            if reply is not None:
                sim.send(payload.sender, reply, node.rng)
            return
        k = payload.k
        cfg = self.config
        if self.ledger is not None and target == 0:
            self.monitor.violations.extend(self.check_mass())
        out = node.on_cycle(sim.now)
        if out is not None:
            sim.send(out[0], out[1], node.rng)
        # generation rides on the first activation at or after each boundary
        m = self.gen_round[target]
        if k * cfg.cycle_s >= m * cfg.t_block_s - 1e-9:
            self.gen_round[target] = m + 1
            node.generate_block(sim.now)
        sim.schedule(self.offsets[target] + (k + 1) * cfg.cycle_s, target, _Tick(k + 1))

    # audit

    def check_mass(self, rel_tol: float = 1e-9) -> list[str]:
        """Conservation check over node caches, in-flight messages and the ledger."""
        if self.ledger is None:
            return []
        ledger = self.ledger
        totals: dict[BlockKey, list[float]] = {k: list(v) for k, v in ledger.retired.items()}
        ssep_v = ssep_w = 0.0
        for node in self.nodes:
            ssep_v += node.ssep_value
            ssep_w += node.ssep_weight
            for tup in node.unconfirmed():
                acc = totals[tup.block.key]
                acc[0] += tup.vp
                acc[1] += tup.wp
                acc[2] += tup.va
                acc[3] += tup.wa
        for ev in self.sim.pending():
            msg = ev.payload
            if type(msg) is not CycleMessage:
                continue
            ssep_v += msg.ssep_value
            ssep_w += msg.ssep_weight
            for s in msg.tuples:
                acc = totals[s.block.key]
                acc[0] += s.vp
                acc[1] += s.wp
                acc[2] += s.va
                acc[3] += s.wa
        errors = []
        now = self.sim.now

        def off(got: float, want: float) -> bool:
            return abs(got - want) > rel_tol * max(1.0, abs(want))

        n = len(self.nodes)
        if n and (off(ssep_v, 1.0) or off(ssep_w, float(n))):
            errors.append(f"t={now:.3f}: size-estimate mass ({ssep_v}, {ssep_w}) != (1, {n})")
        for key, (vp, wp, va, wa) in totals.items():
            want = (ledger.contributed_v[key], 1.0, ledger.contributed_a[key], 1.0)
            for label, got, exp in zip(("vp", "wp", "va", "wa"), (vp, wp, va, wa), want):
                if off(got, exp):
                    errors.append(f"t={now:.3f}: block {key} {label} mass {got} != {exp}")
        return errors
