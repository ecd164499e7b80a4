"""Deterministic discrete-event core.

One run owns one :class:`Simulator`: a virtual clock, a binary-heap event
queue ordered by ``(deliver_at, seq)`` and a WAN latency model.  Protocols
register a single handler that receives ``(target, payload)`` for every
dequeued event.  Network sends go through :meth:`Simulator.send`, which is
the only place the message counter is incremented.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import random
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple


class SchedulingError(RuntimeError):
    """Raised when an event would be scheduled before the current clock."""


class SimEvent(NamedTuple):
    deliver_at: float
    seq: int
    target: int
    payload: Any


@dataclass(frozen=True)
class LatencyModel:
    """Uniform one-way delay in ``[min_s, max_s)``."""

    min_s: float = 0.01
    max_s: float = 0.3

    def __post_init__(self) -> None:
        if not 0 <= self.min_s < self.max_s:
            raise ValueError(f"bad latency bounds [{self.min_s}, {self.max_s})")

    @property
    def mean(self) -> float:
        return (self.min_s + self.max_s) / 2

    def sample(self, rng: random.Random) -> float:
        d = self.min_s + (self.max_s - self.min_s) * rng.random()
        # rounding can land exactly on the open upper bound
        while d >= self.max_s:
            d = self.min_s + (self.max_s - self.min_s) * rng.random()
        return d


DEFAULT_LATENCY = LatencyModel()


def sample_latency(rng: random.Random, model: LatencyModel | None = None) -> float:
    return (model or DEFAULT_LATENCY).sample(rng)


def derive_rng(seed: int, *labels: object) -> random.Random:
    """Independent substream for ``(seed, *labels)``.

    Each node gets ``derive_rng(seed, "node", node_id)`` so that its draws do
    not depend on how other nodes' events interleave.
    """
    key = ":".join(str(x) for x in (seed, *labels)).encode()
    digest = hashlib.sha256(key).digest()
    return random.Random(int.from_bytes(digest[:16], "big"))


Handler = Callable[[int, Any], None]


class Simulator:
    """Virtual clock plus ordered event queue.

    Events with ``deliver_at <= end`` are executed; anything later is left in
    the queue and never dispatched.  ``trace``, when set, is called with each
    event right before it is handled.
    """

    def __init__(
        self,
        end: float,
        latency: LatencyModel | None = None,
        handler: Handler | None = None,
    ) -> None:
        self.now = 0.0
        self.end = end
        self.latency = latency or LatencyModel()
        self.handler = handler
        self.messages_sent = 0
        self.events_processed = 0
        self.trace: Callable[[SimEvent], None] | None = None
        self._queue: list[SimEvent] = []
        self._seq = itertools.count()

    def schedule(self, deliver_at: float, target: int, payload: Any) -> None:
        if deliver_at < self.now:
            raise SchedulingError(
                f"event for node {target} at t={deliver_at} is before now={self.now}"
            )
        heapq.heappush(self._queue, SimEvent(deliver_at, next(self._seq), target, payload))

    def schedule_in(self, delay: float, target: int, payload: Any) -> None:
        self.schedule(self.now + delay, target, payload)

    def send(self, dst: int, payload: Any, rng: random.Random) -> float:
        """Put a network message in flight; returns its delivery time."""
        self.messages_sent += 1
        at = self.now + self.latency.sample(rng)
        heapq.heappush(self._queue, SimEvent(at, next(self._seq), dst, payload))
        return at

    def loopback(self, node: int, payload: Any, rng: random.Random) -> float:
        """Deliver a node's copy of its own broadcast.

        Travels with the same delay distribution but is not a network
        message, so it is not counted.
        """
        at = self.now + self.latency.sample(rng)
        heapq.heappush(self._queue, SimEvent(at, next(self._seq), node, payload))
        return at

    def pending(self) -> list[SimEvent]:
        return list(self._queue)

    def run(self) -> None:
        if self.handler is None:
            raise RuntimeError("no handler registered")
        queue = self._queue
        handler = self.handler
        end = self.end
        pop = heapq.heappop
        while queue:
            if queue[0].deliver_at > end:
                break
            ev = pop(queue)
            self.now = ev.deliver_at
            if self.trace is not None:
                self.trace(ev)
            self.events_processed += 1
            handler(ev.target, ev.payload)
        self.now = max(self.now, end)
