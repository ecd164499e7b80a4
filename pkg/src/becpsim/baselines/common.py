from __future__ import annotations

import random
from typing import Any

from ..engine import Simulator


def broadcast(sim: Simulator, src: int, n: int, payload: Any, rng: random.Random,
              include_self: bool = True) -> None:
    """Send ``payload`` to every other node; the sender's copy uses loopback.

    Counts ``n - 1`` network messages.
    """
    send = sim.send
    for dst in range(n):
        if dst != src:
            send(dst, payload, rng)
    if include_self:
        sim.loopback(src, payload, rng)


def majority(n: int) -> int:
    return n // 2 + 1
