"""Blocks and the run-wide commit monitor shared by every protocol."""

from __future__ import annotations

import hashlib
from typing import Optional

BlockKey = tuple  # (id, originator, created_at)


class Block:
    """Immutable chain element.

    ``id`` is the height.  Identity is the ``(id, o, t)`` triple, which also
    serves as the parent reference in place of a hash.
    """

    __slots__ = ("id", "o", "t", "parent", "key")

    def __init__(self, id: int, o: int, t: float, parent: Optional["Block"] = None) -> None:
        if parent is None and id != 0:
            raise ValueError("only the genesis block may lack a parent")
        if parent is not None and id != parent.id + 1:
            raise ValueError(f"block at height {id} cannot extend height {parent.id}")
        self.id = id
        self.o = o
        self.t = t
        self.parent = parent
        self.key: BlockKey = (id, o, t)

    @property
    def parent_key(self) -> BlockKey | None:
        return None if self.parent is None else self.parent.key

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Block) and other.key == self.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"Block(id={self.id}, o={self.o}, t={self.t:.4f})"

    def ancestors(self):
        b = self.parent
        while b is not None:
            yield b
            b = b.parent


GENESIS = Block(0, -1, 0.0)


class ChainMonitor:
    """Records every (node, block) commit and checks safety as it goes.

    Violations are collected rather than raised so a run can finish and
    report all of them.
    """

    def __init__(self, n: int) -> None:
        self.n = n
        self.committed: dict[int, Block] = {0: GENESIS}
        self.first_commit_at: dict[int, float] = {0: 0.0}
        self.chains: list[list[Block]] = [[GENESIS] for _ in range(n)]
        self.latency_samples: list[float] = []
        self.violations: list[str] = []

    def record_commit(self, node: int, block: Block, now: float) -> None:
        chain = self.chains[node]
        tip = chain[-1]
        if block.id != tip.id + 1 or block.parent_key != tip.key:
            self.violations.append(
                f"node {node}: committed {block!r} on top of {tip!r} at t={now:.4f}"
            )
        chain.append(block)
        known = self.committed.get(block.id)
        if known is None:
            self.committed[block.id] = block
            self.first_commit_at[block.id] = now
        elif known.key != block.key:
            self.violations.append(
                f"height {block.id}: {block!r} committed at node {node} "
                f"but {known!r} committed elsewhere"
            )
        self.latency_samples.append(now - block.t)

    @property
    def confirmed_items(self) -> int:
        return len(self.committed) - 1

    def digests(self) -> list[str]:
        out = []
        for chain in self.chains:
            h = hashlib.sha256()
            for b in chain:
                h.update(repr(b.key).encode())
            out.append(h.hexdigest()[:16])
        return out

    def prefix_consistent(self) -> bool:
        longest = max(self.chains, key=len, default=[])
        return all(c == longest[: len(c)] for c in self.chains)
