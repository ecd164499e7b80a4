"""Comparison protocols, instrumented the same way as BECP."""

from .avalanche import AvalancheProtocol
from .paxos import PaxosProtocol
from .pbft import PbftProtocol
from .raft import RaftProtocol

__all__ = ["AvalancheProtocol", "PaxosProtocol", "PbftProtocol", "RaftProtocol"]
