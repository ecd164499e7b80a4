"""One-call experiment runs and seed sweeps."""

from __future__ import annotations

from typing import Iterable, Sequence

from .baselines import AvalancheProtocol, PaxosProtocol, PbftProtocol, RaftProtocol
from .becp import BecpProtocol
from .chain import ChainMonitor
from .config import SimConfig
from .engine import LatencyModel, Simulator
from .metrics import ExperimentReport, avg_latency, overhead, throughput

PROTOCOL_CLASSES = {
    "becp": BecpProtocol,
    "avalanche": AvalancheProtocol,
    "paxos": PaxosProtocol,
    "raft": RaftProtocol,
    "pbft": PbftProtocol,
}


def build(config: SimConfig, audit: bool = False):
    """Validate ``config`` and wire up (simulator, monitor, protocol) without running."""
    config.validate()
    sim = Simulator(config.duration_s, LatencyModel(config.latency_min_s, config.latency_max_s))
    monitor = ChainMonitor(config.n)
    cls = PROTOCOL_CLASSES[config.protocol]
    if cls is BecpProtocol:
        protocol = cls(config, sim, monitor, audit=audit)
    else:
        protocol = cls(config, sim, monitor)
    return sim, monitor, protocol


def run_experiment(config: SimConfig, audit: bool = False) -> ExperimentReport:
    """Run one deterministic simulation; raises ``ConfigError`` on a bad config.

    ``audit`` turns on the per-cycle mass-conservation check (BECP only);
    any failures land in ``report.violations``.
    """
    sim, monitor, protocol = build(config, audit)
    # a zero-length run is empty, even though events due at t=end would count
    if config.n > 0 and config.duration_s > 0:
        protocol.start()
        sim.run()
    return ExperimentReport(
        protocol=config.protocol,
        n=config.n,
        seed=config.seed,
        duration_s=float(config.duration_s),
        confirmed_items=monitor.confirmed_items,
        messages_sent=sim.messages_sent,
        latency_samples=list(monitor.latency_samples),
        digests=monitor.digests(),
        violations=list(monitor.violations),
        prefix_consistent=monitor.prefix_consistent(),
        chain_length=max((len(c) - 1 for c in monitor.chains), default=0),
    )


def run_sweep(config: SimConfig, seeds: Iterable[int]) -> list[ExperimentReport]:
    """One run per seed, in the given order."""
    return [run_experiment(config.replace(seed=s)) for s in seeds]


def sweep_means(reports: Sequence[ExperimentReport]) -> dict[str, float]:
    if not reports:
        raise ValueError("no reports to average")
    k = len(reports)
    return {
        "confirmed_items": sum(throughput(r) for r in reports) / k,
        "messages_sent": sum(overhead(r) for r in reports) / k,
        "avg_latency_s": sum(avg_latency(r) for r in reports) / k,
    }
