"""Command-line entry point: ``becpsim --protocol becp --nodes 500 ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from .config import PROTOCOLS, ConfigError, SimConfig, from_mapping, irrelevant_overrides, \
    load_config
from .harness import run_experiment
from .metrics import emit_report

log = logging.getLogger("becpsim")

# flag name -> SimConfig field, for the per-parameter overrides
PARAM_FLAGS = {
    "cycle": "cycle_s",
    "d1": "d1_s",
    "t-block": "t_block_s",
    "p-block": "p_block",
    "epsilon1": "epsilon1",
    "psi": "psi",
    "n-cache": "n_cache",
    "ncp-sample": "ncp_sample",
    "k": "k",
    "alpha": "alpha",
    "beta1": "beta1",
    "beta2": "beta2",
    "timeout-min": "timeout_min_s",
    "timeout-max": "timeout_max_s",
    "latency-min": "latency_min_s",
    "latency-max": "latency_max_s",
}


def parse_seeds(text: str) -> list[int]:
    """``"3"`` -> [3]; ``"1-5"`` -> [1, 2, 3, 4, 5]; ``"1,4,7"`` -> [1, 4, 7]."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad seed range {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    defaults = SimConfig()
    p = argparse.ArgumentParser(
        prog="becpsim",
        description="Simulate BECP or a baseline consensus protocol and report "
                    "throughput, message count and latency.",
    )
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--nodes", type=int, dest="n", help=f"node count (default {defaults.n})")
    p.add_argument("--duration", type=float, dest="duration_s",
                   help=f"simulated seconds (default {defaults.duration_s:g})")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=parse_seeds, help="seed sweep such as 1-5 (overrides --seed)")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--audit", action="store_true",
                   help="check aggregation mass conservation every cycle (becp)")
    p.add_argument("-v", "--verbose", action="store_true")
    params = p.add_argument_group("protocol parameters")
    for flag, name in PARAM_FLAGS.items():
        value = getattr(defaults, name)
        params.add_argument(f"--{flag}", dest=name, type=type(value),
                            help=f"default {value:g}")
    return p


def config_from_args(args: argparse.Namespace) -> SimConfig:
    base = load_config(args.config) if args.config else SimConfig()
    overrides = {}
    for name in ("protocol", "n", "duration_s", "seed", *PARAM_FLAGS.values()):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return from_mapping(overrides, base).validate()


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        config = config_from_args(args)
    except (ConfigError, TypeError) as exc:
        print(f"becpsim: config error: {exc}", file=sys.stderr)
        return 2
    for name in irrelevant_overrides(config):
        log.warning("%s is ignored by protocol %s", name, config.protocol)

    seeds = args.seeds or [config.seed]
    reports = []
    for seed in seeds:
        log.info("running %s n=%d duration=%gs seed=%d", config.protocol, config.n,
                 config.duration_s, seed)
        reports.append(run_experiment(config.replace(seed=seed), audit=args.audit))
    text = emit_report(reports, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    for r in reports:
        for v in r.violations:
            log.error("seed %d: %s", r.seed, v)
    return 1 if any(r.violations for r in reports) else 0


if __name__ == "__main__":
    raise SystemExit(main())
