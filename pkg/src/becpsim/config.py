"""Run configuration with the experiment-settings defaults.

Config files are flat ``key = value`` text; ``#`` starts a comment.  Keys
are :class:`SimConfig` field names (dashes are accepted for underscores).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

PROTOCOLS = ("becp", "avalanche", "paxos", "raft", "pbft")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    protocol: str = "becp"
    n: int = 500
    duration_s: float = 600.0
    seed: int = 1
    cycle_s: float = 0.7
    d1_s: float = 0.1
    t_block_s: float = 10.0
    p_block: float = 0.05
    epsilon1: float = 0.01
    psi: int = 3
    n_cache: int = 50
    ncp_sample: int = 8
    k: int = 10
    alpha: float = 0.8
    beta1: int = 50
    beta2: int = 150
    timeout_min_s: float = 1.0
    timeout_max_s: float = 1.2
    latency_min_s: float = 0.01
    latency_max_s: float = 0.3

    def validate(self) -> "SimConfig":
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if self.n < 0:
            raise ConfigError("n must be >= 0")
        if not math.isfinite(self.duration_s) or self.duration_s < 0:
            raise ConfigError("duration_s must be a finite value >= 0")
        for name in ("cycle_s", "d1_s", "t_block_s", "epsilon1", "psi", "n_cache",
                     "ncp_sample", "k", "alpha", "beta1", "beta2", "timeout_min_s",
                     "latency_max_s"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if not 0.0 <= self.p_block <= 1.0:
            raise ConfigError("p_block must lie in [0, 1]")
        if self.alpha > 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.beta1 > self.beta2:
            raise ConfigError("beta1 must not exceed beta2")
        if self.timeout_max_s < self.timeout_min_s:
            raise ConfigError("timeout range is empty")
        if not 0.0 <= self.latency_min_s < self.latency_max_s:
            raise ConfigError("latency range must satisfy 0 <= min < max")
        return self

    def replace(self, **changes: Any) -> "SimConfig":
        return dataclasses.replace(self, **changes)


# Which settings each protocol actually reads.
RELEVANT: dict[str, frozenset[str]] = {
    "becp": frozenset({"cycle_s", "d1_s", "t_block_s", "p_block", "epsilon1", "psi",
                       "n_cache", "ncp_sample"}),
    "avalanche": frozenset({"cycle_s", "d1_s", "t_block_s", "p_block", "k", "alpha",
                            "beta1", "beta2"}),
    "paxos": frozenset({"t_block_s"}),
    "pbft": frozenset({"t_block_s"}),
    "raft": frozenset({"cycle_s", "t_block_s", "timeout_min_s", "timeout_max_s"}),
}
_COMMON = frozenset({"protocol", "n", "duration_s", "seed", "latency_min_s", "latency_max_s"})


def irrelevant_overrides(config: SimConfig) -> list[str]:
    """Fields changed from their defaults that ``config.protocol`` ignores."""
    default = SimConfig()
    used = RELEVANT.get(config.protocol, frozenset()) | _COMMON
    return [
        f.name
        for f in dataclasses.fields(SimConfig)
        if f.name not in used and getattr(config, f.name) != getattr(default, f.name)
    ]


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SimConfig)}


def coerce(key: str, raw: Any) -> Any:
    name = key.strip().replace("-", "_")
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[name]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind}") from None
    return text


def from_mapping(values: Mapping[str, Any], base: SimConfig | None = None) -> SimConfig:
    changes = {key.strip().replace("-", "_"): coerce(key, v) for key, v in values.items()}
    return dataclasses.replace(base or SimConfig(), **changes)


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path, base: SimConfig | None = None) -> SimConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return from_mapping(parse_config_text(text), base)
