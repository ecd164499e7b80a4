"""Run reports, the three headline metrics, and CSV/JSON emission."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

CSV_COLUMNS = ("protocol", "n", "seed", "duration_s", "confirmed_items", "messages_sent",
               "avg_latency_s")


@dataclass
class ExperimentReport:
    protocol: str
    n: int
    seed: int
    duration_s: float
    confirmed_items: int = 0
    messages_sent: int = 0
    latency_samples: list[float] = field(default_factory=list)
    digests: list[str] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    prefix_consistent: bool = True
    chain_length: int = 0  # longest per-node confirmed chain, genesis excluded

    def summary(self) -> dict:
        return {
            "protocol": self.protocol,
            "n": self.n,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "confirmed_items": throughput(self),
            "messages_sent": overhead(self),
            "avg_latency_s": avg_latency(self),
        }


def throughput(report: ExperimentReport) -> int:
    """Blocks confirmed anywhere in the network during the run."""
    return report.confirmed_items


def overhead(report: ExperimentReport) -> int:
    return report.messages_sent


def avg_latency(report: ExperimentReport) -> float:
    """Mean of commit time minus block creation time over (node, block) commits."""
    samples = report.latency_samples
    if not samples:
        return 0.0
    return sum(samples) / len(samples)


def _csv_row(report: ExperimentReport) -> list[str]:
    s = report.summary()
    return [s["protocol"], str(s["n"]), str(s["seed"]), repr(float(s["duration_s"])),
            str(s["confirmed_items"]), str(s["messages_sent"]), repr(s["avg_latency_s"])]


def write_csv(reports: Iterable[ExperimentReport], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        writer.writerow(_csv_row(report))


def to_csv(reports: Iterable[ExperimentReport]) -> str:
    buf = io.StringIO()
    write_csv(reports, buf)
    return buf.getvalue()


def to_json(reports: Iterable[ExperimentReport]) -> str:
    rows = []
    for r in reports:
        row = r.summary()
        row["latency_samples"] = list(r.latency_samples)
        row["digests"] = list(r.digests)
        row["violations"] = list(r.violations)
        row["prefix_consistent"] = r.prefix_consistent
        rows.append(row)
    return json.dumps(rows, indent=2) + "\n"


def emit_report(reports: ExperimentReport | Iterable[ExperimentReport], fmt: str = "csv",
                path: str | Path | None = None) -> str:
    """Render reports as ``csv`` or ``json``; also writes ``path`` if given."""
    if isinstance(reports, ExperimentReport):
        reports = [reports]
    reports = list(reports)
    if fmt == "csv":
        text = to_csv(reports)
    elif fmt == "json":
        text = to_json(reports)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_csv(text: str) -> list[dict]:
    """Parse emitted CSV back into summary dicts with numeric fields typed."""
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames!r}")
    for raw in reader:
        rows.append({
            "protocol": raw["protocol"],
            "n": int(raw["n"]),
            "seed": int(raw["seed"]),
            "duration_s": float(raw["duration_s"]),
            "confirmed_items": int(raw["confirmed_items"]),
            "messages_sent": int(raw["messages_sent"]),
            "avg_latency_s": float(raw["avg_latency_s"]),
        })
    return rows


def report_dict(report: ExperimentReport) -> dict:
    return asdict(report)
