"""Run metrics: latency samples, inter-spike intervals, counters, link statistics,
and deterministic report serialization (JSON plus CSV side files)."""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .engine import SimTime
from .pipeline import RoutedEvent


@dataclass
class DeliverySample:
    dest_node: int
    dest_neuron: int
    source_node: int
    source_neuron: int
    emit_time_ns: SimTime
    apply_time_ns: SimTime
    deadline_ns: SimTime

    @property
    def latency_ns(self) -> SimTime:
        return self.apply_time_ns - self.emit_time_ns


@dataclass
class MetricsCollector:
    """Accumulates per-delivery observations; doubles as the deadline auditor."""

    deliveries: list[DeliverySample] = field(default_factory=list)
    deadline_violations: int = 0

    def on_delivery(self, node: int, event: RoutedEvent, applied_at: SimTime) -> None:
        if applied_at > event.deadline_ns:
            self.deadline_violations += 1
        self.deliveries.append(
            DeliverySample(
                dest_node=node,
                dest_neuron=event.dest_neuron,
                source_node=event.source_node,
                source_neuron=event.source_neuron,
                emit_time_ns=event.emit_time_ns,
                apply_time_ns=applied_at,
                deadline_ns=event.deadline_ns,
            )
        )

    def latencies(self) -> list[SimTime]:
        return [s.latency_ns for s in self.deliveries]


def percentile(values: list[int], q: float) -> int:
    """Nearest-rank percentile over a non-empty list (deterministic, no interpolation)."""
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def latency_summary(latencies: list[SimTime]) -> dict:
    if not latencies:
        return {"count": 0}
    return {
        "count": len(latencies),
        "mean_ns": statistics.fmean(latencies),
        "min_ns": min(latencies),
        "max_ns": max(latencies),
        "p50_ns": percentile(latencies, 50),
        "p90_ns": percentile(latencies, 90),
        "p99_ns": percentile(latencies, 99),
    }


def isi_summary(samples: list[tuple[int, SimTime]]) -> dict:
    intervals = [isi for _, isi in samples]
    if not intervals:
        return {"count": 0}
    return {
        "count": len(intervals),
        "median_ns": statistics.median(intervals),
        "mean_ns": statistics.fmean(intervals),
    }


def write_report(report: dict, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return path


def write_latency_csv(deliveries: list[DeliverySample], out_dir: Path) -> Path:
    path = out_dir / "latency_samples.csv"
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["source_node", "source_neuron", "dest_node", "dest_neuron",
             "emit_time_ns", "apply_time_ns", "latency_ns"]
        )
        for s in deliveries:
            writer.writerow(
                [s.source_node, s.source_neuron, s.dest_node, s.dest_neuron,
                 s.emit_time_ns, s.apply_time_ns, s.latency_ns]
            )
    return path


def write_isi_csv(samples_by_node: dict[int, list[tuple[int, SimTime]]], out_dir: Path) -> Path:
    path = out_dir / "isi_samples.csv"
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["node", "neuron", "isi_ns"])
        for node in sorted(samples_by_node):
            for neuron, isi in samples_by_node[node]:
                writer.writerow([node, neuron, isi])
    return path


def write_spikes_csv(rows_by_node: dict[int, list[tuple[int, int, SimTime, int]]], out_dir: Path) -> Path:
    path = out_dir / "spikes.csv"
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["chip_id", "neuron", "emit_time_ns", "timestamp8"])
        for node in sorted(rows_by_node):
            writer.writerows(rows_by_node[node])
    return path


def write_sweep_csv(rows: list[dict], out_dir: Path) -> Path:
    path = out_dir / "sweep.csv"
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bucket_capacity", "header_overhead_ratio", "dropped_expired_tx", "mean_latency_ns"])
        for row in rows:
            writer.writerow(
                [row["bucket_capacity"], row["header_overhead_ratio"],
                 row["dropped_expired_tx"], row["mean_latency_ns"]]
            )
    return path
