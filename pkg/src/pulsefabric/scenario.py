"""Experiment harness: scenario configuration, wiring, and the run loop.

A scenario wires chips, pulse pipelines, the torus fabric, and the host transport
together. Pipelines are configured exclusively through remote register access during
a simulated configuration phase; external spike trains then drive the source chips,
and the run drains to quiescence before metrics are collected.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import metrics, registers
from .chip import Chip, ChipConfig, NEURON_ADDRESS_SPACE
from .engine import Scheduler, SimTime, seeded_rng
from .fabric import Fabric, LinkConfig, TorusTopology
from .metrics import MetricsCollector
from .pipeline import Pipeline
from .transport import FpgaEndpoint, Host

SPIKE_RECORD = struct.Struct("<HHQB")  # node, neuron, emit_time_ns, timestamp8


class ConfigError(Exception):
    """Scenario configuration rejected; carries one diagnostic per violation."""

    def __init__(self, diagnostics: list[str]) -> None:
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


class InvariantViolation(Exception):
    """A run-time invariant (conservation, deadline safety) failed; carries the report."""

    def __init__(self, message: str, report: dict | None = None) -> None:
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class RouteSpec:
    source: int
    dest_neuron: int
    bucket: int
    axonal_delay_ns: int


@dataclass(frozen=True)
class BucketSpec:
    index: int
    dest_node: int
    capacity: int
    transit_budget_ns: int


@dataclass(frozen=True)
class InputSpec:
    neuron: int
    kind: str  # regular | poisson
    start_ns: int = 0
    period_ns: int = 0       # regular
    count: int = 0           # regular
    rate_hz: float = 0.0     # poisson
    duration_ns: int | None = None  # poisson; defaults to the run duration


@dataclass
class NodeSpec:
    address: int
    chip: ChipConfig
    routes: list[RouteSpec] = field(default_factory=list)
    buckets: list[BucketSpec] = field(default_factory=list)
    inputs: list[InputSpec] = field(default_factory=list)


@dataclass
class HostSpec:
    attach_node: int = 0
    ring_capacity: int = 512
    mtu: int = 4096
    poll_interval_ns: int = 10_000
    record_spikes: bool = True
    link_latency_ns: int | None = None


@dataclass
class ScenarioConfig:
    dims: tuple[int, int, int]
    nodes: list[NodeSpec]
    duration_ns: int
    tick_ns: int = 8
    lanes: int = 12
    lane_rate_bps: int = 8_400_000_000
    link_latency_ns: int = 600
    header_bytes: int = 16
    event_bytes: int = 8
    delivery_mode: str = "deadline"  # deadline | arrival
    drop_threshold: float | None = None
    host: HostSpec = field(default_factory=HostSpec)

    def to_dict(self) -> dict:
        return {
            "topology": {
                "dims": list(self.dims),
                "lanes": self.lanes,
                "lane_rate_bps": self.lane_rate_bps,
                "link_latency_ns": self.link_latency_ns,
            },
            "tick_ns": self.tick_ns,
            "packet": {"header_bytes": self.header_bytes, "event_bytes": self.event_bytes},
            "delivery_mode": self.delivery_mode,
            "duration_ns": self.duration_ns,
            "drop_threshold": self.drop_threshold,
            "host": {
                "attach_node": self.host.attach_node,
                "ring_capacity": self.host.ring_capacity,
                "mtu": self.host.mtu,
                "poll_interval_ns": self.host.poll_interval_ns,
                "record_spikes": self.host.record_spikes,
                "link_latency_ns": self.host.link_latency_ns,
            },
            "nodes": [
                {
                    "address": node.address,
                    "chip": {
                        "neuron_count": node.chip.neuron_count,
                        "integration_threshold": node.chip.integration_threshold,
                        "refractory_ns": node.chip.refractory_ns,
                        "max_events_per_cycle": node.chip.max_events_per_cycle,
                    },
                    "routes": [
                        {
                            "source": r.source,
                            "dest_neuron": r.dest_neuron,
                            "bucket": r.bucket,
                            "axonal_delay_ns": r.axonal_delay_ns,
                        }
                        for r in node.routes
                    ],
                    "buckets": [
                        {
                            "index": b.index,
                            "dest_node": b.dest_node,
                            "capacity": b.capacity,
                            "transit_budget_ns": b.transit_budget_ns,
                        }
                        for b in node.buckets
                    ],
                    "inputs": [
                        {
                            "neuron": i.neuron,
                            "kind": i.kind,
                            "start_ns": i.start_ns,
                            "period_ns": i.period_ns,
                            "count": i.count,
                            "rate_hz": i.rate_hz,
                            "duration_ns": i.duration_ns,
                        }
                        for i in node.inputs
                    ],
                }
                for node in self.nodes
            ],
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(canonical).hexdigest()


def _get(data: dict, key: str, default: Any = None) -> Any:
    value = data.get(key, default)
    return default if value is None else value


def parse_config(data: dict) -> ScenarioConfig:
    """Parse and fully validate a scenario dict; raises ConfigError listing every
    violation found (structural first, then referential)."""
    diagnostics: list[str] = []

    topo = _get(data, "topology", {})
    dims_raw = _get(topo, "dims", [1, 1, 1])
    dims = tuple(int(d) for d in dims_raw) if len(dims_raw) == 3 else (0, 0, 0)
    if len(dims_raw) != 3 or any(d < 1 for d in dims):
        diagnostics.append("topology.dims: must be three positive integers")
    node_count = dims[0] * dims[1] * dims[2] if len(dims) == 3 else 0
    if node_count > 1 << 16:
        diagnostics.append("topology.dims: torus exceeds the 16-bit node address space")

    lanes = int(_get(topo, "lanes", 12))
    if not 1 <= lanes <= 12:
        diagnostics.append("topology.lanes: must be in [1, 12]")
    lane_rate = int(_get(topo, "lane_rate_bps", 8_400_000_000))
    if lane_rate <= 0:
        diagnostics.append("topology.lane_rate_bps: must be positive")
    link_latency = int(_get(topo, "link_latency_ns", 600))
    if link_latency < 0:
        diagnostics.append("topology.link_latency_ns: must be >= 0")

    tick_ns = int(_get(data, "tick_ns", 8))
    if tick_ns <= 0:
        diagnostics.append("tick_ns: must be positive")

    duration_ns = int(_get(data, "duration_ns", 0))
    if duration_ns <= 0:
        diagnostics.append("duration_ns: must be positive")

    packet = _get(data, "packet", {})
    header_bytes = int(_get(packet, "header_bytes", 16))
    event_bytes = int(_get(packet, "event_bytes", 8))
    if header_bytes < 0 or event_bytes < 1:
        diagnostics.append("packet: header_bytes must be >= 0 and event_bytes >= 1")

    delivery_mode = _get(data, "delivery_mode", "deadline")
    if delivery_mode not in ("deadline", "arrival"):
        diagnostics.append(f"delivery_mode: {delivery_mode!r} is not 'deadline' or 'arrival'")

    drop_threshold = data.get("drop_threshold")
    if drop_threshold is not None and not 0.0 <= float(drop_threshold) <= 1.0:
        diagnostics.append("drop_threshold: must be in [0, 1]")

    host_raw = _get(data, "host", {})
    host = HostSpec(
        attach_node=int(_get(host_raw, "attach_node", 0)),
        ring_capacity=int(_get(host_raw, "ring_capacity", 512)),
        mtu=int(_get(host_raw, "mtu", 4096)),
        poll_interval_ns=int(_get(host_raw, "poll_interval_ns", 10_000)),
        record_spikes=bool(_get(host_raw, "record_spikes", True)),
        link_latency_ns=host_raw.get("link_latency_ns"),
    )
    if host.ring_capacity < 2 or host.ring_capacity & (host.ring_capacity - 1):
        diagnostics.append("host.ring_capacity: must be a power of two >= 2")
    if host.mtu < 64:
        diagnostics.append("host.mtu: must be >= 64")
    if host.poll_interval_ns <= 0:
        diagnostics.append("host.poll_interval_ns: must be positive")
    if node_count and not 0 <= host.attach_node < node_count:
        diagnostics.append(f"host.attach_node: node {host.attach_node} not in topology")

    nodes: list[NodeSpec] = []
    addresses: set[int] = set()
    for n_idx, node_raw in enumerate(_get(data, "nodes", [])):
        where = f"nodes[{n_idx}]"
        address = int(_get(node_raw, "address", -1))
        if node_count and not 0 <= address < node_count:
            diagnostics.append(f"{where}.address: node {address} not in topology of {node_count} nodes")
        if address in addresses:
            diagnostics.append(f"{where}.address: node {address} defined twice")
        addresses.add(address)

        chip_raw = _get(node_raw, "chip", {})
        try:
            chip_cfg = ChipConfig(
                neuron_count=int(_get(chip_raw, "neuron_count", 512)),
                integration_threshold=int(_get(chip_raw, "integration_threshold", 1)),
                refractory_ns=int(_get(chip_raw, "refractory_ns", 0)),
                tick_ns=tick_ns if tick_ns > 0 else 8,
                max_events_per_cycle=int(_get(chip_raw, "max_events_per_cycle", 2)),
            )
        except ValueError as exc:
            diagnostics.append(f"{where}.chip: {exc}")
            chip_cfg = ChipConfig(tick_ns=tick_ns if tick_ns > 0 else 8)

        bucket_indices: set[int] = set()
        buckets: list[BucketSpec] = []
        for b_idx, bucket_raw in enumerate(_get(node_raw, "buckets", [])):
            b_where = f"{where}.buckets[{b_idx}]"
            spec = BucketSpec(
                index=int(_get(bucket_raw, "index", b_idx)),
                dest_node=int(_get(bucket_raw, "dest_node", -1)),
                capacity=int(_get(bucket_raw, "capacity", 0)),
                transit_budget_ns=int(_get(bucket_raw, "transit_budget_ns", 0)),
            )
            if spec.capacity < 1:
                diagnostics.append(f"{b_where}: bucket capacity must be >= 1")
            if spec.transit_budget_ns < 0:
                diagnostics.append(f"{b_where}: transit_budget_ns must be >= 0")
            if spec.index in bucket_indices:
                diagnostics.append(f"{b_where}: bucket index {spec.index} defined twice")
            bucket_indices.add(spec.index)
            buckets.append(spec)

        route_sources: set[int] = set()
        routes: list[RouteSpec] = []
        for r_idx, route_raw in enumerate(_get(node_raw, "routes", [])):
            r_where = f"{where}.routes[{r_idx}]"
            spec = RouteSpec(
                source=int(_get(route_raw, "source", -1)),
                dest_neuron=int(_get(route_raw, "dest_neuron", -1)),
                bucket=int(_get(route_raw, "bucket", -1)),
                axonal_delay_ns=int(_get(route_raw, "axonal_delay_ns", 0)),
            )
            if not 0 <= spec.source < NEURON_ADDRESS_SPACE:
                diagnostics.append(f"{r_where}: source {spec.source} exceeds the 14-bit address space")
            if not 0 <= spec.dest_neuron < NEURON_ADDRESS_SPACE:
                diagnostics.append(f"{r_where}: dest_neuron {spec.dest_neuron} exceeds the 14-bit address space")
            if spec.axonal_delay_ns <= 0:
                diagnostics.append(f"{r_where}: axonal_delay_ns must be positive")
            if spec.bucket not in bucket_indices:
                diagnostics.append(f"{r_where}: bucket {spec.bucket} is not configured on node {address}")
            if spec.source in route_sources:
                diagnostics.append(f"{r_where}: source {spec.source} mapped twice")
            route_sources.add(spec.source)
            routes.append(spec)

        inputs: list[InputSpec] = []
        for i_idx, input_raw in enumerate(_get(node_raw, "inputs", [])):
            i_where = f"{where}.inputs[{i_idx}]"
            spec = InputSpec(
                neuron=int(_get(input_raw, "neuron", -1)),
                kind=_get(input_raw, "kind", "regular"),
                start_ns=int(_get(input_raw, "start_ns", 0)),
                period_ns=int(_get(input_raw, "period_ns", 0)),
                count=int(_get(input_raw, "count", 0)),
                rate_hz=float(_get(input_raw, "rate_hz", 0.0)),
                duration_ns=input_raw.get("duration_ns"),
            )
            if not 0 <= spec.neuron < chip_cfg.neuron_count:
                diagnostics.append(f"{i_where}: neuron {spec.neuron} not on chip of {chip_cfg.neuron_count} neurons")
            if spec.kind not in ("regular", "poisson"):
                diagnostics.append(f"{i_where}: kind {spec.kind!r} is not 'regular' or 'poisson'")
            elif spec.kind == "regular" and (spec.period_ns <= 0 or spec.count < 0):
                diagnostics.append(f"{i_where}: regular input needs period_ns > 0 and count >= 0")
            elif spec.kind == "poisson" and spec.rate_hz <= 0:
                diagnostics.append(f"{i_where}: poisson input needs rate_hz > 0")
            if spec.start_ns < 0:
                diagnostics.append(f"{i_where}: start_ns must be >= 0")
            inputs.append(spec)

        nodes.append(NodeSpec(address, chip_cfg, routes, buckets, inputs))

    if not nodes:
        diagnostics.append("nodes: at least one node is required")

    # cross-node references need the full node set
    by_address = {n.address: n for n in nodes}
    for node in nodes:
        for b_idx, bucket in enumerate(node.buckets):
            target = by_address.get(bucket.dest_node)
            if target is None:
                diagnostics.append(
                    f"nodes[{node.address}].buckets[{b_idx}]: dest_node {bucket.dest_node} "
                    "is not a configured node"
                )
        for r_idx, route in enumerate(node.routes):
            bucket = next((b for b in node.buckets if b.index == route.bucket), None)
            if bucket is None:
                continue  # already diagnosed
            target = by_address.get(bucket.dest_node)
            if target is not None and route.dest_neuron >= target.chip.neuron_count:
                diagnostics.append(
                    f"nodes[{node.address}].routes[{r_idx}]: dest_neuron {route.dest_neuron} "
                    f"not on chip at node {bucket.dest_node}"
                )

    if diagnostics:
        raise ConfigError(diagnostics)

    nodes.sort(key=lambda n: n.address)
    return ScenarioConfig(
        dims=dims,
        nodes=nodes,
        duration_ns=duration_ns,
        tick_ns=tick_ns,
        lanes=lanes,
        lane_rate_bps=lane_rate,
        link_latency_ns=link_latency,
        header_bytes=header_bytes,
        event_bytes=event_bytes,
        delivery_mode=delivery_mode,
        drop_threshold=None if drop_threshold is None else float(drop_threshold),
        host=host,
    )


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from exc
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])
    try:
        return parse_config(data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"{path}: malformed value ({exc})"]) from exc


def validate_config(path: str | Path) -> ScenarioConfig:
    """Full structural and referential validation without running."""
    return load_config(path)


class Scenario:
    """A wired, runnable instance of one scenario configuration."""

    def __init__(self, config: ScenarioConfig, seed: int) -> None:
        self.config = config
        self.seed = seed
        self.scheduler = Scheduler()
        self.topo = TorusTopology(config.dims)
        self.fabric = Fabric(
            self.scheduler,
            self.topo,
            LinkConfig(config.lanes, config.lane_rate_bps, config.link_latency_ns),
        )
        self.collector = MetricsCollector()
        self.chips: dict[int, Chip] = {}
        self.pipelines: dict[int, Pipeline] = {}
        self.endpoints: dict[int, FpgaEndpoint] = {}
        self.host_records: dict[int, list[bytes]] = {}
        self.experiment_start: SimTime = 0
        self.input_trains: dict[tuple[int, int], list[SimTime]] = {}
        self._rng = seeded_rng(seed)

        host_link = None
        if config.host.link_latency_ns is not None:
            host_link = LinkConfig(config.lanes, config.lane_rate_bps, config.host.link_latency_ns)
        self.host = Host(
            self.scheduler,
            self.fabric,
            mtu=config.host.mtu,
            ring_capacity=config.host.ring_capacity,
        )
        self.host.attach(config.host.attach_node, host_link)

        for node in config.nodes:
            self._build_node(node)

    # -- wiring ---------------------------------------------------------------

    def _build_node(self, spec: NodeSpec) -> None:
        address = spec.address
        chip = Chip(address, spec.chip)
        pipeline = Pipeline(
            address,
            chip,
            self.scheduler,
            send=lambda pkt, a=address: self.fabric.send(pkt, a),
            tick_ns=self.config.tick_ns,
            header_bytes=self.config.header_bytes,
            event_bytes=self.config.event_bytes,
            deliver_at_deadline=self.config.delivery_mode == "deadline",
            on_delivery=self.collector.on_delivery,
        )
        endpoint = FpgaEndpoint(address, self.scheduler, self.fabric, pipeline)
        self.host.add_fpga(endpoint)
        self.host_records[address] = []

        record = self.config.host.record_spikes

        def sink(event, release, pipeline=pipeline, endpoint=endpoint) -> None:
            self.scheduler.schedule(
                release, lambda: pipeline.ingest(event), target=f"n{pipeline.node}.ingest"
            )
            if record:
                endpoint.ring_write(
                    SPIKE_RECORD.pack(pipeline.node, event.address, event.emit_time, event.timestamp8)
                )

        chip.output_sink = sink
        self.chips[address] = chip
        self.pipelines[address] = pipeline
        self.endpoints[address] = endpoint

    # -- configuration phase ----------------------------------------------------

    def _configure_pipelines(self) -> None:
        """Write every route and bucket through remote register access, then commit."""
        for node in self.config.nodes:
            for slot, route in enumerate(node.routes):
                self.host.rra_write(
                    node.address,
                    registers.lut_map_address(slot),
                    registers.pack_lut_map(route.source, route.dest_neuron, route.bucket),
                )
                self.host.rra_write(node.address, registers.lut_delay_address(slot), route.axonal_delay_ns)
            for bucket in node.buckets:
                self.host.rra_write(
                    node.address, registers.bucket_address(bucket.index, registers.BUCKET_DEST_OFF),
                    bucket.dest_node,
                )
                self.host.rra_write(
                    node.address, registers.bucket_address(bucket.index, registers.BUCKET_CAPACITY_OFF),
                    bucket.capacity,
                )
                self.host.rra_write(
                    node.address, registers.bucket_address(bucket.index, registers.BUCKET_BUDGET_OFF),
                    bucket.transit_budget_ns,
                )
            self.host.rra_write(node.address, registers.REG_CONTROL, registers.CONTROL_COMMIT_BIT)
        self.scheduler.run_until_idle()

    # -- input drive --------------------------------------------------------------

    def _expand_input(self, spec: InputSpec) -> list[SimTime]:
        if spec.kind == "regular":
            return [spec.start_ns + i * spec.period_ns for i in range(spec.count)]
        horizon = spec.duration_ns if spec.duration_ns is not None else self.config.duration_ns
        tick = self.config.tick_ns
        times: list[SimTime] = []
        t = float(spec.start_ns)
        while True:
            t += self._rng.expovariate(spec.rate_hz) * 1e9
            if t >= spec.start_ns + horizon:
                break
            quantized = -(-int(t) // tick) * tick  # ceil to the tick grid
            if times and quantized <= times[-1]:
                quantized = times[-1] + tick
            times.append(quantized)
        return [t for t in times if t < spec.start_ns + horizon]

    def _schedule_inputs(self) -> None:
        t0 = self.experiment_start
        for node in self.config.nodes:
            chip = self.chips[node.address]
            for idx, spec in enumerate(node.inputs):
                times = self._expand_input(spec)
                self.input_trains[(node.address, idx)] = times
                for t in times:
                    at = t0 + t
                    self.scheduler.schedule(
                        at,
                        lambda n=spec.neuron, tt=at, c=chip: c.emit_external(n, [tt]),
                        target=f"n{node.address}.input",
                    )

    # -- run ------------------------------------------------------------------------

    def run(self) -> dict:
        self._configure_pipelines()
        tick = self.config.tick_ns
        self.experiment_start = -(-self.scheduler.now // tick) * tick + tick
        self._schedule_inputs()

        end = self.experiment_start + self.config.duration_ns
        if self.config.host.record_spikes:
            interval = self.config.host.poll_interval_ns
            poll_at = self.experiment_start + interval
            while poll_at <= end:
                self.scheduler.schedule(poll_at, self._poll_hosts, target="host.poll")
                poll_at += interval

        self.scheduler.run_until(end)
        for address in sorted(self.pipelines):
            self.pipelines[address].flush_all()
        self.scheduler.run_until_idle()
        self._drain_rings()
        return self._finish()

    def _poll_hosts(self) -> None:
        for node, records in self.host.poll_all().items():
            self.host_records[node].extend(records)

    def _drain_rings(self) -> None:
        while True:
            progressed = False
            for node, records in self.host.poll_all().items():
                if records:
                    self.host_records[node].extend(records)
                    progressed = True
            self.scheduler.run_until_idle()
            quiet = all(
                not ep.pending and self.host.rings[node].read_ptr == ep.write_ptr
                for node, ep in self.endpoints.items()
            )
            if quiet:
                return
            if not progressed:
                raise InvariantViolation("host rings failed to drain to quiescence")

    # -- reporting ---------------------------------------------------------------

    def decoded_host_records(self) -> dict[int, list[tuple[int, int, int, int]]]:
        return {
            node: [SPIKE_RECORD.unpack(r) for r in records]
            for node, records in self.host_records.items()
        }

    def _finish(self) -> dict:
        report = self._build_report()
        problems: list[str] = []
        if self.collector.deadline_violations:
            problems.append(f"{self.collector.deadline_violations} deliveries after their deadline")
        totals = report["counters_total"]
        accounted = totals["events_out"] + totals["dropped_unmapped"] + \
            totals["dropped_expired_tx"] + totals["dropped_expired_rx"]
        if totals["events_in"] != accounted:
            problems.append(f"event conservation broke: {totals['events_in']} in, {accounted} accounted")
        emitted = sum(len(chip.emitted) for chip in self.chips.values())
        if emitted != totals["events_in"]:
            problems.append(f"{emitted} chip emissions but {totals['events_in']} pipeline ingests")
        if self.fabric.packets_sent != self.fabric.packets_delivered:
            problems.append(
                f"{self.fabric.packets_sent} packets sent but {self.fabric.packets_delivered} delivered"
            )
        if problems:
            raise InvariantViolation("; ".join(problems), report)
        return report

    def _build_report(self) -> dict:
        ends = self.scheduler.now
        elapsed = max(ends, 1)
        counters_total = {
            key: sum(p.counters.as_dict()[key] for p in self.pipelines.values())
            for key in ("events_in", "events_out", "dropped_unmapped",
                        "dropped_expired_tx", "dropped_expired_rx",
                        "packets_sent", "packets_received")
        }
        header_sent = sum(p.header_bytes_sent for p in self.pipelines.values())
        total_sent = sum(p.total_bytes_sent for p in self.pipelines.values())
        expired = counters_total["dropped_expired_tx"] + counters_total["dropped_expired_rx"]
        events_in = counters_total["events_in"]

        links = {}
        for name, stats in self.fabric.link_stats().items():
            links[name] = {
                "bytes_sent": stats.bytes_sent,
                "packets_sent": stats.packets_sent,
                "busy_time_ns": stats.busy_time_ns,
                "throughput_bps": stats.bytes_sent * 8 * 1_000_000_000 // elapsed,
            }

        return {
            "seed": self.seed,
            "config_sha256": self.config.digest(),
            "delivery_mode": self.config.delivery_mode,
            "experiment_start_ns": self.experiment_start,
            "duration_ns": self.config.duration_ns,
            "end_time_ns": ends,
            "time_unit": "hardware_ns",
            "isi_note": "intervals are hardware time; any bio-time scaling is a presentation label",
            "latency": metrics.latency_summary(self.collector.latencies()),
            "isi": {
                str(node): metrics.isi_summary(chip.isi_samples())
                for node, chip in sorted(self.chips.items())
            },
            "spike_counts": {str(node): len(chip.emitted) for node, chip in sorted(self.chips.items())},
            "counters": {str(node): p.counters.as_dict() for node, p in sorted(self.pipelines.items())},
            "counters_total": counters_total,
            "links": links,
            "header_overhead_ratio": (header_sent / total_sent) if total_sent else 0.0,
            "drop_fraction_expired": (expired / events_in) if events_in else 0.0,
            "deadline_violations": self.collector.deadline_violations,
            "host_records_consumed": {
                str(node): len(records) for node, records in sorted(self.host_records.items())
            },
        }


def run_scenario(config: ScenarioConfig, seed: int, out_dir: str | Path | None = None) -> dict:
    """Build, run, and (optionally) write the report and CSV side files."""
    scenario = Scenario(config, seed)
    report = scenario.run()
    if out_dir is not None:
        write_outputs(scenario, report, Path(out_dir))
    return report


def write_outputs(scenario: Scenario, report: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics.write_report(report, out_dir)
    metrics.write_latency_csv(scenario.collector.deliveries, out_dir)
    metrics.write_isi_csv(
        {node: chip.isi_samples() for node, chip in scenario.chips.items()}, out_dir
    )
    metrics.write_spikes_csv(
        {node: chip.spike_rows() for node, chip in scenario.chips.items()}, out_dir
    )


def sweep_aggregation(
    config: ScenarioConfig, capacities: list[int], seed: int, out_dir: str | Path | None = None
) -> list[dict]:
    """Re-run the scenario once per bucket capacity; one result row per value."""
    if not capacities or any(c < 1 for c in capacities):
        raise ConfigError(["sweep values: bucket capacities must be positive"])
    rows: list[dict] = []
    for capacity in capacities:
        data = config.to_dict()
        for node in data["nodes"]:
            for bucket in node["buckets"]:
                bucket["capacity"] = capacity
        variant = parse_config(data)
        report = run_scenario(variant, seed)
        rows.append(
            {
                "bucket_capacity": capacity,
                "header_overhead_ratio": report["header_overhead_ratio"],
                "dropped_expired_tx": report["counters_total"]["dropped_expired_tx"],
                "mean_latency_ns": report["latency"].get("mean_ns", 0.0),
                "deadline_violations": report["deadline_violations"],
            }
        )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        metrics.write_sweep_csv(rows, out)
    return rows
