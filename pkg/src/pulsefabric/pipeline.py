"""Per-FPGA pulse pipeline.

Transmit side: expand the 8-bit on-wire timestamp to full width, add the route's
axonal delay to form an arrival deadline, remap the source neuron address through the
lookup table, and aggregate events into per-destination bucket-buffers. A bucket emits
a packet when it fills to capacity or when its flush timer fires at
min(pending deadlines) - transit_budget; events that can no longer arrive in time are
dropped at the sender. Receive side: deliver each event to the local chip at exactly
its deadline (or drop it as expired).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .chip import TIMESTAMP_WRAP, Chip, ChipEvent, NEURON_ADDRESS_SPACE
from .engine import ScheduledAction, Scheduler, SimTime

DEFAULT_HEADER_BYTES = 16
DEFAULT_EVENT_BYTES = 8  # modeled wire encoding: 2 bytes neuron + 6 bytes deadline


class DuplicateSource(Exception):
    """Two lookup-table entries share a source address."""


class MisroutedPacket(Exception):
    """A packet reached a pipeline whose node address does not match (fabric bug)."""


def expand_timestamp(ts8: int, now: SimTime, tick: SimTime) -> SimTime:
    """Reconstruct a full-width time from an 8-bit wrapped tick count.

    Returns the unique t with floor(t/tick) congruent to ts8 (mod 256) whose tick
    start lies in the half-window (now - 128*tick, now + 128*tick]. Observers within
    128 ticks of the simulation start may see a value before time zero; it is treated
    like any other past time.
    """
    if not 0 <= ts8 < TIMESTAMP_WRAP:
        raise ValueError(f"ts8 {ts8} outside [0, {TIMESTAMP_WRAP})")
    now_tick = now // tick
    delta = (ts8 - now_tick) % TIMESTAMP_WRAP
    if delta > TIMESTAMP_WRAP // 2:
        delta -= TIMESTAMP_WRAP
    return (now_tick + delta) * tick


@dataclass(frozen=True)
class RouteEntry:
    """Lookup-table row: source address to (destination address, bucket, delay)."""

    source: int
    dest_neuron: int
    bucket_index: int
    axonal_delay_ns: SimTime

    def __post_init__(self) -> None:
        if not 0 <= self.source < NEURON_ADDRESS_SPACE:
            raise ValueError(f"source {self.source} exceeds 14 bits")
        if not 0 <= self.dest_neuron < NEURON_ADDRESS_SPACE:
            raise ValueError(f"dest_neuron {self.dest_neuron} exceeds 14 bits")
        if self.bucket_index < 0:
            raise ValueError("bucket_index must be non-negative")
        if self.axonal_delay_ns <= 0:
            raise ValueError("axonal_delay_ns must be positive")


@dataclass(frozen=True)
class BucketConfig:
    """Static bucket parameters; dest_node is fixed once configured."""

    index: int
    dest_node: int
    capacity: int
    transit_budget_ns: SimTime

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("bucket capacity must be >= 1")
        if self.transit_budget_ns < 0:
            raise ValueError("transit_budget_ns must be >= 0")


@dataclass(frozen=True)
class RoutedEvent:
    """Event after lookup. Only dest_neuron and deadline are on the wire; the source
    fields are simulator instrumentation for latency accounting."""

    dest_neuron: int
    deadline_ns: SimTime
    emit_time_ns: SimTime
    source_node: int = -1
    source_neuron: int = -1


@dataclass(frozen=True)
class PulsePacket:
    """Aggregated group of events bound for one destination node."""

    dest_node: int
    events: tuple[RoutedEvent, ...]
    created_at: SimTime
    header_bytes: int = DEFAULT_HEADER_BYTES
    event_bytes: int = DEFAULT_EVENT_BYTES

    def __post_init__(self) -> None:
        if not self.events:
            raise ValueError("a packet carries at least one event")

    @property
    def size_bytes(self) -> int:
        return self.header_bytes + len(self.events) * self.event_bytes


@dataclass
class PipelineCounters:
    events_in: int = 0
    events_out: int = 0
    dropped_unmapped: int = 0
    dropped_expired_tx: int = 0
    dropped_expired_rx: int = 0
    packets_sent: int = 0
    packets_received: int = 0

    @property
    def dropped_total(self) -> int:
        return self.dropped_unmapped + self.dropped_expired_tx + self.dropped_expired_rx

    def as_dict(self) -> dict[str, int]:
        return {
            "events_in": self.events_in,
            "events_out": self.events_out,
            "dropped_unmapped": self.dropped_unmapped,
            "dropped_expired_tx": self.dropped_expired_tx,
            "dropped_expired_rx": self.dropped_expired_rx,
            "packets_sent": self.packets_sent,
            "packets_received": self.packets_received,
        }


class _Bucket:
    __slots__ = ("config", "pending", "timer")

    def __init__(self, config: BucketConfig) -> None:
        self.config = config
        self.pending: list[RoutedEvent] = []
        self.timer: ScheduledAction | None = None


class Pipeline:
    """Pipeline state machine for one FPGA node.

    `send` forwards emitted packets (normally Fabric.send bound to this node);
    `on_delivery(node, event, applied_at)` is invoked for every event applied to the
    local chip, for metrics collection.
    """

    def __init__(
        self,
        node: int,
        chip: Chip,
        scheduler: Scheduler,
        send: Callable[[PulsePacket], None],
        *,
        tick_ns: SimTime = 8,
        header_bytes: int = DEFAULT_HEADER_BYTES,
        event_bytes: int = DEFAULT_EVENT_BYTES,
        deliver_at_deadline: bool = True,
        on_delivery: Callable[[int, RoutedEvent, SimTime], None] | None = None,
    ) -> None:
        self.node = node
        self.chip = chip
        self.scheduler = scheduler
        self.send = send
        self.tick_ns = tick_ns
        self.header_bytes = header_bytes
        self.event_bytes = event_bytes
        self.deliver_at_deadline = deliver_at_deadline
        self.on_delivery = on_delivery
        self.counters = PipelineCounters()
        self.header_bytes_sent = 0
        self.total_bytes_sent = 0
        self._routes: dict[int, RouteEntry] = {}
        self._buckets: dict[int, _Bucket] = {}

    # -- configuration ------------------------------------------------------

    def configure(self, routes: list[RouteEntry], buckets: list[BucketConfig]) -> None:
        """Install the lookup table and bucket set (the register-file commit path)."""
        if any(b.pending for b in self._buckets.values()):
            raise RuntimeError("cannot reconfigure while buckets hold pending events")
        route_map: dict[int, RouteEntry] = {}
        for entry in routes:
            if entry.source in route_map:
                raise DuplicateSource(f"source {entry.source} mapped twice")
            route_map[entry.source] = entry
        bucket_map: dict[int, _Bucket] = {}
        for cfg in buckets:
            if cfg.index in bucket_map:
                raise ValueError(f"bucket index {cfg.index} configured twice")
            bucket_map[cfg.index] = _Bucket(cfg)
        for entry in route_map.values():
            if entry.bucket_index not in bucket_map:
                raise ValueError(f"route for source {entry.source} names unknown bucket {entry.bucket_index}")
        for bucket in self._buckets.values():
            if bucket.timer is not None:
                self.scheduler.cancel(bucket.timer)
        self._routes = route_map
        self._buckets = bucket_map

    @property
    def routes(self) -> dict[int, RouteEntry]:
        return dict(self._routes)

    def bucket_config(self, index: int) -> BucketConfig:
        return self._buckets[index].config

    def bucket_pending(self, index: int) -> list[RoutedEvent]:
        return list(self._buckets[index].pending)

    # -- transmit side ------------------------------------------------------

    def lookup(self, source: int) -> RouteEntry | None:
        return self._routes.get(source)

    def ingest(self, event: ChipEvent, now: SimTime | None = None) -> PulsePacket | None:
        """Run one chip event through expansion, lookup, and aggregation.

        Returns the packet if this event filled its bucket to capacity; timer-driven
        flushes happen asynchronously through the scheduler.
        """
        now = self.scheduler.now if now is None else now
        self.counters.events_in += 1
        entry = self._routes.get(event.address)
        if entry is None:
            self.counters.dropped_unmapped += 1
            return None
        emitted = expand_timestamp(event.timestamp8, now, self.tick_ns)
        routed = RoutedEvent(
            dest_neuron=entry.dest_neuron,
            deadline_ns=emitted + entry.axonal_delay_ns,
            emit_time_ns=event.emit_time,
            source_node=self.node,
            source_neuron=event.address,
        )
        return self.bucket_push(entry.bucket_index, routed, now)

    def bucket_push(self, index: int, event: RoutedEvent, now: SimTime | None = None) -> PulsePacket | None:
        now = self.scheduler.now if now is None else now
        bucket = self._buckets[index]
        if event.deadline_ns <= now + bucket.config.transit_budget_ns:
            # cannot reach the destination before it expires; save the bandwidth
            self.counters.dropped_expired_tx += 1
            return None
        bucket.pending.append(event)
        if len(bucket.pending) >= bucket.config.capacity:
            return self._flush_bucket(bucket, now)
        self._arm_timer(bucket)
        return None

    def flush_all(self, now: SimTime | None = None) -> list[PulsePacket]:
        """End-of-run drain: every non-empty bucket emits one packet immediately."""
        now = self.scheduler.now if now is None else now
        return [self._flush_bucket(b, now) for b in self._buckets.values() if b.pending]

    # -- receive side -------------------------------------------------------

    def receive_packet(self, packet: PulsePacket, now: SimTime | None = None) -> list[SimTime]:
        """Accept a packet from the fabric; schedule one delivery per live event.

        Returns the scheduled application times (instrumentation).
        """
        now = self.scheduler.now if now is None else now
        if packet.dest_node != self.node:
            raise MisroutedPacket(f"packet for node {packet.dest_node} arrived at node {self.node}")
        self.counters.packets_received += 1
        scheduled: list[SimTime] = []
        for event in packet.events:
            if event.deadline_ns < now:
                self.counters.dropped_expired_rx += 1
                continue
            apply_at = event.deadline_ns if self.deliver_at_deadline else now
            self.scheduler.schedule(
                apply_at,
                lambda ev=event: self._deliver(ev),
                target=f"n{self.node}.deliver",
            )
            scheduled.append(apply_at)
        return scheduled

    # -- internal -----------------------------------------------------------

    def _deliver(self, event: RoutedEvent) -> None:
        applied_at = self.scheduler.now
        self.chip.apply_input(event.dest_neuron, applied_at)
        self.counters.events_out += 1
        if self.on_delivery is not None:
            self.on_delivery(self.node, event, applied_at)

    def _arm_timer(self, bucket: _Bucket) -> None:
        due = min(e.deadline_ns for e in bucket.pending) - bucket.config.transit_budget_ns
        if bucket.timer is not None:
            if bucket.timer.fire_at <= due:
                return
            self.scheduler.cancel(bucket.timer)
        bucket.timer = self.scheduler.schedule(
            due,
            lambda: self._timer_flush(bucket),
            target=f"n{self.node}.bucket{bucket.config.index}.flush",
        )

    def _timer_flush(self, bucket: _Bucket) -> None:
        bucket.timer = None
        if bucket.pending:
            self._flush_bucket(bucket, self.scheduler.now)

    def _flush_bucket(self, bucket: _Bucket, now: SimTime) -> PulsePacket:
        if bucket.timer is not None:
            self.scheduler.cancel(bucket.timer)
            bucket.timer = None
        packet = PulsePacket(
            dest_node=bucket.config.dest_node,
            events=tuple(bucket.pending),
            created_at=now,
            header_bytes=self.header_bytes,
            event_bytes=self.event_bytes,
        )
        bucket.pending.clear()
        self.counters.packets_sent += 1
        self.header_bytes_sent += packet.header_bytes
        self.total_bytes_sent += packet.size_bytes
        self.send(packet)
        return packet
