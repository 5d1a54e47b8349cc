"""Torus packet fabric.

16-bit node addresses map bijectively onto (x, y, z) coordinates of a 3D torus.
Routing is dimension-ordered (x, then y, then z) along the minimal ring direction,
ties breaking toward the positive direction. Each directed link serializes packets
at lanes x lane_rate with a fixed per-hop latency; serialization intervals on a link
never overlap. A host endpoint can hang off one node's dedicated host port.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Protocol

from .engine import Scheduler, SimTime

NODE_ADDRESS_SPACE = 1 << 16
HOST_ADDRESS = 0xFFFF  # reserved destination for the host endpoint

Direction = tuple[int, int]  # (axis 0..2, step +1/-1)

_AXIS_NAMES = "xyz"


def direction_name(direction: Direction) -> str:
    axis, step = direction
    return f"{_AXIS_NAMES[axis]}{'+' if step > 0 else '-'}"


class InvalidNode(Exception):
    """A node address outside the active topology."""


class NoRoute(Exception):
    """No usable link toward the destination (degraded topology)."""


class Routable(Protocol):
    """Anything the fabric can carry: needs a destination and a modeled wire size."""

    dest_node: int

    @property
    def size_bytes(self) -> int: ...


@dataclass(frozen=True)
class TorusTopology:
    """Coordinate codec for a 3D torus: address = x + X*(y + Y*z)."""

    dims: tuple[int, int, int]

    def __post_init__(self) -> None:
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ValueError("dims must be three positive integers")
        if self.node_count > NODE_ADDRESS_SPACE:
            raise ValueError("topology exceeds the 16-bit node address space")

    @property
    def node_count(self) -> int:
        x, y, z = self.dims
        return x * y * z

    def contains(self, address: int) -> bool:
        return 0 <= address < self.node_count

    def encode(self, x: int, y: int, z: int) -> int:
        dx, dy, dz = self.dims
        if not (0 <= x < dx and 0 <= y < dy and 0 <= z < dz):
            raise InvalidNode(f"coordinate ({x},{y},{z}) outside dims {self.dims}")
        return x + dx * (y + dy * z)

    def decode(self, address: int) -> tuple[int, int, int]:
        if not self.contains(address):
            raise InvalidNode(f"address {address} outside topology of {self.node_count} nodes")
        dx, dy, _ = self.dims
        return address % dx, (address // dx) % dy, address // (dx * dy)

    def neighbor(self, address: int, direction: Direction) -> int:
        coords = list(self.decode(address))
        axis, step = direction
        coords[axis] = (coords[axis] + step) % self.dims[axis]
        return self.encode(*coords)


def route_next_hop(current: int, dest: int, topo: TorusTopology) -> Direction | None:
    """Next link direction toward `dest`, or None when already local.

    Corrects x first, then y, then z, each along the minimal ring direction; a tie
    (distance exactly half the ring) goes positive.
    """
    if not topo.contains(current) or not topo.contains(dest):
        raise InvalidNode(f"route {current} -> {dest} outside topology")
    if current == dest:
        return None
    here = topo.decode(current)
    there = topo.decode(dest)
    for axis in range(3):
        dim = topo.dims[axis]
        if here[axis] == there[axis]:
            continue
        forward = (there[axis] - here[axis]) % dim
        backward = (here[axis] - there[axis]) % dim
        return (axis, 1) if forward <= backward else (axis, -1)
    return None


def route_path(src: int, dest: int, topo: TorusTopology) -> list[Direction]:
    """Full hop sequence from src to dest under dimension-order routing."""
    path: list[Direction] = []
    node = src
    while (step := route_next_hop(node, dest, topo)) is not None:
        path.append(step)
        node = topo.neighbor(node, step)
    return path


@dataclass
class LinkStats:
    bytes_sent: int = 0
    packets_sent: int = 0
    busy_time_ns: SimTime = 0


@dataclass
class LinkConfig:
    lanes: int = 12
    lane_rate_bps: int = 8_400_000_000
    latency_ns: SimTime = 600

    def __post_init__(self) -> None:
        if not 1 <= self.lanes <= 12:
            raise ValueError("lanes must be in [1, 12]")
        if self.lane_rate_bps <= 0 or self.latency_ns < 0:
            raise ValueError("lane_rate_bps must be positive and latency_ns non-negative")


class LinkModel:
    """One directed link: serialization at lanes x lane_rate plus fixed hop latency."""

    def __init__(self, config: LinkConfig) -> None:
        self.config = config
        self.busy_until: SimTime = 0
        self.stats = LinkStats()

    @property
    def bandwidth_bps(self) -> int:
        return self.config.lanes * self.config.lane_rate_bps

    def serialization_ns(self, size_bytes: int) -> SimTime:
        # ceil to whole nanoseconds so measured throughput never exceeds capacity
        return -(-size_bytes * 8 * 1_000_000_000 // self.bandwidth_bps)

    def transmit(self, size_bytes: int, depart: SimTime) -> SimTime:
        """Serialize one packet; returns its arrival time at the far end.

        Packets queue behind the link's busy window, so serialization intervals on
        one link are pairwise disjoint.
        """
        start = max(depart, self.busy_until)
        serialization = self.serialization_ns(size_bytes)
        self.busy_until = start + serialization
        self.stats.bytes_sent += size_bytes
        self.stats.packets_sent += 1
        self.stats.busy_time_ns += serialization
        return start + serialization + self.config.latency_ns


@dataclass
class TransitRecord:
    src: int
    dest: int
    hops: int
    depart: SimTime
    arrive: SimTime


class Fabric:
    """Moves packets hop by hop on the scheduler and delivers them to per-node receivers.

    Links are created lazily per (node, direction); receive queues are unbounded, so
    with deterministic single-path routing every sent packet arrives.
    """

    def __init__(self, scheduler: Scheduler, topo: TorusTopology, link_config: LinkConfig | None = None) -> None:
        self.scheduler = scheduler
        self.topo = topo
        self.link_config = link_config or LinkConfig()
        self.packets_sent = 0
        self.packets_delivered = 0
        self.transit_log: list[TransitRecord] = []
        self._links: dict[tuple[int, Direction], LinkModel] = {}
        self._dead_links: set[tuple[int, Direction]] = set()
        self._receivers: dict[int, Callable[[Any], None]] = {}
        self._host_attach: int | None = None
        self._host_up: LinkModel | None = None
        self._host_down: LinkModel | None = None
        self._host_receiver: Callable[[Any], None] | None = None

    def register_receiver(self, node: int, receiver: Callable[[Any], None]) -> None:
        if not self.topo.contains(node):
            raise InvalidNode(f"node {node} outside topology")
        self._receivers[node] = receiver

    def attach_host(
        self,
        node: int,
        receiver: Callable[[Any], None],
        link_config: LinkConfig | None = None,
    ) -> None:
        """Attach the host endpoint to `node`'s dedicated host port."""
        if not self.topo.contains(node):
            raise InvalidNode(f"host attach node {node} outside topology")
        if self.topo.contains(HOST_ADDRESS):
            raise ValueError("topology occupies the reserved host address")
        cfg = link_config or self.link_config
        self._host_attach = node
        self._host_up = LinkModel(cfg)
        self._host_down = LinkModel(cfg)
        self._host_receiver = receiver

    def link(self, node: int, direction: Direction) -> LinkModel:
        key = (node, direction)
        if key in self._dead_links:
            raise NoRoute(f"link {direction_name(direction)} at node {node} is down")
        if key not in self._links:
            self._links[key] = LinkModel(self.link_config)
        return self._links[key]

    def remove_link(self, node: int, direction: Direction) -> None:
        self._dead_links.add((node, direction))

    def link_stats(self) -> dict[str, LinkStats]:
        stats = {
            f"n{node}:{direction_name(direction)}": link.stats
            for (node, direction), link in sorted(self._links.items())
        }
        if self._host_up is not None:
            stats[f"host:up@n{self._host_attach}"] = self._host_up.stats
        if self._host_down is not None:
            stats[f"host:down@n{self._host_attach}"] = self._host_down.stats
        return stats

    def send(self, packet: Routable, from_node: int) -> None:
        """Inject a packet at `from_node`; it is delivered to the destination receiver."""
        if not self.topo.contains(from_node):
            raise InvalidNode(f"send from unknown node {from_node}")
        dest = packet.dest_node
        if dest != HOST_ADDRESS and not self.topo.contains(dest):
            raise InvalidNode(f"send to unknown node {dest}")
        self.packets_sent += 1
        self._advance(packet, from_node, from_node, hops=0, depart=self.scheduler.now)

    def send_from_host(self, packet: Routable) -> None:
        """Inject a packet from the host: host link down to the attach node, then torus."""
        if self._host_attach is None or self._host_down is None:
            raise NoRoute("no host endpoint attached")
        if not self.topo.contains(packet.dest_node):
            raise InvalidNode(f"send to unknown node {packet.dest_node}")
        self.packets_sent += 1
        depart = self.scheduler.now
        arrival = self._host_down.transmit(packet.size_bytes, depart)
        entry = self._host_attach
        self.scheduler.schedule(
            arrival,
            lambda: self._advance(packet, entry, HOST_ADDRESS, hops=1, depart=depart),
            target="fabric.hop",
        )

    # -- internal ---------------------------------------------------------

    def _advance(self, packet: Routable, node: int, origin: int, hops: int, depart: SimTime) -> None:
        dest = packet.dest_node
        torus_target = self._host_attach if dest == HOST_ADDRESS else dest
        if dest == HOST_ADDRESS and (torus_target is None or self._host_up is None):
            raise NoRoute("no host endpoint attached")
        if node == torus_target:
            if dest == HOST_ADDRESS:
                arrival = self._host_up.transmit(packet.size_bytes, self.scheduler.now)
                self.scheduler.schedule(
                    arrival,
                    lambda: self._deliver(packet, origin, hops + 1, depart),
                    target="fabric.host",
                )
            else:
                # self-addressed or arrived: zero further fabric delay
                self.scheduler.schedule(
                    self.scheduler.now,
                    lambda: self._deliver(packet, origin, hops, depart),
                    target="fabric.deliver",
                )
            return
        direction = route_next_hop(node, torus_target, self.topo)
        link = self.link(node, direction)
        arrival = link.transmit(packet.size_bytes, self.scheduler.now)
        next_node = self.topo.neighbor(node, direction)
        self.scheduler.schedule(
            arrival,
            lambda: self._advance(packet, next_node, origin, hops + 1, depart),
            target="fabric.hop",
        )

    def _deliver(self, packet: Routable, origin: int, hops: int, depart: SimTime) -> None:
        dest = packet.dest_node
        self.packets_delivered += 1
        self.transit_log.append(TransitRecord(origin, dest, hops, depart, self.scheduler.now))
        if dest == HOST_ADDRESS:
            if self._host_receiver is None:
                raise NoRoute("no host receiver attached")
            self._host_receiver(packet)
            return
        receiver = self._receivers.get(dest)
        if receiver is None:
            raise NoRoute(f"no receiver registered at node {dest}")
        receiver(packet)
