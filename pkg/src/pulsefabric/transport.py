"""Host communication layer.

Models remote-memory put/get with Requester/Responder/Completer notifications, the
FPGA-to-host send-queue ring buffer synchronized through completer-notification
payloads, credit-based backpressure on the return path, and remote register access
used to configure pipelines. Host/FPGA interaction rides the fabric as timed
messages; notifications are generated locally at the endpoint that processes the
operation (requester at the issuer, responder/completer at the target).
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass
from typing import Callable

from .engine import Scheduler, SimTime
from .fabric import Fabric, HOST_ADDRESS
from .pipeline import Pipeline, PulsePacket
from .registers import RegisterFile

RMA_HEADER_BYTES = 32
RRA_MESSAGE_BYTES = 16
NOTIFICATION_PAYLOAD_MAX = 8
RING_ENTRY_BYTES = 32
RING_RECORD_MAX = RING_ENTRY_BYTES - 2  # 2-byte length prefix
DEFAULT_MTU = 4096

# FPGA-side region layout: the credit cell the host's read-pointer puts land in
CREDIT_REGION_BASE = 0
CREDIT_REGION_SIZE = 8


class UnregisteredRegion(Exception):
    """A remote-memory operation targeted an unregistered address range."""


class PayloadTooLarge(Exception):
    """Payload exceeds the configured MTU (or the notification payload limit)."""


@dataclass(frozen=True)
class Notification:
    """Small completion signal emitted by an RMA sub-unit when it forwards an
    operation; the payload (<= 8 bytes) carries pointer values for ring sync."""

    source_unit: str  # requester | responder | completer
    payload: bytes
    arrive_time: SimTime

    def __post_init__(self) -> None:
        if len(self.payload) > NOTIFICATION_PAYLOAD_MAX:
            raise PayloadTooLarge("notification payload exceeds 8 bytes")


@dataclass
class RmaMessage:
    """Wire unit for put/get traffic."""

    kind: str  # put | get_request | get_response
    src_node: int
    dest_node: int
    region_offset: int
    payload: bytes
    notif_flags: frozenset[str] = frozenset()
    completer_payload: bytes = b""
    length: int = 0  # get_request only
    request_id: int = 0

    @property
    def size_bytes(self) -> int:
        return RMA_HEADER_BYTES + len(self.payload)


@dataclass
class RraMessage:
    """Wire unit for remote register access."""

    kind: str  # write | read_request | read_response
    src_node: int
    dest_node: int
    address: int
    value: int = 0
    request_id: int = 0

    @property
    def size_bytes(self) -> int:
        return RRA_MESSAGE_BYTES


class MemoryMap:
    """Registered memory windows for one endpoint, keyed by base offset."""

    def __init__(self) -> None:
        self._regions: list[tuple[int, bytearray]] = []

    def register(self, base: int, size: int) -> None:
        self._regions.append((base, bytearray(size)))

    def resolve(self, offset: int, length: int) -> tuple[bytearray, int]:
        for base, buf in self._regions:
            if base <= offset and offset + length <= base + len(buf):
                return buf, offset - base
        raise UnregisteredRegion(f"[{offset}, {offset + length}) is not registered")

    def write(self, offset: int, payload: bytes) -> None:
        buf, off = self.resolve(offset, len(payload))
        buf[off : off + len(payload)] = payload

    def read(self, offset: int, length: int) -> bytes:
        buf, off = self.resolve(offset, length)
        return bytes(buf[off : off + length])


@dataclass
class RingBuffer:
    """Fixed-slot circular queue in host memory, synchronized by pointer values.

    Pointers increase monotonically; they are reduced mod capacity only for slot
    addressing, so occupancy is always write_ptr - read_ptr.
    """

    capacity: int
    base_offset: int
    read_ptr: int = 0
    notified_write_ptr: int = 0

    def __post_init__(self) -> None:
        if self.capacity < 2 or self.capacity & (self.capacity - 1):
            raise ValueError("ring capacity must be a power of two >= 2")

    def slot_offset(self, ptr: int) -> int:
        return self.base_offset + (ptr % self.capacity) * RING_ENTRY_BYTES


def frame_record(record: bytes) -> bytes:
    if len(record) > RING_RECORD_MAX:
        raise PayloadTooLarge(f"ring record exceeds {RING_RECORD_MAX} bytes")
    framed = struct.pack("<H", len(record)) + record
    return framed.ljust(RING_ENTRY_BYTES, b"\x00")


def unframe_record(entry: bytes) -> bytes:
    (length,) = struct.unpack_from("<H", entry)
    return entry[2 : 2 + length]


class Host:
    """Host endpoint hanging off one torus node's host port.

    Owns registered memory (including one ring per FPGA), collects notifications per
    peer FPGA, and issues puts, gets, and register accesses toward the FPGAs.
    """

    def __init__(
        self,
        scheduler: Scheduler,
        fabric: Fabric,
        *,
        mtu: int = DEFAULT_MTU,
        ring_capacity: int = 512,
    ) -> None:
        self.scheduler = scheduler
        self.fabric = fabric
        self.mtu = mtu
        self.ring_capacity = ring_capacity
        self.memory = MemoryMap()
        #: notifications keyed by peer FPGA node (both directions of that channel)
        self.notifications: dict[int, deque[Notification]] = {}
        self.rings: dict[int, RingBuffer] = {}
        self._endpoints: dict[int, FpgaEndpoint] = {}
        self._value_callbacks: dict[int, Callable[[int], None]] = {}
        self._data_callbacks: dict[int, Callable[[bytes], None]] = {}
        self._next_request_id = 1

    def attach(self, node: int, link_config=None) -> None:
        self.fabric.attach_host(node, self._receive, link_config)

    def add_fpga(self, endpoint: FpgaEndpoint) -> None:
        """Register an FPGA: allocates its host-side ring region and binds it."""
        node = endpoint.node
        base = len(self.rings) * self.ring_capacity * RING_ENTRY_BYTES
        self.memory.register(base, self.ring_capacity * RING_ENTRY_BYTES)
        self.rings[node] = RingBuffer(self.ring_capacity, base)
        self.notifications[node] = deque()
        self._endpoints[node] = endpoint
        endpoint.bind_host(self, base)

    # -- RMA ------------------------------------------------------------------

    def rma_put(
        self,
        dest_node: int,
        offset: int,
        payload: bytes,
        notif_flags: frozenset[str] = frozenset(),
        completer_payload: bytes = b"",
    ) -> None:
        """Put from the host into an FPGA's registered memory.

        Validation happens before anything is sent, so a rejected put has no side
        effects. One notification is produced per set flag: requester here at issue
        time, responder/completer at the FPGA when the payload lands.
        """
        endpoint = self._endpoints[dest_node]
        if len(payload) > self.mtu:
            raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds MTU {self.mtu}")
        endpoint.memory.resolve(offset, len(payload))
        if "requester" in notif_flags:
            self._notify(dest_node, "requester", b"")
        message = RmaMessage("put", HOST_ADDRESS, dest_node, offset, bytes(payload), notif_flags, completer_payload)
        self.fabric.send_from_host(message)

    def rma_get(self, dest_node: int, offset: int, length: int, on_data: Callable[[bytes], None]) -> None:
        """Get from an FPGA's registered memory; on_data fires when the response lands."""
        endpoint = self._endpoints[dest_node]
        endpoint.memory.resolve(offset, length)  # fail fast, no side effects
        request_id = self._next_request_id
        self._next_request_id += 1
        self._data_callbacks[request_id] = on_data
        message = RmaMessage("get_request", HOST_ADDRESS, dest_node, offset, b"", frozenset(), b"", length, request_id)
        self.fabric.send_from_host(message)

    # -- register access --------------------------------------------------------

    def rra_write(self, dest_node: int, address: int, value: int) -> None:
        self._endpoints[dest_node].registers.check_address(address)  # fail fast
        self.fabric.send_from_host(RraMessage("write", HOST_ADDRESS, dest_node, address, value))

    def rra_read(self, dest_node: int, address: int, on_value: Callable[[int], None]) -> None:
        self._endpoints[dest_node].registers.check_address(address)
        request_id = self._next_request_id
        self._next_request_id += 1
        self._value_callbacks[request_id] = on_value
        self.fabric.send_from_host(RraMessage("read_request", HOST_ADDRESS, dest_node, address, 0, request_id))

    def rra_read_blocking(self, dest_node: int, address: int) -> int:
        """Convenience for configuration phases and tests: runs the scheduler until
        the read response arrives. Not for use while a scenario is running."""
        result: list[int] = []
        self.rra_read(dest_node, address, result.append)
        while not result:
            next_time = self.scheduler.next_time()
            if next_time is None:
                raise RuntimeError("register read response never arrived")
            self.scheduler.run_until(next_time)
        return result[0]

    # -- ring consumption ---------------------------------------------------------

    def host_poll(self, node: int, max_records: int | None = None) -> list[bytes]:
        """Consume ring entries up to the latest notified write pointer.

        Stale or duplicate notifications never move the candidate pointer backwards;
        records come back in write order. Read credit is returned to the FPGA via a
        small put whenever entries were consumed. `max_records` caps how many entries
        this poll consumes.
        """
        ring = self.rings[node]
        queue = self.notifications[node]
        while queue:
            notification = queue.popleft()
            if notification.source_unit == "completer" and len(notification.payload) == 8:
                (write_ptr,) = struct.unpack("<Q", notification.payload)
                if write_ptr > ring.notified_write_ptr:
                    ring.notified_write_ptr = write_ptr
        records: list[bytes] = []
        while ring.read_ptr < ring.notified_write_ptr:
            if max_records is not None and len(records) >= max_records:
                break
            entry = self.memory.read(ring.slot_offset(ring.read_ptr), RING_ENTRY_BYTES)
            records.append(unframe_record(entry))
            ring.read_ptr += 1
        if records:
            credit = struct.pack("<Q", ring.read_ptr)
            self.rma_put(node, CREDIT_REGION_BASE, credit)
        return records

    def poll_all(self) -> dict[int, list[bytes]]:
        return {node: self.host_poll(node) for node in self.rings}

    def inject_notification(self, node: int, notification: Notification) -> None:
        """Test hook: enqueue an arbitrary (possibly stale) notification."""
        self.notifications[node].append(notification)

    # -- internal -------------------------------------------------------------

    def _receive(self, message) -> None:
        if isinstance(message, RmaMessage):
            if message.kind == "put":
                self.memory.write(message.region_offset, message.payload)
                if "responder" in message.notif_flags:
                    self._notify(message.src_node, "responder", b"")
                if "completer" in message.notif_flags:
                    self._notify(message.src_node, "completer", message.completer_payload)
            elif message.kind == "get_response":
                self._data_callbacks.pop(message.request_id)(message.payload)
            else:
                raise ValueError(f"host cannot handle RMA kind {message.kind!r}")
        elif isinstance(message, RraMessage):
            if message.kind != "read_response":
                raise ValueError(f"host cannot handle RRA kind {message.kind!r}")
            self._value_callbacks.pop(message.request_id)(message.value)
        else:
            raise ValueError(f"unexpected message at host: {type(message).__name__}")

    def _notify(self, peer_node: int, unit: str, payload: bytes) -> None:
        self.notifications.setdefault(peer_node, deque()).append(
            Notification(unit, payload, self.scheduler.now)
        )


class FpgaEndpoint:
    """FPGA-side network endpoint.

    Dispatches fabric messages to the pulse pipeline, the register file, or its small
    memory map, and runs the send-queue ring writer with credit-based backpressure:
    a write with no ring room left stalls (queues locally) until read credit returns.
    """

    def __init__(self, node: int, scheduler: Scheduler, fabric: Fabric, pipeline: Pipeline) -> None:
        self.node = node
        self.scheduler = scheduler
        self.fabric = fabric
        self.pipeline = pipeline
        self.registers = RegisterFile()
        self.registers.on_commit = self._commit_config
        self.memory = MemoryMap()
        self.memory.register(CREDIT_REGION_BASE, CREDIT_REGION_SIZE)
        self.notifications: deque[Notification] = deque()
        self.write_ptr = 0
        self.credit_read_ptr = 0
        self.pending: deque[bytes] = deque()
        self._host: Host | None = None
        self._ring_base = 0
        fabric.register_receiver(node, self.receive)

    def bind_host(self, host: Host, ring_base: int) -> None:
        self._host = host
        self._ring_base = ring_base

    # -- send queue -----------------------------------------------------------

    @property
    def stalled(self) -> bool:
        return bool(self.pending)

    def ring_write(self, record: bytes) -> bool:
        """Queue one record for the host ring.

        Returns True when the record went onto the wire immediately; False means it
        stalled behind missing read credit (a state, not an error)."""
        self.pending.append(frame_record(record))
        self._drain_pending()
        return not self.pending

    def rma_put(
        self,
        offset: int,
        payload: bytes,
        notif_flags: frozenset[str] = frozenset(),
        completer_payload: bytes = b"",
    ) -> None:
        """Put from this FPGA into host memory."""
        host = self._require_host()
        if len(payload) > host.mtu:
            raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds MTU {host.mtu}")
        host.memory.resolve(offset, len(payload))
        if "requester" in notif_flags:
            self.notifications.append(Notification("requester", b"", self.scheduler.now))
        message = RmaMessage("put", self.node, HOST_ADDRESS, offset, bytes(payload), notif_flags, completer_payload)
        self.fabric.send(message, self.node)

    def _drain_pending(self) -> None:
        host = self._require_host()
        ring = host.rings[self.node]
        while self.pending and self.write_ptr - self.credit_read_ptr < ring.capacity:
            framed = self.pending.popleft()
            offset = ring.slot_offset(self.write_ptr)
            self.write_ptr += 1
            # the completer notification carries the new write pointer for ring sync
            self.rma_put(offset, framed, frozenset({"completer"}), struct.pack("<Q", self.write_ptr))

    def _require_host(self) -> Host:
        if self._host is None:
            raise RuntimeError("endpoint is not bound to a host")
        return self._host

    # -- message handling -------------------------------------------------------

    def receive(self, message) -> None:
        if isinstance(message, PulsePacket):
            self.pipeline.receive_packet(message)
        elif isinstance(message, RraMessage):
            self._handle_rra(message)
        elif isinstance(message, RmaMessage):
            self._handle_rma(message)
        else:
            raise ValueError(f"unexpected message at node {self.node}: {type(message).__name__}")

    def _handle_rra(self, message: RraMessage) -> None:
        if message.kind == "write":
            self.registers.write(message.address, message.value)
        elif message.kind == "read_request":
            value = self.registers.read(message.address)
            reply = RraMessage("read_response", self.node, HOST_ADDRESS, message.address, value, message.request_id)
            self.fabric.send(reply, self.node)
        else:
            raise ValueError(f"node cannot handle RRA kind {message.kind!r}")

    def _handle_rma(self, message: RmaMessage) -> None:
        if message.kind == "put":
            self.memory.write(message.region_offset, message.payload)
            if "responder" in message.notif_flags:
                self.notifications.append(Notification("responder", b"", self.scheduler.now))
            if "completer" in message.notif_flags:
                self.notifications.append(Notification("completer", message.completer_payload, self.scheduler.now))
            if message.region_offset == CREDIT_REGION_BASE and len(message.payload) == 8:
                self._on_credit(struct.unpack("<Q", message.payload)[0])
        elif message.kind == "get_request":
            payload = self.memory.read(message.region_offset, message.length)
            reply = RmaMessage(
                "get_response", self.node, HOST_ADDRESS, message.region_offset, payload,
                frozenset(), b"", 0, message.request_id,
            )
            self.fabric.send(reply, self.node)
        else:
            raise ValueError(f"node cannot handle RMA kind {message.kind!r}")

    def _on_credit(self, read_ptr: int) -> None:
        # stale credit (delayed or duplicated) never moves the pointer backwards
        if read_ptr > self.credit_read_ptr:
            self.credit_read_ptr = read_ptr
            self._drain_pending()

    def _commit_config(self) -> None:
        self.registers.apply_to(self.pipeline)
