"""Torus codec, dimension-order routing, and link timing."""

from __future__ import annotations

import random
from dataclasses import dataclass

import pytest

from pulsefabric.engine import Scheduler
from pulsefabric.fabric import (
    Fabric,
    InvalidNode,
    LinkConfig,
    LinkModel,
    NoRoute,
    TorusTopology,
    route_next_hop,
    route_path,
)


@dataclass
class Parcel:
    dest_node: int
    size_bytes: int = 64


def min_ring_hops(src: int, dest: int, topo: TorusTopology) -> int:
    # independent oracle: sum of per-dimension minimal ring distances
    a, b = topo.decode(src), topo.decode(dest)
    total = 0
    for axis in range(3):
        delta = abs(a[axis] - b[axis])
        total += min(delta, topo.dims[axis] - delta)
    return total


def test_codec_is_a_bijection():
    topo = TorusTopology((4, 3, 5))
    seen = set()
    for x in range(4):
        for y in range(3):
            for z in range(5):
                addr = topo.encode(x, y, z)
                assert topo.decode(addr) == (x, y, z)
                seen.add(addr)
    assert seen == set(range(60))


def test_topology_limits():
    with pytest.raises(ValueError):
        TorusTopology((0, 1, 1))
    with pytest.raises(ValueError):
        TorusTopology((256, 256, 2))  # 131072 > 2^16
    TorusTopology((64, 32, 32))  # exactly 2^16 is allowed


def test_local_delivery_when_current_is_dest():
    topo = TorusTopology((4, 4, 4))
    assert route_next_hop(5, 5, topo) is None


def test_minimal_wrap_on_a_ring():
    # ring of 4 in x: 0 -> 3 wraps backwards (distance 1 beats forward distance 3)
    topo = TorusTopology((4, 1, 1))
    assert route_next_hop(0, 3, topo) == (0, -1)
    assert route_next_hop(3, 0, topo) == (0, 1)


def test_tie_breaks_toward_positive():
    topo = TorusTopology((4, 1, 1))
    assert route_next_hop(0, 2, topo) == (0, 1)  # distance 2 both ways


def test_dimension_order_path():
    topo = TorusTopology((4, 4, 4))
    src = topo.encode(0, 0, 0)
    dest = topo.encode(2, 3, 1)
    path = route_path(src, dest, topo)
    assert path == [(0, 1), (0, 1), (1, -1), (2, 1)]  # +x, +x, -y, +z


def test_invalid_node_rejected():
    topo = TorusTopology((2, 2, 2))
    with pytest.raises(InvalidNode):
        route_next_hop(0, 8, topo)
    with pytest.raises(InvalidNode):
        topo.decode(9)


def test_hop_count_matches_minimal_distance_oracle():
    rng = random.Random(99)
    for _ in range(300):
        dims = tuple(rng.randint(1, 8) for _ in range(3))
        topo = TorusTopology(dims)
        src = rng.randrange(topo.node_count)
        dest = rng.randrange(topo.node_count)
        assert len(route_path(src, dest, topo)) == min_ring_hops(src, dest, topo)


def test_serialization_arithmetic():
    # 64 bytes over 12 lanes x 8.4 Gb/s = 100.8 Gb/s -> 512 bits / 100.8e9 s
    # = 5.079... ns, ceiled to 6 ns at the 1 ns tick resolution
    link = LinkModel(LinkConfig(lanes=12, lane_rate_bps=8_400_000_000, latency_ns=600))
    assert link.serialization_ns(64) == 6
    assert link.transmit(64, 0) == 606


def test_packets_on_one_link_never_overlap():
    link = LinkModel(LinkConfig(latency_ns=600))
    first = link.transmit(64, 0)
    second = link.transmit(64, 0)
    assert second == first + link.serialization_ns(64)
    assert link.busy_until == 2 * link.serialization_ns(64)
    assert link.stats.busy_time_ns == 2 * link.serialization_ns(64)


def test_serialization_intervals_disjoint_under_random_load():
    link = LinkModel(LinkConfig(lanes=1, latency_ns=100))
    rng = random.Random(5)
    intervals = []
    now = 0
    for _ in range(200):
        now += rng.randrange(0, 30)
        size = rng.randrange(16, 200)
        before = link.busy_until
        arrival = link.transmit(size, now)
        start = max(now, before)
        intervals.append((start, start + link.serialization_ns(size)))
        assert arrival == intervals[-1][1] + 100
    intervals.sort()
    for (_, end_a), (start_b, _) in zip(intervals, intervals[1:]):
        assert start_b >= end_a


def test_throughput_never_exceeds_capacity():
    link = LinkModel(LinkConfig(lanes=1, lane_rate_bps=8_400_000_000, latency_ns=0))
    now = 0
    for _ in range(1000):
        link.transmit(200, now)
        now = link.busy_until
    elapsed = link.busy_until
    assert link.stats.bytes_sent * 8 * 1_000_000_000 <= link.bandwidth_bps * elapsed


def build_fabric(dims=(2, 1, 1), **link_kwargs):
    sched = Scheduler()
    topo = TorusTopology(dims)
    fabric = Fabric(sched, topo, LinkConfig(**link_kwargs) if link_kwargs else None)
    inbox: dict[int, list] = {node: [] for node in range(topo.node_count)}
    for node in range(topo.node_count):
        fabric.register_receiver(node, lambda pkt, n=node: inbox[n].append((pkt, sched.now)))
    return sched, fabric, inbox


def test_self_addressed_packet_has_zero_fabric_delay():
    sched, fabric, inbox = build_fabric()
    fabric.send(Parcel(dest_node=0), 0)
    sched.run_until_idle()
    assert len(inbox[0]) == 1
    assert inbox[0][0][1] == 0  # delivered at send time


def test_two_node_ring_end_to_end_delay():
    sched, fabric, inbox = build_fabric(dims=(2, 1, 1), lanes=12, lane_rate_bps=8_400_000_000, latency_ns=600)
    fabric.send(Parcel(dest_node=1, size_bytes=64), 0)
    sched.run_until_idle()
    (_, arrive) = inbox[1][0]
    assert arrive == 606  # serialization 6 ns + hop latency 600 ns


def test_multi_hop_transit_records_hops():
    sched, fabric, inbox = build_fabric(dims=(4, 4, 4))
    src = fabric.topo.encode(0, 0, 0)
    dest = fabric.topo.encode(2, 3, 1)
    fabric.send(Parcel(dest_node=dest), src)
    sched.run_until_idle()
    assert len(inbox[dest]) == 1
    assert fabric.transit_log[-1].hops == 4


def test_removed_link_raises_no_route():
    sched, fabric, _ = build_fabric(dims=(2, 1, 1))
    fabric.remove_link(0, (0, 1))
    with pytest.raises(NoRoute):
        fabric.send(Parcel(dest_node=1), 0)


def test_no_receiver_raises_at_delivery():
    sched = Scheduler()
    fabric = Fabric(sched, TorusTopology((2, 1, 1)))
    fabric.send(Parcel(dest_node=1), 0)
    with pytest.raises(NoRoute):
        sched.run_until_idle()
