"""Brute-force reference model and random scenario generators.

The oracle re-computes every event's fate by direct chronological evaluation of
lookup -> deadline check -> path delay, using plain arithmetic over ordered lists:
no scheduler, no timers, no bucket state machines. Scenario generators constrain
values so that flush-timer instants (congruent to 3 mod 8) can never collide with
push instants (always even), keeping equal-time tie-breaking out of the contract
being checked.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, field

from pulsefabric.scenario import ScenarioConfig


def expand_by_enumeration(ts8: int, now: int, tick: int) -> int:
    """Pick the unique congruent tick start inside (now - 128*tick, now + 128*tick]."""
    base = now // tick
    matches = [
        candidate * tick
        for candidate in range(base - 256, base + 257)
        if candidate % 256 == ts8 and now - 128 * tick < candidate * tick <= now + 128 * tick
    ]
    assert len(matches) == 1, f"window must contain exactly one candidate, got {matches}"
    return matches[0]


def serialization_ceil_ns(size_bytes: int, lanes: int, lane_rate_bps: int) -> int:
    bits = size_bytes * 8
    bandwidth = lanes * lane_rate_bps
    return (bits * 1_000_000_000 + bandwidth - 1) // bandwidth


@dataclass
class OracleOutcome:
    deliveries: list[tuple[int, int, int]] = field(default_factory=list)  # node, neuron, apply time
    dropped_unmapped: int = 0
    dropped_expired_tx: int = 0
    dropped_expired_rx: int = 0
    events_total: int = 0


@dataclass
class _Packet:
    src_node: int
    dest_node: int
    depart: int
    events: list[tuple[int, int]]  # (dest_neuron, deadline)


def evaluate(config: ScenarioConfig, trains: dict[tuple[int, int], list[int]], t0: int) -> OracleOutcome:
    """Replay the scenario physics chronologically.

    `trains` are the realized input times (relative to the experiment start t0), as
    recorded by the harness. Only single-hop topologies (every populated pair at
    torus distance <= 1) are supported, which the generators guarantee.
    """
    tick = config.tick_ns
    end = t0 + config.duration_ns
    outcome = OracleOutcome()

    packets: list[_Packet] = []
    for node in config.nodes:
        emissions: list[tuple[int, int, int]] = []  # (time, input index, neuron)
        for idx, spec in enumerate(node.inputs):
            for t in trains[(node.address, idx)]:
                emissions.append((t0 + t, idx, spec.neuron))
        emissions.sort(key=lambda e: (e[0], e[1]))

        # chip-to-FPGA gate: at most max_events_per_cycle releases per tick
        releases: list[tuple[int, int, int]] = []  # (release, emit, neuron)
        per_tick: dict[int, int] = defaultdict(int)
        cursor = 0
        for emit, _, neuron in emissions:
            slot = max(emit // tick, cursor)
            while per_tick[slot] >= node.chip.max_events_per_cycle:
                slot += 1
            per_tick[slot] += 1
            cursor = slot
            release = emit if slot == emit // tick else slot * tick
            releases.append((release, emit, neuron))

        routes = {r.source: r for r in node.routes}
        buckets = {b.index: b for b in node.buckets}
        pending: dict[int, list[tuple[int, int]]] = {b: [] for b in buckets}

        def flush_time(index: int) -> int:
            return min(d for _, d in pending[index]) - buckets[index].transit_budget_ns

        def flush_due(limit: int, inclusive: bool) -> None:
            while True:
                due = [
                    (flush_time(i), i)
                    for i in pending
                    if pending[i] and (flush_time(i) <= limit if inclusive else flush_time(i) < limit)
                ]
                if not due:
                    return
                at, index = min(due)
                packets.append(_Packet(node.address, buckets[index].dest_node, at, pending[index][:]))
                pending[index].clear()

        for push, emit, neuron in releases:
            outcome.events_total += 1
            flush_due(push, inclusive=False)
            route = routes.get(neuron)
            if route is None:
                outcome.dropped_unmapped += 1
                continue
            ts8 = (emit // tick) % 256
            deadline = expand_by_enumeration(ts8, push, tick) + route.axonal_delay_ns
            bucket = buckets[route.bucket]
            if deadline <= push + bucket.transit_budget_ns:
                outcome.dropped_expired_tx += 1
                continue
            pending[route.bucket].append((route.dest_neuron, deadline))
            if len(pending[route.bucket]) >= bucket.capacity:
                packets.append(_Packet(node.address, bucket.dest_node, push, pending[route.bucket][:]))
                pending[route.bucket].clear()

        flush_due(end, inclusive=True)  # timers that fire inside the run window
        for index in pending:  # end-of-run drain flushes the rest, in bucket order
            if pending[index]:
                packets.append(_Packet(node.address, buckets[index].dest_node, end, pending[index][:]))
                pending[index].clear()

    # per-link serialization; packets were appended in per-node creation order and
    # every route is a single hop, so each (src, dest) pair owns one link
    header = config.header_bytes
    per_event = config.event_bytes
    busy: dict[tuple[int, int], int] = defaultdict(int)
    for packet in packets:
        if packet.src_node == packet.dest_node:
            arrival = packet.depart  # zero fabric delay
        else:
            size = header + len(packet.events) * per_event
            key = (packet.src_node, packet.dest_node)
            start = max(packet.depart, busy[key])
            busy[key] = start + serialization_ceil_ns(size, config.lanes, config.lane_rate_bps)
            arrival = busy[key] + config.link_latency_ns
        for neuron, deadline in packet.events:
            if deadline >= arrival:
                outcome.deliveries.append((packet.dest_node, neuron, deadline))
            else:
                outcome.dropped_expired_rx += 1
    return outcome


# -- scenario generators -----------------------------------------------------------

SMALL_DIMS = [(2, 1, 1), (3, 1, 1), (1, 3, 1), (1, 1, 2), (1, 2, 1), (1, 1, 3)]

# flush instants are deadline - budget = (multiple of 8) + 3 - (multiple of 8);
# push instants stay even, so a timer can never tie with a push
def _odd_delay(rng: random.Random) -> int:
    return 8 * rng.randint(2, 4000) + 3


def _budget(rng: random.Random) -> int:
    return rng.choice([0, 8, 16, 160, 800, 1600])


def random_small_scenario(rng: random.Random) -> dict:
    """<= 3 nodes, <= 100 events, non-spiking targets: oracle-comparable."""
    dims = rng.choice(SMALL_DIMS)
    node_count = dims[0] * dims[1] * dims[2]
    duration = 8 * rng.randint(8_000, 12_000)

    nodes = []
    for address in range(node_count):
        bucket_count = rng.randint(1, 3)
        buckets = [
            {
                "index": i,
                "dest_node": rng.randrange(node_count),
                "capacity": rng.randint(1, 6),
                "transit_budget_ns": _budget(rng),
            }
            for i in range(bucket_count)
        ]
        routes = []
        for source in range(16):
            if rng.random() < 0.6:
                routes.append(
                    {
                        "source": source,
                        "dest_neuron": rng.randint(32, 63),
                        "bucket": rng.randrange(bucket_count),
                        "axonal_delay_ns": _odd_delay(rng) if rng.random() < 0.8 else 8 * 1 + 3,
                    }
                )
        inputs = []
        for neuron in rng.sample(range(16), rng.randint(0, 2)):
            if rng.random() < 0.5:
                inputs.append(
                    {
                        "neuron": neuron,
                        "kind": "regular",
                        "start_ns": 8 * rng.randint(0, 500),
                        "period_ns": 8 * rng.randint(2, 400),
                        "count": rng.randint(1, 10),
                    }
                )
            else:
                inputs.append(
                    {
                        "neuron": neuron,
                        "kind": "poisson",
                        "rate_hz": rng.choice([1e6, 5e6]),
                        "start_ns": 8 * rng.randint(0, 500),
                        "duration_ns": 8 * rng.randint(100, 400),
                    }
                )
        nodes.append(
            {
                "address": address,
                # targets never spike on their own: delivered events stop here
                "chip": {"neuron_count": 64, "integration_threshold": 1_000_000},
                "routes": routes,
                "buckets": buckets,
                "inputs": inputs,
            }
        )

    return {
        "topology": {
            "dims": list(dims),
            "lanes": rng.randint(1, 12),
            "lane_rate_bps": 8_400_000_000,
            "link_latency_ns": rng.randint(50, 1200),
        },
        "tick_ns": 8,
        "packet": {"header_bytes": 16, "event_bytes": 8},
        "delivery_mode": "deadline",
        "duration_ns": duration,
        "host": {"attach_node": 0, "record_spikes": False},
        "nodes": nodes,
    }


def random_stress_scenario(rng: random.Random) -> dict:
    """Bigger randomized scenario for deadline-safety audits (cascades allowed)."""
    dims = rng.choice([(2, 1, 1), (2, 2, 1), (3, 2, 1), (2, 2, 2), (4, 2, 1)])
    node_count = dims[0] * dims[1] * dims[2]
    duration = 8 * rng.randint(20_000, 40_000)

    nodes = []
    for address in range(node_count):
        buckets = [
            {
                "index": i,
                "dest_node": rng.randrange(node_count),
                "capacity": rng.choice([1, 2, 4, 8, 16]),
                "transit_budget_ns": rng.choice([0, 100, 500, 2000, 5000]),
            }
            for i in range(rng.randint(1, 3))
        ]
        routes = [
            {
                "source": source,
                # delivered events land on 16..63 which are never routed sources,
                # so spike cascades die after one generation
                "dest_neuron": rng.randint(16, 63),
                "bucket": rng.randrange(len(buckets)),
                "axonal_delay_ns": rng.randint(500, 60_000),
            }
            for source in range(16)
            if rng.random() < 0.7
        ]
        inputs = [
            {
                "neuron": neuron,
                "kind": "poisson",
                "rate_hz": rng.choice([2e6, 1e7, 5e7]),
                "start_ns": 0,
            }
            for neuron in rng.sample(range(16), rng.randint(1, 4))
        ]
        nodes.append(
            {
                "address": address,
                "chip": {
                    "neuron_count": 64,
                    "integration_threshold": rng.choice([1, 1, 2, 3]),
                    "max_events_per_cycle": 2,
                },
                "routes": routes,
                "buckets": buckets,
                "inputs": inputs,
            }
        )

    return {
        "topology": {
            "dims": list(dims),
            "lanes": rng.randint(1, 12),
            "lane_rate_bps": 8_400_000_000,
            "link_latency_ns": rng.randint(50, 1200),
        },
        "tick_ns": 8,
        "delivery_mode": "deadline",
        "duration_ns": duration,
        "host": {"attach_node": 0, "record_spikes": False},
        "nodes": nodes,
    }
