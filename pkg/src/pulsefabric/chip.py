"""Simplified spiking-chip model.

Neurons are counting integrate-and-reset units: a neuron spikes once per
`integration_threshold` received inputs. Outgoing events carry a 14-bit source address
and an 8-bit timestamp that wraps every 256 clock ticks; the chip-to-FPGA link releases
at most `max_events_per_cycle` events per tick, delaying the excess in FIFO order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .engine import SimTime

NEURON_ADDRESS_BITS = 14
NEURON_ADDRESS_SPACE = 1 << NEURON_ADDRESS_BITS
TIMESTAMP_WRAP = 256
MAX_NEURONS_PER_CHIP = 512


class UnknownNeuron(Exception):
    """A neuron address outside the chip's configured population."""


class NonMonotonicSchedule(Exception):
    """An external spike schedule was not strictly increasing."""


@dataclass(frozen=True)
class ChipEvent:
    """One outgoing pulse: full-width emit time is simulator-internal; only the 8-bit
    wrapped timestamp is visible on the wire."""

    address: int
    timestamp8: int
    emit_time: SimTime


@dataclass
class ChipConfig:
    neuron_count: int = 512
    integration_threshold: int = 1  # input events required per output spike
    refractory_ns: SimTime = 0      # 0 disables the refractory period
    tick_ns: SimTime = 8            # one 125 MHz FPGA clock cycle
    max_events_per_cycle: int = 2   # chip-to-FPGA link rate limit

    def __post_init__(self) -> None:
        if not 1 <= self.neuron_count <= MAX_NEURONS_PER_CHIP:
            raise ValueError(f"neuron_count must be in [1, {MAX_NEURONS_PER_CHIP}]")
        if self.integration_threshold < 1:
            raise ValueError("integration_threshold must be >= 1")
        if self.tick_ns <= 0:
            raise ValueError("tick_ns must be positive")
        if self.max_events_per_cycle < 1:
            raise ValueError("max_events_per_cycle must be >= 1")
        if self.refractory_ns < 0:
            raise ValueError("refractory_ns must be >= 0")


@dataclass
class NeuronState:
    accumulated_inputs: int = 0
    last_spike: SimTime | None = None


class _OutputGate:
    """Chip-to-FPGA link pacing: at most `max_per_tick` releases per tick; overflow
    spills into the following ticks in FIFO order. Emissions must be fed in
    chronological order."""

    def __init__(self, tick_ns: SimTime, max_per_tick: int) -> None:
        self._tick = tick_ns
        self._max = max_per_tick
        self._frontier = -1  # tick index currently being filled
        self._used = 0
        self._last_emit: SimTime = 0

    def admit(self, emit_time: SimTime) -> SimTime:
        if emit_time < self._last_emit:
            raise ValueError("chip emissions must be chronological")
        self._last_emit = emit_time
        tick = emit_time // self._tick
        if tick > self._frontier:
            self._frontier = tick
            self._used = 0
        if self._used >= self._max:
            self._frontier += 1
            self._used = 0
        self._used += 1
        # delayed events release at the start of the tick they spill into
        return emit_time if self._frontier == tick else self._frontier * self._tick


class Chip:
    """Passive spiking-chip state machine.

    `output_sink(event, release_time)` is invoked for every emission; `release_time`
    is when the event clears the rate-limited chip output (>= emit_time).
    """

    def __init__(
        self,
        chip_id: int,
        config: ChipConfig | None = None,
        output_sink: Callable[[ChipEvent, SimTime], None] | None = None,
    ) -> None:
        self.chip_id = chip_id
        self.config = config or ChipConfig()
        self.output_sink = output_sink
        self.emitted: list[ChipEvent] = []
        self.inputs_applied = 0
        self._neurons = [NeuronState() for _ in range(self.config.neuron_count)]
        self._gate = _OutputGate(self.config.tick_ns, self.config.max_events_per_cycle)
        self._released: list[tuple[SimTime, ChipEvent]] = []

    def timestamp8(self, t: SimTime) -> int:
        return (t // self.config.tick_ns) % TIMESTAMP_WRAP

    def apply_input(self, neuron: int, at: SimTime) -> ChipEvent | None:
        """Deliver one input event to `neuron` at time `at`.

        Returns the output spike if the accumulated input count reached the
        integration threshold, else None. A spike falling inside the refractory
        period is swallowed (the inputs are consumed but nothing is emitted), which
        keeps the accumulator below threshold at rest.
        """
        self._check_address(neuron)
        state = self._neurons[neuron]
        state.accumulated_inputs += 1
        self.inputs_applied += 1
        if state.accumulated_inputs < self.config.integration_threshold:
            return None
        state.accumulated_inputs = 0
        refractory = self.config.refractory_ns
        if refractory and state.last_spike is not None and at - state.last_spike < refractory:
            return None
        state.last_spike = at
        return self._emit(neuron, at)

    def emit_external(self, neuron: int, schedule: list[SimTime]) -> list[ChipEvent]:
        """Emit one spike per schedule entry (external drive, bypasses integration)."""
        self._check_address(neuron)
        for earlier, later in zip(schedule, schedule[1:]):
            if later <= earlier:
                raise NonMonotonicSchedule(f"{later} follows {earlier}")
        return [self._emit(neuron, t) for t in schedule]

    def poll_output(self, start: SimTime, end: SimTime) -> list[ChipEvent]:
        """Events released by the rate-limited output in the window [start, end)."""
        return [ev for release, ev in self._released if start <= release < end]

    def spike_rows(self) -> list[tuple[int, int, SimTime, int]]:
        """Recorded output spikes as (chip_id, neuron, emit_time_ns, timestamp8) rows."""
        return [(self.chip_id, ev.address, ev.emit_time, ev.timestamp8) for ev in self.emitted]

    def isi_samples(self) -> list[tuple[int, SimTime]]:
        """Per-neuron inter-spike intervals as (neuron, isi_ns) pairs, in emit order."""
        last_seen: dict[int, SimTime] = {}
        samples: list[tuple[int, SimTime]] = []
        for ev in self.emitted:
            if ev.address in last_seen:
                samples.append((ev.address, ev.emit_time - last_seen[ev.address]))
            last_seen[ev.address] = ev.emit_time
        return samples

    def _emit(self, neuron: int, at: SimTime) -> ChipEvent:
        event = ChipEvent(neuron, self.timestamp8(at), at)
        release = self._gate.admit(at)
        self.emitted.append(event)
        self._released.append((release, event))
        if self.output_sink is not None:
            self.output_sink(event, release)
        return event

    def _check_address(self, neuron: int) -> None:
        if not 0 <= neuron < self.config.neuron_count:
            raise UnknownNeuron(f"neuron {neuron} outside population of {self.config.neuron_count}")
