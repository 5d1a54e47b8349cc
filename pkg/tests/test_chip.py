"""Chip model: integration threshold, wrapped timestamps, output rate limiting."""

from __future__ import annotations

import random

import pytest

from pulsefabric.chip import (
    Chip,
    ChipConfig,
    NonMonotonicSchedule,
    UnknownNeuron,
)


def make_chip(**kwargs) -> Chip:
    return Chip(0, ChipConfig(**kwargs))


def test_every_input_spikes_at_threshold_one():
    chip = make_chip(integration_threshold=1)
    event = chip.apply_input(3, 1000)
    assert event is not None
    assert event.address == 3
    assert event.emit_time == 1000


def test_single_input_below_threshold_two():
    chip = make_chip(integration_threshold=2)
    assert chip.apply_input(0, 1000) is None
    assert chip._neurons[0].accumulated_inputs == 1


def test_threshold_two_doubles_the_interval():
    # inputs at 1000 and 2000 -> one spike at 2000; target interval is twice the
    # source interval for a regular train
    chip = make_chip(integration_threshold=2)
    assert chip.apply_input(0, 1000) is None
    spike = chip.apply_input(0, 2000)
    assert spike is not None and spike.emit_time == 2000

    fresh = make_chip(integration_threshold=2)
    period = 500
    for i in range(100):
        fresh.apply_input(0, 1000 + i * period)
    intervals = [isi for _, isi in fresh.isi_samples()]
    assert len(fresh.emitted) == 50
    assert all(isi == 2 * period for isi in intervals)


def test_unknown_neuron_rejected():
    chip = make_chip(neuron_count=4)
    with pytest.raises(UnknownNeuron):
        chip.apply_input(4, 0)
    with pytest.raises(UnknownNeuron):
        chip.emit_external(100, [10])


def test_timestamp8_arithmetic():
    chip = make_chip()
    events = chip.emit_external(5, [130])
    assert events[0].timestamp8 == 16  # floor(130/8) = 16
    chip2 = make_chip()
    events = chip2.emit_external(5, [2048])
    assert events[0].timestamp8 == 0  # floor(2048/8) = 256 wraps to 0


def test_empty_schedule_is_empty_list():
    chip = make_chip()
    assert chip.emit_external(0, []) == []


def test_non_monotonic_schedule_rejected():
    chip = make_chip()
    with pytest.raises(NonMonotonicSchedule):
        chip.emit_external(0, [10, 10])
    with pytest.raises(NonMonotonicSchedule):
        chip.emit_external(0, [20, 10])


def test_timestamp_matches_emit_time_for_random_times():
    chip = make_chip(max_events_per_cycle=512)
    rng = random.Random(7)
    t = 0
    for _ in range(2000):
        t += rng.randrange(0, 40)
        (event,) = chip.emit_external(rng.randrange(0, 512), [t])
        assert event.timestamp8 == (t // 8) % 256


def test_three_spikes_in_one_tick_spill_to_the_next():
    chip = make_chip()
    chip.emit_external(0, [0])
    chip.emit_external(1, [1])
    chip.emit_external(2, [2])
    assert [e.address for e in chip.poll_output(0, 8)] == [0, 1]
    assert [e.address for e in chip.poll_output(8, 16)] == [2]


def test_single_spike_released_same_tick():
    chip = make_chip()
    chip.emit_external(0, [12])
    assert [e.emit_time for e in chip.poll_output(8, 16)] == [12]


def test_sustained_two_per_tick_never_backlogs():
    # 2 events per 8 ns tick is the sustained chip output ceiling: 250 Mevents/s
    chip = make_chip()
    for tick in range(1000):
        chip.emit_external(0, [tick * 8])
        chip.emit_external(1, [tick * 8 + 1])
    released = chip.poll_output(0, 8000)
    assert len(released) == 2000  # all within the emission window, no spill
    assert len(released) * 1_000_000_000 // 8000 == 250_000_000  # events per second


def test_rate_limit_bounds_any_window():
    chip = make_chip()
    rng = random.Random(21)
    t = 0
    for _ in range(500):
        t += rng.randrange(0, 6)
        chip._emit(rng.randrange(0, 8), t)
    # over any window of whole ticks, at most 2 releases per tick
    releases = sorted(r for r, _ in chip._released)
    last = releases[-1] // 8
    for start in range(0, last + 1):
        for width in (1, 3, 10):
            lo, hi = start * 8, (start + width) * 8
            count = sum(1 for r in releases if lo <= r < hi)
            assert count <= 2 * width


def test_spike_count_equals_input_count_without_refractory():
    chip = make_chip(integration_threshold=1)
    for i in range(300):
        chip.apply_input(i % 32, i * 10)
    assert len(chip.emitted) == 300
    assert chip.inputs_applied == 300


def test_refractory_swallows_spike_and_resets_accumulator():
    chip = make_chip(integration_threshold=1, refractory_ns=100)
    assert chip.apply_input(0, 0) is not None
    assert chip.apply_input(0, 50) is None  # inside refractory: swallowed
    assert chip._neurons[0].accumulated_inputs == 0
    assert chip.apply_input(0, 200) is not None


def test_spike_rows_export_shape():
    chip = Chip(7, ChipConfig())
    chip.emit_external(3, [16])
    assert chip.spike_rows() == [(7, 3, 16, 2)]
