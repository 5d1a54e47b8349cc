"""Deterministic discrete-event core: an integer-nanosecond clock, an action queue with
FIFO tie-breaking, and seeded random streams shared by every other component."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Callable

SimTime = int
"""Simulation time in integer nanoseconds since simulation start.

Python integers never wrap, so additions cannot silently overflow; negative times are
rejected at the scheduling boundary instead.
"""


class SchedulingInPast(Exception):
    """An action was scheduled before the current simulation time."""


@dataclass
class ScheduledAction:
    """Queue entry. (fire_at, sequence) is unique and defines the total execution order;
    `target` is a free-form component label used by observers and debugging."""

    fire_at: SimTime
    sequence: int
    target: str
    fn: Callable[[], None]
    cancelled: bool = False


class Scheduler:
    """Single-threaded event loop.

    Components are passive state machines: they run only when an action they scheduled
    fires. Equal-time actions execute in insertion (FIFO) order. Instances share no
    global state, so independent scenarios can run on separate threads.
    """

    def __init__(self) -> None:
        self._now: SimTime = 0
        self._sequence = 0
        self._queue: list[tuple[SimTime, int, ScheduledAction]] = []
        #: optional hook invoked with each action just before it runs (order auditing)
        self.observer: Callable[[ScheduledAction], None] | None = None

    @property
    def now(self) -> SimTime:
        return self._now

    def schedule(self, at: SimTime, fn: Callable[[], None], *, target: str = "") -> ScheduledAction:
        """Schedule `fn` to run at time `at`. Returns a handle usable with cancel()."""
        if at < self._now:
            raise SchedulingInPast(f"cannot schedule at t={at} ns; now is t={self._now} ns")
        action = ScheduledAction(at, self._sequence, target, fn)
        self._sequence += 1
        heapq.heappush(self._queue, (at, action.sequence, action))
        return action

    def cancel(self, action: ScheduledAction) -> None:
        """Mark a pending action as cancelled; it will be skipped when popped."""
        action.cancelled = True

    def pending_count(self) -> int:
        return sum(1 for _, _, a in self._queue if not a.cancelled)

    def next_time(self) -> SimTime | None:
        """Fire time of the earliest live action, or None when idle."""
        while self._queue and self._queue[0][2].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else None

    def run_until(self, t_end: SimTime) -> int:
        """Execute every action with fire_at <= t_end, then set the clock to t_end.

        Actions scheduled while running are honoured if they also fall inside the
        window. Returns the number of actions executed.
        """
        if t_end < self._now:
            raise ValueError(f"run_until({t_end}) is before now={self._now}")
        executed = 0
        while self._queue and self._queue[0][0] <= t_end:
            executed += self._step()
        self._now = t_end
        return executed

    def run_until_idle(self, max_actions: int | None = None) -> int:
        """Execute actions until the queue drains. The clock stops at the last action."""
        executed = 0
        while self._queue:
            executed += self._step()
            if max_actions is not None and executed >= max_actions:
                raise RuntimeError(f"still busy after {executed} actions")
        return executed

    def _step(self) -> int:
        _, _, action = heapq.heappop(self._queue)
        if action.cancelled:
            return 0
        self._now = action.fire_at
        if self.observer is not None:
            self.observer(action)
        action.fn()
        return 1


def seeded_rng(seed: int) -> random.Random:
    """Deterministic random stream: identical seeds yield identical streams across runs
    and platforms (Mersenne Twister with a fixed integer seed)."""
    return random.Random(seed)
