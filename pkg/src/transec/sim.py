"""Synthetic four-way signalized intersection, the desk-scale trace source.

One queue per approach (north/east/south/west).  Vehicles arrive Poisson,
wait in FIFO order, and discharge at a fixed saturation rate while their
road has green.  Eight induction-loop style sensors report 15-second
counts: "in" sensors see arrivals on the approach, "out" sensors see
vehicles entering each outgoing arm after turning.  Turning is sampled per
departing vehicle (left / straight / right), so outgoing lanes mix traffic
from the two approaches sharing a green phase.

Within a bin, arrivals may depart in the same bin and unused green time is
not banked across bins; this keeps the queue recursion simple while
preserving the saturation-flow cap that the tests check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anneal import make_rng
from .errors import NetworkError
from .traces import TrafficTrace

ARMS = ("east", "south", "west", "north")
ROAD_OF = {"east": "EW", "west": "EW", "north": "NS", "south": "NS"}
# arm the vehicle exits on, by approach arm and turn movement
TURN_EXIT = {
    "north": {"left": "east", "straight": "south", "right": "west"},
    "south": {"left": "west", "straight": "north", "right": "east"},
    "east": {"left": "south", "straight": "west", "right": "north"},
    "west": {"left": "north", "straight": "east", "right": "south"},
}
SENSORS = tuple(f"{arm}_{kind}" for arm in ARMS for kind in ("in", "out"))

INTERVAL_SECONDS = 15.0
DEFAULT_SATURATION = 0.5  # vehicles per second per approach while green


@dataclass(frozen=True)
class SignalSchedule:
    """Cyclic phase plan: consecutive (road, seconds) slots.

    Roads are "EW" or "NS"; at any instant exactly one road has green, which
    encodes the hardware failsafe (no overlapping greens).
    """

    phases: tuple[tuple[str, float], ...] = (("EW", 45.0), ("NS", 45.0))

    def __post_init__(self):
        if not self.phases:
            raise NetworkError("schedule needs at least one phase")
        for road, seconds in self.phases:
            if road not in ("EW", "NS"):
                raise NetworkError(f"unknown road {road!r}")
            if seconds <= 0:
                raise NetworkError("phase durations must be positive")

    @property
    def cycle_seconds(self) -> float:
        return sum(seconds for _road, seconds in self.phases)

    def green_share(self, road: str) -> float:
        total = sum(s for r, s in self.phases if r == road)
        return total / self.cycle_seconds

    def green_in_window(self, road: str, start: float, end: float) -> float:
        """Green seconds for ``road`` inside absolute time [start, end)."""
        cycle = self.cycle_seconds

        def greens_until(x: float) -> float:
            full, pos = divmod(x, cycle)
            acc = 0.0
            offset = 0.0
            for r, seconds in self.phases:
                if r == road:
                    acc += min(max(pos - offset, 0.0), seconds)
                offset += seconds
            per_cycle = sum(s for r, s in self.phases if r == road)
            return full * per_cycle + acc

        return greens_until(end) - greens_until(start)


@dataclass(frozen=True)
class ArrivalModel:
    # Published turn split is 5.3 / 73.7 / 21.1 percent, which adds up to
    # 100.1; the defaults below are that split renormalized to one.
    rate: float = 0.19  # vehicles per second per approach
    p_left: float = 0.053 / 1.001
    p_straight: float = 0.737 / 1.001
    p_right: float = 0.211 / 1.001

    def __post_init__(self):
        if self.rate < 0:
            raise NetworkError("arrival rate must be nonnegative")
        total = self.p_left + self.p_straight + self.p_right
        if abs(total - 1.0) > 1e-9:
            raise NetworkError(f"turn probabilities sum to {total}, expected 1")


def tamper(schedule: SignalSchedule, magnitude: float, favored: str = "EW",
           min_green: float = 0.0) -> SignalSchedule:
    """Shift ``magnitude * cycle`` seconds of green onto the favored road.

    Raises NetworkError when the other road would fall below the minimum
    green floor; a phase shrunk exactly to zero is dropped from the cycle.
    """
    if not (0.0 <= magnitude < 1.0):
        raise NetworkError("magnitude must lie in [0, 1)")
    if favored not in ("EW", "NS"):
        raise NetworkError(f"unknown road {favored!r}")
    if magnitude == 0.0:
        return schedule
    other = "NS" if favored == "EW" else "EW"
    shift = magnitude * schedule.cycle_seconds
    other_total = sum(s for r, s in schedule.phases if r == other)
    if other_total - shift < min_green - 1e-9:
        raise NetworkError(
            f"magnitude {magnitude} leaves {other} below the {min_green}s green floor"
        )
    shrunk = []
    remaining = shift
    for road, seconds in schedule.phases:
        if road == other and remaining > 0:
            take = min(seconds, remaining)
            seconds -= take
            remaining -= take
        if seconds > 1e-12:
            shrunk.append((road, seconds))
    out, given = [], False
    for road, seconds in shrunk:
        if road == favored and not given:
            seconds += shift
            given = True
        out.append((road, seconds))
    if not given:
        out.insert(0, (favored, shift))
    return SignalSchedule(tuple(out))


def _segments_trace(segments, arrivals: ArrivalModel, seed: int,
                    saturation: float, interval: float):
    """Run consecutive (schedule, n_bins) segments with carried queue state.

    Returns (trace, final queue length per approach)."""
    rng = make_rng(seed)
    n_bins_total = sum(n for _s, n in segments)
    in_counts = {arm: np.zeros(n_bins_total) for arm in ARMS}
    out_counts = {arm: np.zeros(n_bins_total) for arm in ARMS}
    queues = {arm: 0 for arm in ARMS}
    credit = {arm: 0.0 for arm in ARMS}
    turn_p = (arrivals.p_left, arrivals.p_straight, arrivals.p_right)

    # arrivals drawn bin-wise up front (month-scale loops stay cheap)
    lam = arrivals.rate * interval
    all_arrivals = {
        arm: (rng.poisson(lam, n_bins_total) if lam > 0
              else np.zeros(n_bins_total, dtype=np.int64))
        for arm in ARMS
    }

    b = 0
    clock = 0.0
    for schedule, n_bins in segments:
        segment_start = clock
        for local in range(n_bins):
            start = segment_start + local * interval
            end = start + interval
            green = {
                road: schedule.green_in_window(road, start - segment_start,
                                               end - segment_start)
                for road in ("EW", "NS")
            }
            for arm in ARMS:
                arrived = int(all_arrivals[arm][b])
                in_counts[arm][b] = arrived
                queue = queues[arm] + arrived
                credit[arm] += saturation * green[ROAD_OF[arm]]
                can_serve = int(credit[arm])
                served = min(queue, can_serve)
                queue -= served
                credit[arm] -= served
                if queue == 0:
                    credit[arm] = 0.0  # unused green is not banked
                queues[arm] = queue
                if served > 0:
                    left, straight, right = rng.multinomial(served, turn_p)
                    exits = TURN_EXIT[arm]
                    out_counts[exits["left"]][b] += left
                    out_counts[exits["straight"]][b] += straight
                    out_counts[exits["right"]][b] += right
            b += 1
        clock += n_bins * interval

    values = np.column_stack(
        [in_counts[arm] if kind == "in" else out_counts[arm]
         for arm in ARMS for kind in ("in", "out")]
    )
    return TrafficTrace(SENSORS, interval, values), dict(queues)


def simulate(schedule: SignalSchedule, arrivals: ArrivalModel,
             duration_seconds: float, seed: int,
             saturation: float = DEFAULT_SATURATION,
             interval_seconds: float = INTERVAL_SECONDS) -> TrafficTrace:
    """One uninterrupted run; duration must be a whole number of intervals."""
    return simulate_detailed(schedule, arrivals, duration_seconds, seed,
                             saturation, interval_seconds)[0]


def simulate_detailed(schedule: SignalSchedule, arrivals: ArrivalModel,
                      duration_seconds: float, seed: int,
                      saturation: float = DEFAULT_SATURATION,
                      interval_seconds: float = INTERVAL_SECONDS):
    """simulate() plus the final queue length per approach (for conservation
    checks)."""
    n_bins = duration_seconds / interval_seconds
    if abs(n_bins - round(n_bins)) > 1e-9:
        raise NetworkError("duration must be a multiple of the interval")
    return _segments_trace([(schedule, int(round(n_bins)))], arrivals, seed,
                           saturation, interval_seconds)


def simulate_attack(schedule: SignalSchedule, magnitude: float,
                    arrivals: ArrivalModel, onset_seconds: float,
                    duration_seconds: float, seed: int,
                    favored: str = "EW",
                    saturation: float = DEFAULT_SATURATION,
                    interval_seconds: float = INTERVAL_SECONDS) -> TrafficTrace:
    """Attack-day protocol: default schedule until onset, tampered schedule
    afterwards, with queues carried across the switch."""
    for name, t in (("onset", onset_seconds), ("duration", duration_seconds)):
        if abs(t / interval_seconds - round(t / interval_seconds)) > 1e-9:
            raise NetworkError(f"{name} must be a multiple of the interval")
    tampered = tamper(schedule, magnitude, favored=favored)
    n_before = int(round(onset_seconds / interval_seconds))
    n_after = int(round((duration_seconds - onset_seconds) / interval_seconds))
    trace, _queues = _segments_trace(
        [(schedule, n_before), (tampered, n_after)], arrivals, seed,
        saturation, interval_seconds,
    )
    return trace


def throughput(trace: TrafficTrace, start_bin: int = 0, stop_bin: int | None = None) -> float:
    """Total vehicles leaving the intersection in [start_bin, stop_bin)."""
    out_cols = [i for i, s in enumerate(trace.sensors) if s.endswith("_out")]
    return float(trace.values[start_bin:stop_bin, out_cols].sum())
