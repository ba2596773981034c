"""Point-queue network loading on a 1-second clock.

A vehicle entering link ``a`` at time ``t`` may leave at ``t + fft(a)``.
Each link discharges through a FIFO exit whose service credit refills at
``capacity`` veh/h; a vehicle also needs space on its next link (storage),
otherwise it and everything behind it wait, which is how queues spill back.
Seconds in which nothing can happen are skipped; the result is identical to
stepping every second.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .demand import TripRecord
from .network import Network
from .route_choice import RouteChoiceModel, choose_index, stream_uniform
from .timetables import CoverageError, GuidanceTable, TollSchedule

__all__ = ["NetworkState", "SimulationResult", "Vehicle", "clone_state", "simulate"]

_UNIT = 3600.0  # service credit consumed by one vehicle (capacity is veh/h)


class Vehicle:
    __slots__ = ("trip", "path", "pos", "entry", "ready", "decisions", "decided", "traversed")

    def __init__(self, trip: TripRecord, path: tuple[int, ...]):
        self.trip = trip
        self.path = path
        self.pos = -1  # -1: waiting at the origin
        self.entry = trip.departure_time
        self.ready = trip.departure_time
        self.decisions = 0
        self.decided = False
        self.traversed: list[int] = []

    def copy(self) -> "Vehicle":
        v = Vehicle.__new__(Vehicle)
        v.trip = self.trip
        v.path = self.path
        v.pos = self.pos
        v.entry = self.entry
        v.ready = self.ready
        v.decisions = self.decisions
        v.decided = self.decided
        v.traversed = list(self.traversed)
        return v


class NetworkState:
    """Vehicles on links and at origins, link service credits and the clock."""

    def __init__(self, network: Network, clock: float = 0.0):
        self.network = network
        self.clock = float(clock)
        self.queues: list[deque] = [deque() for _ in network.links]
        self.waiting: list[deque] = [deque() for _ in network.links]
        self.credit = [max(_UNIT, l.capacity) for l in network.links]

    def vehicles(self):
        for q in self.waiting:
            yield from q
        for q in self.queues:
            yield from q

    @property
    def n_vehicles(self) -> int:
        return sum(len(q) for q in self.queues) + sum(len(q) for q in self.waiting)

    def link_counts(self) -> np.ndarray:
        return np.array([len(q) for q in self.queues], dtype=float)

    def accrued_time(self) -> float:
        return sum(self.clock - v.trip.departure_time for v in self.vehicles())


def clone_state(state: NetworkState) -> NetworkState:
    """Independent copy; the (immutable) network is shared."""
    new = NetworkState.__new__(NetworkState)
    new.network = state.network
    new.clock = state.clock
    new.queues = [deque(v.copy() for v in q) for q in state.queues]
    new.waiting = [deque(v.copy() for v in q) for q in state.waiting]
    new.credit = list(state.credit)
    return new


@dataclass
class SimulationResult:
    trips: list[TripRecord]  # completed during the run
    link_times: np.ndarray  # (links x intervals) mean time of vehicles entering in the interval
    link_counts: np.ndarray  # (links x intervals) entering vehicles
    start: float
    interval: float
    accrued_unfinished: float = 0.0  # sum of (end - departure) over vehicles left in the network
    n_unfinished: int = 0
    n_loaded: int = 0

    @property
    def end_total_time(self) -> float:
        return sum(t.experienced_tt for t in self.trips) + self.accrued_unfinished


def simulate(
    state: NetworkState,
    trips: list[TripRecord],
    guidance: GuidanceTable,
    tolls: Optional[TollSchedule],
    horizon: float,
    seed: int,
    choice: RouteChoiceModel,
    interval: Optional[float] = None,
    uniform: Callable[[int, int, int], float] = stream_uniform,
) -> SimulationResult:
    """Advance ``state`` in place by ``horizon`` seconds, loading ``trips``.

    Route choice happens at departure and, for informed travelers when the
    choice model allows it, again at each node where alternatives diverge.
    Link statistics are aggregated on intervals of ``interval`` seconds
    (default: the guidance interval) starting at the initial clock.
    ``uniform(seed, vehicle, decision)`` supplies the choice draws.
    """
    net = state.network
    t0 = state.clock
    t1 = t0 + horizon
    if guidance.times.shape[0] != net.n_links or not guidance.covers(t0, t1):
        raise CoverageError(f"guidance does not cover [{t0}, {t1}]")
    if tolls is not None and net.n_gantries and not tolls.covers(t0, t1):
        raise CoverageError(f"toll schedule does not cover [{t0}, {t1}]")
    pending = sorted(trips, key=lambda r: (r.departure_time, r.vehicle_id))
    for r in pending:
        if not t0 <= r.departure_time < t1:
            raise ValueError(f"trip {r.vehicle_id} departs outside [{t0}, {t1})")

    width = float(interval or guidance.interval)
    n_int = max(1, math.ceil(horizon / width - 1e-9))
    tt_sum = np.zeros((net.n_links, n_int))
    cnt = np.zeros((net.n_links, n_int))

    links = net.links
    fft = [l.free_flow_time for l in links]
    cap = [l.capacity for l in links]
    cap_max = [max(_UNIT, c) for c in cap]
    storage = [l.storage for l in links]
    queues, waiting, credit = state.queues, state.waiting, state.credit
    en_route = choice.en_route
    prob_cache: dict = {}
    completed: list[TripRecord] = []

    def choose(v: Vehicle, node: int, t: float):
        key = (v.trip.od, node, t, v.trip.informed)
        hit = prob_cache.get(key)
        if hit is None:
            hit = choice.probabilities(v.trip.od, node, t, guidance, tolls, v.trip.informed)
            prob_cache[key] = hit
        probs, paths = hit
        if len(paths) == 1:
            return paths[0]
        k = choose_index(probs, uniform(seed, v.trip.vehicle_id, v.decisions))
        v.decisions += 1
        return paths[k]

    def record(li: int, v: Vehicle, leave: float):
        if v.entry >= t0:
            h = int((v.entry - t0) // width)
            if h < n_int:
                tt_sum[li, h] += leave - v.entry
                cnt[li, h] += 1

    s = math.ceil(t0)
    pi = 0
    n_pending = len(pending)
    while s < t1:
        moved = False
        while pi < n_pending and pending[pi].departure_time <= s:
            trip = pending[pi]
            pi += 1
            v = Vehicle(trip, ())
            v.path = choose(v, trip.origin, float(trip.departure_time))
            waiting[v.path[0]].append(v)
        for li in range(len(links)):
            q = queues[li]
            while q and q[0].ready <= s and credit[li] >= _UNIT:
                v = q[0]
                if v.pos == len(v.path) - 1:
                    q.popleft()
                    credit[li] -= _UNIT
                    record(li, v, s)
                    completed.append(
                        replace(
                            v.trip,
                            chosen_path=tuple(links[i].id for i in v.traversed),
                            experienced_tt=s - v.trip.departure_time,
                        )
                    )
                    moved = True
                    continue
                if en_route and v.trip.informed and not v.decided:
                    v.decided = True
                    node = links[li].target
                    if len(choice.alternatives(v.trip.od, node)[1]) > 1:
                        v.path = v.path[: v.pos + 1] + choose(v, node, float(s))
                nxt = v.path[v.pos + 1]
                if len(queues[nxt]) >= storage[nxt]:
                    break
                q.popleft()
                credit[li] -= _UNIT
                record(li, v, s)
                v.pos += 1
                v.entry = s
                v.ready = s + fft[nxt]
                v.decided = False
                v.traversed.append(nxt)
                queues[nxt].append(v)
                moved = True
        for li in range(len(links)):
            w = waiting[li]
            q = queues[li]
            while w and len(q) < storage[li]:
                v = w.popleft()
                v.pos = 0
                v.entry = s
                v.ready = s + fft[li]
                v.traversed.append(li)
                q.append(v)
                moved = True

        # next instant at which anything can change
        if moved:
            nxt_s = s + 1
        else:
            nxt_s = math.inf
            if pi < n_pending:
                nxt_s = max(s + 1, math.ceil(pending[pi].departure_time))
            for li in range(len(links)):
                q = queues[li]
                if not q:
                    continue
                head = q[0]
                if head.ready > s:
                    cand = math.ceil(head.ready)
                elif credit[li] < _UNIT:
                    cand = s + max(1, math.ceil((_UNIT - credit[li]) / cap[li]))
                else:
                    continue  # blocked downstream: freed only by another link's event
                if cand < nxt_s:
                    nxt_s = cand
            nxt_s = min(nxt_s, math.ceil(t1))
        k = nxt_s - s
        for li in range(len(links)):
            # refill once per second while below the cap; the overshoot of the
            # crossing second is kept so fractional headways average out
            if credit[li] < cap_max[li]:
                steps = min(k, math.ceil((cap_max[li] - credit[li]) / cap[li]))
                credit[li] += cap[li] * steps
        s = nxt_s

    state.clock = t1
    # censored link times for vehicles still on a link: estimated exit from queue position
    for li, q in enumerate(queues):
        for pos, v in enumerate(q):
            if v.entry < t0:
                continue
            h = int((v.entry - t0) // width)
            if h >= n_int:
                continue
            wait = max(0.0, (pos + 1) * _UNIT - credit[li]) / cap[li]
            est = max(v.ready, t1 + wait)
            tt_sum[li, h] += est - v.entry
            cnt[li, h] += 1
    fft_arr = np.array(fft)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(cnt > 0, tt_sum / np.maximum(cnt, 1), fft_arr[:, None])
    mean = np.maximum(mean, fft_arr[:, None])
    unfinished = state.n_vehicles
    return SimulationResult(
        trips=completed,
        link_times=mean,
        link_counts=cnt,
        start=t0,
        interval=width,
        accrued_unfinished=state.accrued_time(),
        n_unfinished=unfinished,
        n_loaded=n_pending,
    )
