"""Time-dependent OD demand, trip realization and day-to-day perturbation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "ODDemand",
    "TripRecord",
    "expected_trips",
    "generate_trips",
    "load_demand",
    "load_historical_times",
    "perturb",
]


@dataclass(frozen=True)
class ODDemand:
    """Expected departures per (OD pair, interval).

    ``rates[i, h]`` is the expected number of vehicles of ``od_pairs[i]``
    departing in ``[start + h*interval, start + (h+1)*interval)``.
    """

    od_pairs: tuple[tuple[int, int], ...]
    rates: np.ndarray
    interval: float
    start: float = 0.0

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != len(self.od_pairs):
            raise ValueError("rates must be (n_od x n_intervals)")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError("rates must be finite and non-negative")
        if self.interval <= 0:
            raise ValueError("interval width must be positive")
        object.__setattr__(self, "rates", rates)

    @property
    def n_intervals(self) -> int:
        return self.rates.shape[1]

    @property
    def end(self) -> float:
        return self.start + self.interval * self.n_intervals

    def scaled(self, factor: float) -> "ODDemand":
        return ODDemand(self.od_pairs, self.rates * factor, self.interval, self.start)

    def window(self, t0: float, t1: float) -> "ODDemand":
        """Restrict to intervals starting in ``[t0, t1)``; other cells set to zero."""
        starts = self.start + self.interval * np.arange(self.n_intervals)
        mask = (starts >= t0 - 1e-9) & (starts < t1 - 1e-9)
        return ODDemand(self.od_pairs, self.rates * mask[None, :], self.interval, self.start)


@dataclass
class TripRecord:
    vehicle_id: int
    origin: int
    destination: int
    departure_time: float
    informed: bool = True
    chosen_path: Optional[tuple[int, ...]] = None  # link ids actually traversed
    experienced_tt: Optional[float] = None

    @property
    def od(self) -> tuple[int, int]:
        return (self.origin, self.destination)


def perturb(demand: ODDemand, cov: float, seed: int) -> ODDemand:
    """Independent Normal(mean=cell, sd=cov*cell) draw per cell, negatives cut to 0."""
    if cov < 0:
        raise ValueError("coefficient of variation must be non-negative")
    if cov == 0:
        return ODDemand(demand.od_pairs, demand.rates.copy(), demand.interval, demand.start)
    rng = np.random.default_rng(seed)
    draws = demand.rates + cov * demand.rates * rng.standard_normal(demand.rates.shape)
    return ODDemand(demand.od_pairs, np.maximum(draws, 0.0), demand.interval, demand.start)


def generate_trips(
    demand: ODDemand,
    informed_fraction: float = 1.0,
    seed: int = 0,
    id_start: int = 0,
) -> list[TripRecord]:
    """Poisson departure counts per cell, whole-second uniform departure times.

    Trips come back sorted by (departure time, vehicle id) and carry
    consecutive ids from ``id_start``.
    """
    if not 0.0 <= informed_fraction <= 1.0:
        raise ValueError("informed_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(demand.rates)
    drafts = []
    width = int(round(demand.interval))
    for i, (o, d) in enumerate(demand.od_pairs):
        for h in range(demand.n_intervals):
            k = int(counts[i, h])
            if k == 0:
                continue
            t0 = demand.start + h * demand.interval
            offsets = rng.integers(0, width, size=k)
            informed = rng.random(k) < informed_fraction
            for off, inf in zip(offsets, informed):
                drafts.append((float(t0 + off), o, d, bool(inf)))
    drafts.sort(key=lambda r: r[0])
    return [
        TripRecord(id_start + n, o, d, t, informed=inf)
        for n, (t, o, d, inf) in enumerate(drafts)
    ]


def expected_trips(
    demand: ODDemand,
    t0: float,
    t1: float,
    informed_fraction: float = 1.0,
    id_start: int = 0,
) -> list[TripRecord]:
    """Deterministic realization: each cell's rounded rate spread evenly over it.

    Only departures inside ``[t0, t1)`` are kept, so overlapping windows
    realize the shared cells identically.
    """
    if not 0.0 <= informed_fraction <= 1.0:
        raise ValueError("informed_fraction must lie in [0, 1]")
    out = []
    vid = id_start  # numbered over the whole demand so ids do not depend on the window
    for h in range(demand.n_intervals):
        s = demand.start + h * demand.interval
        for i, (o, d) in enumerate(demand.od_pairs):
            n = int(math.floor(demand.rates[i, h] + 0.5))
            n_inf = int(math.floor(n * informed_fraction + 0.5))
            for k in range(n):
                t = float(math.floor(s + (k + 0.5) * demand.interval / n))
                if t0 <= t < t1:
                    # informed travelers spread evenly through the cell
                    inf = (k * n_inf) // n != ((k + 1) * n_inf) // n
                    out.append(TripRecord(vid, o, d, t, informed=inf))
                vid += 1
    out.sort(key=lambda r: (r.departure_time, r.vehicle_id))
    return out


def load_demand(path: str | Path, interval: float, start: float = 0.0) -> ODDemand:
    """Read rows ``origin,destination,interval,rate`` (header optional)."""
    cells: dict[tuple[int, int], dict[int, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                o, d, h, rate = int(row[0]), int(row[1]), int(row[2]), float(row[3])
            except ValueError:
                if row[0].strip().lower() in {"origin", "o"}:
                    continue
                raise
            cells.setdefault((o, d), {})[h] = cells.get((o, d), {}).get(h, 0.0) + rate
    ods = tuple(sorted(cells))
    n = max((h for v in cells.values() for h in v), default=-1) + 1
    rates = np.zeros((len(ods), n))
    for i, od in enumerate(ods):
        for h, r in cells[od].items():
            rates[i, h] = r
    return ODDemand(ods, rates, interval, start)


def load_historical_times(path: str | Path) -> list[tuple[int, int, float]]:
    """Read rows ``link,interval,seconds`` for travelers without guidance access."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip().lower() == "link":
                continue
            rows.append((int(row[0]), int(row[1]), float(row[2])))
    return rows
