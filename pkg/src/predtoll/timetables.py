"""Time-indexed tables shared by route choice, supply and the optimizer.

Both tables are piecewise constant over intervals of equal width starting at
``start``.  Look-ups past the last interval reuse the last column/row: a
traveler estimating a far-future link entry has nothing better to go on.
Look-ups before ``start`` are coverage gaps and raise.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CoverageError", "GuidanceTable", "TollSchedule"]


class CoverageError(LookupError):
    """A time or link outside what a table covers was requested."""


def _interval_index(t: float, start: float, interval: float, n: int) -> int:
    k = int((t - start) // interval)
    if k < 0:
        raise CoverageError(f"time {t} precedes table start {start}")
    return k if k < n else n - 1


@dataclass
class GuidanceTable:
    """Link travel times (seconds), one row per link index, one column per interval."""

    times: np.ndarray
    start: float
    interval: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 2:
            raise ValueError("guidance times must be a (links x intervals) matrix")

    @property
    def n_intervals(self) -> int:
        return self.times.shape[1]

    @property
    def rows(self) -> list[list[float]]:
        # plain-list copy for scalar look-ups; tables are not mutated after use starts
        cached = self.__dict__.get("_rows")
        if cached is None or len(cached) != self.times.shape[0]:
            cached = self.times.tolist()
            self.__dict__["_rows"] = cached
        return cached

    @property
    def end(self) -> float:
        return self.start + self.interval * self.n_intervals

    def time(self, link: int, t: float) -> float:
        return self.times[link, _interval_index(t, self.start, self.interval, self.n_intervals)]

    def covers(self, t0: float, t1: float) -> bool:
        return self.start <= t0 and t1 <= self.end + 1e-9

    def resample(self, start: float, n_intervals: int, interval: float | None = None) -> "GuidanceTable":
        """Re-grid onto ``n_intervals`` intervals of width ``interval`` from ``start``.

        Each new interval takes the column in force at its start; intervals
        before this table's start take its first column.
        """
        width = self.interval if interval is None else float(interval)
        cols = []
        for h in range(n_intervals):
            t = start + h * width
            k = max(0, min(int((t - self.start) // self.interval), self.n_intervals - 1))
            cols.append(k)
        return GuidanceTable(self.times[:, cols].copy(), start, width)

    @classmethod
    def free_flow(cls, network, start: float, interval: float, n_intervals: int) -> "GuidanceTable":
        fft = network.free_flow_times()
        return cls(np.repeat(fft[:, None], n_intervals, axis=1), start, interval)

    def to_rows(self, network) -> list[tuple[int, int, float]]:
        rows = []
        for i, link in enumerate(network.links):
            for h in range(self.n_intervals):
                rows.append((link.id, h, float(self.times[i, h])))
        return rows

    def to_csv(self, network) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["link", "interval", "interval_start", "seconds"])
        for lid, h, sec in self.to_rows(network):
            w.writerow([lid, h, f"{self.start + h * self.interval:g}", repr(sec)])
        return buf.getvalue()

    @classmethod
    def from_rows(cls, network, rows, start: float, interval: float) -> "GuidanceTable":
        """Build from (link id, interval index, seconds); unlisted cells get free-flow time."""
        rows = list(rows)
        n = max((int(h) for _, h, _ in rows), default=-1) + 1
        table = cls.free_flow(network, start, interval, max(n, 1))
        for lid, h, sec in rows:
            try:
                i = network.link_index[int(lid)]
            except KeyError:
                raise CoverageError(f"guidance row references unknown link {lid}") from None
            table.times[i, int(h)] = float(sec)
        return table


@dataclass
class TollSchedule:
    """Toll values, one row per tolling interval, one column per gantry."""

    values: np.ndarray
    start: float
    interval: float
    reduced: bool = False
    # rows flagged False are outside the tolling window and charge nothing
    active: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.active is not None:
            self.active = np.asarray(self.active, dtype=bool)

    @property
    def n_intervals(self) -> int:
        return self.values.shape[0]

    @property
    def end(self) -> float:
        return self.start + self.interval * self.n_intervals

    def toll(self, gantry: int, t: float) -> float:
        rows = self.__dict__.get("_rows")
        if rows is None:
            rows = self.charged().tolist()
            self.__dict__["_rows"] = rows
        return rows[_interval_index(t, self.start, self.interval, len(rows))][gantry]

    def charged(self) -> np.ndarray:
        """Values actually charged, with inactive rows zeroed."""
        if self.active is None:
            return self.values.copy()
        return np.where(self.active[:, None], self.values, 0.0)

    def covers(self, t0: float, t1: float) -> bool:
        return self.start <= t0 and t1 <= self.end + 1e-9

    @classmethod
    def zeros(cls, n_gantries: int, start: float, interval: float, n_intervals: int = 1) -> "TollSchedule":
        return cls(np.zeros((n_intervals, n_gantries)), start, interval)

    @classmethod
    def constant(cls, vector, start: float, interval: float, n_intervals: int = 1) -> "TollSchedule":
        v = np.asarray(vector, dtype=float)
        return cls(np.repeat(v[None, :], n_intervals, axis=0), start, interval)
