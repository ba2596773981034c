"""Guidance/prediction consistency loop and the total-travel-time objective."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .demand import TripRecord
from .route_choice import RouteChoiceModel, quasi_uniform, stream_uniform
from .supply import NetworkState, SimulationResult, clone_state, simulate
from .timetables import GuidanceTable, TollSchedule

__all__ = [
    "ConsistencyReport",
    "Evaluation",
    "GuidanceTable",
    "PredictionEvaluator",
    "guidance_gap",
    "msa_update",
    "objective",
    "predict_consistent",
]

GAP_FLOOR = 60.0  # seconds; keeps the relative gap sane on short links


@dataclass(frozen=True)
class ConsistencyReport:
    iterations: int
    gap: float
    converged: bool


def msa_update(
    guidance: GuidanceTable,
    predicted: np.ndarray,
    n: int,
    floor: Optional[np.ndarray] = None,
) -> GuidanceTable:
    """One successive-averages step with weight 1/(n+1), clipped below at ``floor``."""
    if n < 1:
        raise ValueError("MSA iteration counter starts at 1")
    predicted = np.asarray(predicted, dtype=float)
    if predicted.shape != guidance.times.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {guidance.times.shape}")
    new = guidance.times + (predicted - guidance.times) / (n + 1)
    if floor is not None:
        new = np.maximum(new, np.asarray(floor, dtype=float)[:, None])
    return GuidanceTable(new, guidance.start, guidance.interval)


def guidance_gap(guidance: GuidanceTable, result: SimulationResult) -> float:
    """Max relative deviation over (link, interval) cells that carried traffic."""
    mask = result.link_counts > 0
    if not mask.any():
        return 0.0
    pred = result.link_times[mask]
    dev = np.abs(guidance.times[mask] - pred) / np.maximum(pred, GAP_FLOOR)
    return float(dev.max())


def objective(result: SimulationResult) -> float:
    """Total travel time: completed trips plus time accrued by vehicles still out."""
    return float(sum(t.experienced_tt for t in result.trips) + result.accrued_unfinished)


def predict_consistent(
    estimated: NetworkState,
    trips: list[TripRecord],
    tolls: Optional[TollSchedule],
    init_guidance: GuidanceTable,
    eps_p: float = 0.05,
    max_iter: int = 5,
    seed: int = 0,
    *,
    choice: RouteChoiceModel,
    n_intervals: Optional[int] = None,
    interval: Optional[float] = None,
    uniform=stream_uniform,
) -> tuple[GuidanceTable, SimulationResult, ConsistencyReport]:
    """Iterate simulate -> MSA until guidance and prediction agree within ``eps_p``.

    Each iteration simulates a fresh clone of ``estimated``, so the caller's
    state is never touched.  The returned guidance is the one the returned
    simulation was run under.
    """
    if eps_p <= 0 or max_iter < 1:
        raise ValueError("need eps_p > 0 and max_iter >= 1")
    t0 = estimated.clock
    if n_intervals is None:
        n_intervals = tolls.n_intervals if tolls is not None else init_guidance.n_intervals
    width = float(interval or (tolls.interval if tolls is not None else init_guidance.interval))
    floor = estimated.network.free_flow_times()
    g = init_guidance.resample(t0, n_intervals, width)
    g = GuidanceTable(np.maximum(g.times, floor[:, None]), g.start, g.interval)
    horizon = n_intervals * width
    for n in range(1, max_iter + 1):
        result = simulate(clone_state(estimated), trips, g, tolls, horizon, seed, choice, uniform=uniform)
        gap = guidance_gap(g, result)
        if gap <= eps_p:
            return g, result, ConsistencyReport(n, gap, True)
        if n == max_iter:
            break
        g = msa_update(g, result.link_times, n, floor)
    return g, result, ConsistencyReport(max_iter, gap, False)


@dataclass
class Evaluation:
    objective: float
    guidance: GuidanceTable
    report: ConsistencyReport


@dataclass
class PredictionEvaluator:
    """Maps a decision vector to a consistent prediction and its objective.

    ``layout="rolling"``: the schedule is ``(lam, tau_2, ..., tau_H)``; in the
    reduced variant a single gene row is repeated for ``tau_2..tau_H``.
    ``layout="uniform"``: one toll vector applied on every row (static tolls).
    Rows where ``active`` is False charge nothing.
    """

    estimated: NetworkState
    trips: list
    choice: RouteChoiceModel
    init_guidance: GuidanceTable
    interval: float
    n_intervals: int
    lam: np.ndarray = field(default=None)
    layout: str = "rolling"
    reduced: bool = True
    active: Optional[np.ndarray] = None
    eps_p: float = 0.05
    max_iter: int = 5
    seed: int = 0
    quasi_random: bool = True  # low-discrepancy choice draws (see quasi_uniform)

    @property
    def n_gantries(self) -> int:
        return self.estimated.network.n_gantries

    def schedule(self, genes) -> TollSchedule:
        m = self.n_gantries
        genes = np.asarray(genes, dtype=float)
        if self.layout == "uniform":
            rows = np.repeat(genes.reshape(1, m), self.n_intervals, axis=0)
        else:
            decision = genes.reshape(-1, m)
            if self.reduced:
                decision = np.repeat(decision[:1], self.n_intervals - 1, axis=0)
            rows = np.vstack([np.asarray(self.lam, dtype=float).reshape(1, m), decision])
        return TollSchedule(
            rows, self.estimated.clock, self.interval, reduced=self.reduced, active=self.active
        )

    def run(self, genes) -> tuple[GuidanceTable, SimulationResult, ConsistencyReport]:
        return predict_consistent(
            self.estimated,
            self.trips,
            self.schedule(genes),
            self.init_guidance,
            self.eps_p,
            self.max_iter,
            self.seed,
            choice=self.choice,
            n_intervals=self.n_intervals,
            interval=self.interval,
            uniform=quasi_uniform if self.quasi_random else stream_uniform,
        )

    def __call__(self, genes) -> Evaluation:
        g, result, report = self.run(genes)
        return Evaluation(objective(result), g, report)
