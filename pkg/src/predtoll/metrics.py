"""Performance measures for closed-loop comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = [
    "TTestResult",
    "avg_travel_time_by_departure",
    "improvement_pct",
    "rmsn",
    "two_sided_t_test",
]


def avg_travel_time_by_departure(trips, interval: float, start: float = 0.0) -> dict[int, float]:
    """Mean experienced travel time per departure interval index; empty intervals absent."""
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for t in trips:
        if t.experienced_tt is None:
            continue
        h = int((t.departure_time - start) // interval)
        sums[h] = sums.get(h, 0.0) + t.experienced_tt
        counts[h] = counts.get(h, 0) + 1
    return {h: sums[h] / counts[h] for h in sorted(sums)}


def rmsn(simulated, observed) -> float:
    """Normalized RMS error: sqrt(n * sum (sim - obs)^2) / sum obs."""
    sim = np.asarray(simulated, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if sim.shape != obs.shape:
        raise ValueError("simulated and observed must have equal length")
    total = obs.sum()
    if total == 0:
        raise ValueError("observed values sum to zero")
    return math.sqrt(obs.size * float(np.sum((sim - obs) ** 2))) / total


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    p_value: float
    significant: bool


def two_sided_t_test(a, b, alpha: float = 0.95) -> TTestResult:
    """Welch's two-sided t-test; significant when p < 1 - alpha."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two observations")
    if np.var(a) == 0 and np.var(b) == 0:
        # no spread: equal constants are indistinguishable, distinct constants trivially differ
        diff = float(a.mean() - b.mean())
        if diff == 0:
            return TTestResult(0.0, 1.0, False)
        return TTestResult(math.copysign(math.inf, diff), 0.0, True)
    res = stats.ttest_ind(a, b, equal_var=False)
    p = float(res.pvalue)
    return TTestResult(float(res.statistic), p, bool(p < 1.0 - alpha))


def improvement_pct(baseline_mean: float, treatment_mean: float) -> float:
    if not baseline_mean > 0:
        raise ValueError("baseline mean must be positive")
    return 100.0 * (baseline_mean - treatment_mean) / baseline_mean
