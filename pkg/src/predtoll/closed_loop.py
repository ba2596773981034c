"""Rolling-horizon closed loop: a world simulation driven by a predictive controller.

Each cycle of length ``delta`` starting at ``t0``:

1. the controller estimates the world state at ``t0``;
2. it predicts ``[t0, t0 + H*delta)`` with the toll ``lam`` already fixed for
   the first interval and, in the predictive scenario, optimizes the rest;
3. the world runs ``[t0, t0 + delta)`` charging ``lam`` under the guidance
   disseminated at the end of the previous cycle;
4. the new guidance is disseminated and the optimized second-interval toll
   becomes the next ``lam``.

The world sees perturbed demand; the controller only knows historical
demand, rescaled by the departures it has observed so far.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .config import ScenarioConfig
from .demand import ODDemand, TripRecord, expected_trips, generate_trips, load_demand, load_historical_times, perturb
from .metrics import TTestResult, improvement_pct, two_sided_t_test
from .network import Network, load_network
from .optimizer import (
    OptimizationAborted,
    OptimizationResult,
    TollConstraints,
    TraceRow,
    optimize,
    optimize_static,
)
from .prediction import ConsistencyReport, PredictionEvaluator, predict_consistent
from .route_choice import RouteChoiceModel, load_path_sets, quasi_uniform
from .supply import NetworkState, clone_state, simulate
from .timetables import GuidanceTable, TollSchedule

__all__ = [
    "Comparison",
    "CycleRecord",
    "PerformanceReport",
    "ReplicationResult",
    "ReportTable",
    "ScenarioInputs",
    "compare_tables",
    "compute_static_tolls",
    "derive_seed",
    "dtop_instance",
    "estimate_state",
    "grid_oracle",
    "historical_link_times",
    "run_cycle",
    "run_replication",
    "run_scenario",
    "static_instance",
    "warm_start",
]

log = logging.getLogger(__name__)

PREDICTOR_ID_BASE = 10**9  # ids of trips the controller synthesizes
PHANTOM_ID_BASE = 2 * 10**9  # ids of vehicles invented by noisy estimation

# seed stream tags
_DEMAND, _TRIPS, _WORLD, _PREDICT, _GA, _NOISE, _PTRIPS, _STATIC = range(1, 9)


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]).generate_state(1)[0])


# ---------------------------------------------------------------- inputs


@dataclass
class ScenarioInputs:
    network: Network
    historical: ODDemand
    choice: RouteChoiceModel
    initial_guidance: GuidanceTable
    historical_times: Optional[GuidanceTable] = None

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "ScenarioInputs":
        network = load_network(cfg.network)
        historical = load_demand(cfg.demand, cfg.demand_interval)
        hist_table = None
        if cfg.historical_times is not None:
            rows = load_historical_times(cfg.historical_times)
            hist_table = GuidanceTable.from_rows(network, rows, 0.0, cfg.demand_interval)
        return cls.build(network, historical, cfg, hist_table)

    @classmethod
    def build(cls, network: Network, historical: ODDemand, cfg: ScenarioConfig, hist_table=None):
        if cfg.path_sets is not None:
            sets = load_path_sets(cfg.path_sets, network)
            missing = [od for od in historical.od_pairs if od not in sets]
            if missing:
                raise ValueError(f"path set file lacks OD pairs {missing}")
            choice = RouteChoiceModel(network, sets, cfg.choice, cfg.en_route, hist_table)
        else:
            choice = RouteChoiceModel.build(
                network, historical.od_pairs, cfg.k_max,
                coeffs=cfg.choice, en_route=cfg.en_route, historical=hist_table,
            )
        d = cfg.cycle.delta
        if hist_table is not None:
            n = max(cfg.cycle.horizon, math.ceil(hist_table.end / d))
            init = hist_table.resample(0.0, n, d)
        else:
            init = GuidanceTable.free_flow(network, 0.0, d, cfg.cycle.horizon)
        return cls(network, historical, choice, init, hist_table)


def warm_start(previous: GuidanceTable, historical: Optional[GuidanceTable],
               t0: float, n_intervals: int, width: float) -> GuidanceTable:
    """Initial guidance for a horizon starting at ``t0``.

    Intervals the previous guidance covers keep it; later ones take the
    historical times when available, else the previous last column.
    """
    g = previous.resample(t0, n_intervals, width)
    if historical is not None:
        hist = historical.resample(t0, n_intervals, width)
        for h in range(n_intervals):
            if t0 + h * width >= previous.end - 1e-9:
                g.times[:, h] = hist.times[:, h]
    return g


def historical_link_times(cfg: ScenarioConfig, inputs: "ScenarioInputs", iterations: int = 50) -> GuidanceTable:
    """Consistent no-toll link times of the historical demand over the whole period.

    Stands in for an archive of typical conditions.
    """
    c = cfg.cycle
    trips = trips_between(inputs.historical, 0.0, c.period, cfg.informed_fraction)
    init = GuidanceTable.free_flow(inputs.network, 0.0, c.delta, c.n_cycles)
    g, _, _ = predict_consistent(
        NetworkState(inputs.network, 0.0), trips, None, init, cfg.eps_p / 10, iterations,
        derive_seed(cfg.seed, _PREDICT), choice=inputs.choice, n_intervals=c.n_cycles, interval=c.delta,
        uniform=quasi_uniform,
    )
    return g


# ---------------------------------------------------------------- estimation


def estimate_state(world: NetworkState, noise_sd: float = 0.0, seed: int = 0) -> NetworkState:
    """Copy of the world state, optionally with per-link count errors.

    With ``noise_sd > 0`` each link's count is shifted by a rounded
    Normal(0, noise_sd) draw: vehicles are removed from the tail of the
    queue, or tail vehicles are duplicated under fresh ids (up to storage).
    """
    est = clone_state(world)
    if noise_sd <= 0:
        return est
    rng = np.random.default_rng(seed)
    shifts = np.rint(rng.normal(0.0, noise_sd, size=len(est.queues))).astype(int)
    next_id = PHANTOM_ID_BASE
    storage = [l.storage for l in est.network.links]
    for li, (q, k) in enumerate(zip(est.queues, shifts)):
        if k < 0:
            for _ in range(min(-k, len(q))):
                q.pop()
        elif k > 0 and q:
            for _ in range(min(k, storage[li] - len(q))):
                src = q[-1]
                v = src.copy()
                v.trip = replace(src.trip, vehicle_id=next_id)
                next_id += 1
                q.append(v)
    return est


def demand_factor(
    observed: list[TripRecord], historical: ODDemand, t0: float, window: float
) -> float:
    """Observed / expected departures over ``[t0 - window, t0)``; 1 without evidence."""
    a = max(historical.start, t0 - window)
    if t0 <= a:
        return 1.0
    expected = 0.0
    for h in range(historical.n_intervals):
        s = historical.start + h * historical.interval
        e = s + historical.interval
        overlap = max(0.0, min(e, t0) - max(s, a))
        if overlap > 0:
            expected += historical.rates[:, h].sum() * overlap / historical.interval
    if expected < 5.0:
        return 1.0
    seen = sum(1 for r in observed if a <= r.departure_time < t0)
    return float(min(5.0, max(0.2, seen / expected)))


def trips_between(demand: ODDemand, t0: float, t1: float, informed: float,
                  id_start: int = PREDICTOR_ID_BASE) -> list[TripRecord]:
    """The controller's trips departing in ``[t0, t1)``: expected demand, evenly spread."""
    return expected_trips(demand, t0, t1, informed, id_start)


# ---------------------------------------------------------------- one cycle


@dataclass
class CycleRecord:
    cycle: int
    t0: float
    applied: np.ndarray  # toll charged in the world during [t0, t0 + delta)
    next_lam: np.ndarray  # toll for the next interval (optimized tau_2 when optimized)
    optimized: bool
    guidance: GuidanceTable  # disseminated at the end of the cycle
    trace: list[TraceRow] = field(default_factory=list)
    reports: list[ConsistencyReport] = field(default_factory=list)
    best_objective: float = math.nan
    wall_clock: float = 0.0
    aborted: bool = False
    completed: list[TripRecord] = field(default_factory=list, repr=False)


@dataclass
class ControllerContext:
    """Per-replication controller settings handed to ``run_cycle``."""

    config: ScenarioConfig
    scenario: str
    choice: RouteChoiceModel
    seed: int
    static_tolls: Optional[np.ndarray] = None
    executor: object = None
    historical_times: Optional[GuidanceTable] = None


def _active_rows(cfg: ScenarioConfig, t0: float) -> np.ndarray:
    c = cfg.cycle
    return np.array([c.in_tolling(t0 + h * c.delta) for h in range(c.horizon)])


def run_cycle(
    world: NetworkState,
    trips_due: list[TripRecord],
    lam: np.ndarray,
    guidance: GuidanceTable,
    predicted_trips: list[TripRecord],
    ctx: ControllerContext,
    cycle: int,
) -> CycleRecord:
    """One estimate / predict-optimize / apply / disseminate cycle; advances ``world`` by delta."""
    cfg = ctx.config
    c = cfg.cycle
    net = world.network
    m = net.n_gantries
    t0 = world.clock
    lam = np.asarray(lam, dtype=float).reshape(m)
    wall0 = time.perf_counter()

    estimated = estimate_state(world, cfg.count_noise_sd, derive_seed(ctx.seed, _NOISE, cycle))
    active = _active_rows(cfg, t0)
    evaluator = PredictionEvaluator(
        estimated=estimated,
        trips=predicted_trips,
        choice=ctx.choice,
        init_guidance=warm_start(guidance, ctx.historical_times, t0, c.horizon, c.delta),
        interval=c.delta,
        n_intervals=c.horizon,
        lam=lam,
        layout="rolling",
        reduced=cfg.tolls.reduced,
        active=active,
        eps_p=cfg.eps_p,
        max_iter=cfg.max_iter,
        seed=derive_seed(ctx.seed, _PREDICT, cycle),
    )
    rec = CycleRecord(cycle, t0, lam.copy(), np.zeros(m), False, guidance)
    optimize_now = ctx.scenario == "predictive" and m > 0 and c.in_tolling(t0) and bool(active[1:].any())
    if optimize_now:
        rows = 1 if cfg.tolls.reduced else c.horizon - 1
        t = cfg.tolls
        constraints = TollConstraints(lam, t.lower, t.upper, t.delta, rows=rows)
        params = replace(cfg.ga, seed=derive_seed(ctx.seed, _GA, cycle))
        try:
            res = optimize(evaluator, constraints, params, ctx.executor)
        except OptimizationAborted as exc:
            log.warning("cycle %d: optimizer aborted (%s); carrying toll forward", cycle, exc)
            rec.aborted = True
            rec.trace = list(exc.trace)
            rec.next_lam = lam.copy()
            rec.guidance = guidance
        else:
            rec.optimized = True
            rec.trace = res.trace
            rec.reports = list(res.reports)
            rec.best_objective = res.best_objective
            rec.next_lam = res.best_genes[:m].copy()
            rec.guidance = res.best_guidance
    else:
        if ctx.scenario == "static":
            genes = np.asarray(ctx.static_tolls, dtype=float)
            ev = replace(evaluator, layout="uniform")(genes)
            if c.in_tolling(t0 + c.delta):
                rec.next_lam = genes.copy()
        else:
            # rows after the first carry no toll: either nothing is optimized yet
            # or the tolling window ends
            ev = evaluator(np.zeros((c.horizon - 1) * m if not cfg.tolls.reduced else m))
        rec.reports = [ev.report]
        rec.best_objective = ev.objective
        rec.guidance = ev.guidance

    tolls = TollSchedule(lam.reshape(1, m), t0, c.delta)
    result = simulate(world, trips_due, guidance, tolls, c.delta, derive_seed(ctx.seed, _WORLD), ctx.choice)
    rec.completed = result.trips
    rec.wall_clock = time.perf_counter() - wall0
    return rec


# ---------------------------------------------------------------- replication / scenario


@dataclass
class ReplicationResult:
    index: int
    seed: int
    trips: list[TripRecord]  # completed world trips
    records: list[CycleRecord]
    n_loaded: int = 0
    unfinished: int = 0
    error: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.error is None and self.unfinished == 0


def _lambda_for(scenario: str, cfg: ScenarioConfig, t0: float, static: Optional[np.ndarray], m: int):
    if scenario == "static" and cfg.cycle.in_tolling(t0):
        return np.asarray(static, dtype=float).copy()
    return np.zeros(m)


def run_replication(
    cfg: ScenarioConfig,
    scenario: str,
    level: float,
    index: int,
    inputs: ScenarioInputs,
    static_tolls: Optional[np.ndarray] = None,
    executor=None,
) -> ReplicationResult:
    seed = cfg.replication_seeds[index]
    c = cfg.cycle
    net = inputs.network
    m = net.n_gantries
    if scenario == "static" and static_tolls is None:
        raise ValueError("static scenario needs a toll vector")
    world_demand = perturb(inputs.historical.scaled(level), cfg.demand_cov, derive_seed(seed, _DEMAND))
    trips = [
        r for r in generate_trips(world_demand, cfg.informed_fraction, derive_seed(seed, _TRIPS))
        if r.departure_time < c.period
    ]
    ctx = ControllerContext(cfg, scenario, inputs.choice, seed, static_tolls, executor, inputs.historical_times)
    world = NetworkState(net, 0.0)
    guidance = inputs.initial_guidance
    lam = np.zeros(m)
    records: list[CycleRecord] = []
    completed: list[TripRecord] = []
    pi = 0
    try:
        for cyc in range(c.n_cycles):
            t0 = cyc * c.delta
            t1 = t0 + c.delta
            due = []
            while pi < len(trips) and trips[pi].departure_time < t1:
                due.append(trips[pi])
                pi += 1
            if scenario == "predictive" and c.in_tolling(t0):
                prev = records[-1] if records else None
                # an aborted cycle carries its toll forward; otherwise nothing is optimized yet
                applied = lam if prev is not None and (prev.optimized or prev.aborted) else np.zeros(m)
            else:
                applied = _lambda_for(scenario, cfg, t0, static_tolls, m)
            factor = demand_factor(trips[:pi - len(due)], inputs.historical, t0,
                                   cfg.calibration_window * c.delta)
            predicted = trips_between(
                inputs.historical.scaled(factor), t0, t0 + c.horizon * c.delta,
                cfg.informed_fraction,
            )
            rec = run_cycle(world, due, applied, guidance, predicted, ctx, cyc)
            records.append(rec)
            completed.extend(rec.completed)
            lam = rec.next_lam
            guidance = rec.guidance
        # drain: no tolls, last guidance persists
        limit = c.period + c.drain_limit
        while world.n_vehicles and world.clock < limit - 1e-9:
            g = guidance.resample(world.clock, 1, c.delta)
            res = simulate(world, [], g, None, c.delta, derive_seed(seed, _WORLD), inputs.choice)
            completed.extend(res.trips)
        error = None
    except Exception as exc:  # recorded, the scenario carries on with other replications
        log.exception("replication %d (%s, level %g) failed", index, scenario, level)
        error = f"{type(exc).__name__}: {exc}"
    return ReplicationResult(index, seed, completed, records, len(trips), world.n_vehicles, error)


def static_instance(cfg: ScenarioConfig, inputs: ScenarioInputs) -> tuple[PredictionEvaluator, TollConstraints]:
    """The static-toll problem: one vector over the whole period, historical demand x static_level."""
    c = cfg.cycle
    net = inputs.network
    n = c.n_cycles
    demand = inputs.historical.scaled(cfg.static_level)
    trips = trips_between(demand, 0.0, c.period, cfg.informed_fraction)
    evaluator = PredictionEvaluator(
        estimated=NetworkState(net, 0.0),
        trips=trips,
        choice=inputs.choice,
        init_guidance=inputs.initial_guidance,
        interval=c.delta,
        n_intervals=n,
        lam=np.zeros(net.n_gantries),
        layout="uniform",
        active=np.array([c.in_tolling(h * c.delta) for h in range(n)]),
        eps_p=cfg.eps_p,
        max_iter=cfg.max_iter,
        seed=derive_seed(cfg.seed, _STATIC, 1),
    )
    # no predecessor, so no change limit
    m = net.n_gantries
    lower = np.full(m, cfg.tolls.lower)
    return evaluator, TollConstraints(lower, lower, cfg.tolls.upper, np.full(m, math.inf))


def compute_static_tolls(
    cfg: ScenarioConfig, inputs: ScenarioInputs, executor=None
) -> tuple[np.ndarray, OptimizationResult]:
    """One toll vector for the whole tolling window, optimized against historical x static_level."""
    evaluator, _ = static_instance(cfg, inputs)
    res = optimize_static(
        evaluator, cfg.tolls.lower, cfg.tolls.upper, cfg.static_ga, inputs.network.n_gantries, executor
    )
    return res.best_genes.copy(), res


@dataclass
class PerformanceReport:
    scenario: str
    level: float
    delta: float
    period: float
    tolling: tuple[float, float]
    peak: Optional[tuple[float, float]]
    replications: list[ReplicationResult]

    @property
    def n_intervals(self) -> int:
        return int(round(self.period / self.delta))

    def series(self, r: int) -> list[tuple[Optional[float], int]]:
        """(mean travel time or None, trips) for every delta interval of the period."""
        sums = [0.0] * self.n_intervals
        counts = [0] * self.n_intervals
        for t in self.replications[r].trips:
            h = int(t.departure_time // self.delta)
            if 0 <= h < self.n_intervals:
                sums[h] += t.experienced_tt
                counts[h] += 1
        return [(s / k if k else None, k) for s, k in zip(sums, counts)]

    def aggregate(self) -> list[Optional[float]]:
        per = [self.series(r) for r in range(len(self.replications))]
        out = []
        for h in range(self.n_intervals):
            vals = [p[h][0] for p in per if p[h][0] is not None]
            out.append(sum(vals) / len(vals) if vals else None)
        return out

    def wall_clock(self) -> list[list[float]]:
        return [[rec.wall_clock for rec in rep.records] for rep in self.replications]

    def table(self) -> "ReportTable":
        return ReportTable.from_csv(self.to_csv())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# scenario={self.scenario}\n")
        buf.write(f"# demand_level={self.level!r}\n")
        buf.write(f"# delta={self.delta!r}\n")
        buf.write(f"# period={self.period!r}\n")
        buf.write(f"# tolling={self.tolling[0]!r}-{self.tolling[1]!r}\n")
        if self.peak is not None:
            buf.write(f"# peak={self.peak[0]!r}-{self.peak[1]!r}\n")
        bad = [str(rep.index) for rep in self.replications if not rep.complete]
        buf.write(f"# incomplete={' '.join(bad)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", "seed", "interval", "interval_start", "interval_end", "mean_tt", "n_trips"])
        for r, rep in enumerate(self.replications):
            for h, (mean, k) in enumerate(self.series(r)):
                w.writerow([rep.index, rep.seed, h, repr(h * self.delta), repr((h + 1) * self.delta),
                            "" if mean is None else repr(mean), k])
        for h, mean in enumerate(self.aggregate()):
            w.writerow(["mean", "", h, repr(h * self.delta), repr((h + 1) * self.delta),
                        "" if mean is None else repr(mean), ""])
        return buf.getvalue()

    def trips_csv(self, r: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["vehicle", "origin", "destination", "departure", "path", "travel_time"])
        for t in sorted(self.replications[r].trips, key=lambda t: t.vehicle_id):
            w.writerow([t.vehicle_id, t.origin, t.destination, repr(t.departure_time),
                        " ".join(str(x) for x in t.chosen_path or ()), repr(t.experienced_tt)])
        return buf.getvalue()

    def cycles_csv(self, r: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        recs = self.replications[r].records
        m = len(recs[0].applied) if recs else 0
        w.writerow(["cycle", "t0", "optimized", "aborted"]
                   + [f"lambda_{i}" for i in range(m)] + [f"next_lambda_{i}" for i in range(m)]
                   + ["best_objective", "generations", "evaluations", "converged"])
        for rec in recs:
            w.writerow([rec.cycle, repr(rec.t0), int(rec.optimized), int(rec.aborted)]
                       + [repr(float(x)) for x in rec.applied] + [repr(float(x)) for x in rec.next_lam]
                       + [repr(float(rec.best_objective)), len(rec.trace), len(rec.reports),
                          sum(1 for rp in rec.reports if rp.converged)])
        return buf.getvalue()

    def timing_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", "cycle", "wall_clock_s", "generations"])
        for rep in self.replications:
            for rec in rep.records:
                w.writerow([rep.index, rec.cycle, f"{rec.wall_clock:.6f}", len(rec.trace)])
        return buf.getvalue()

    def guidance_csv(self, r: int, network: Network) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cycle", "link", "interval_start", "seconds"])
        for rec in self.replications[r].records:
            g = rec.guidance
            for i, link in enumerate(network.links):
                for h in range(g.n_intervals):
                    w.writerow([rec.cycle, link.id, repr(g.start + h * g.interval), repr(float(g.times[i, h]))])
        return buf.getvalue()


def _replication_job(args):
    return run_replication(*args)


def run_scenario(
    cfg: ScenarioConfig,
    scenario: str,
    level: float = 1.0,
    inputs: Optional[ScenarioInputs] = None,
    static_tolls: Optional[np.ndarray] = None,
    jobs: int = 1,
) -> PerformanceReport:
    """All replications of one (scenario, demand level); independent replications may run in parallel."""
    inputs = inputs or ScenarioInputs.from_config(cfg)
    if scenario == "static" and static_tolls is None:
        static_tolls, _ = compute_static_tolls(cfg, inputs)
    args = [(cfg, scenario, level, r, inputs, static_tolls) for r in range(cfg.replications)]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reps = list(pool.map(_replication_job, args))
    else:
        reps = [_replication_job(a) for a in args]
    c = cfg.cycle
    return PerformanceReport(scenario, level, c.delta, c.period, (c.toll_start, c.toll_end), c.peak, reps)


# ---------------------------------------------------------------- comparison


class IntervalMismatch(ValueError):
    """Reports do not cover the same intervals."""


@dataclass
class ReportTable:
    """Per-replication interval series read back from a report CSV."""

    scenario: str
    level: float
    delta: float
    tolling: tuple[float, float]
    peak: Optional[tuple[float, float]]
    intervals: list[tuple[float, float]]
    rows: dict[str, list[tuple[Optional[float], int]]]  # replication -> series

    @classmethod
    def from_csv(cls, text: str) -> "ReportTable":
        meta: dict[str, str] = {}
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            elif line.strip():
                body.append(line)
        reader = csv.DictReader(body)
        rows: dict[str, list] = {}
        intervals: dict[int, tuple[float, float]] = {}
        for row in reader:
            rep = row["replication"]
            if rep == "mean":
                continue
            h = int(row["interval"])
            intervals[h] = (float(row["interval_start"]), float(row["interval_end"]))
            mean = float(row["mean_tt"]) if row["mean_tt"] else None
            rows.setdefault(rep, []).append((mean, int(row["n_trips"])))

        def window(key):
            if key not in meta or not meta[key]:
                return None
            a, b = meta[key].split("-")
            return (float(a), float(b))

        return cls(
            meta.get("scenario", "?"),
            float(meta.get("demand_level", "nan")),
            float(meta.get("delta", "nan")),
            window("tolling"),
            window("peak"),
            [intervals[h] for h in sorted(intervals)],
            rows,
        )

    def window_means(self, t0: float, t1: float) -> list[float]:
        """Trip-weighted mean travel time per replication over departures in ``[t0, t1)``."""
        out = []
        for rep, series in self.rows.items():
            s = k = 0.0
            for (a, b), (mean, n) in zip(self.intervals, series):
                if a >= t0 - 1e-9 and b <= t1 + 1e-9 and mean is not None:
                    s += mean * n
                    k += n
            if k:
                out.append(s / k)
        return out


@dataclass
class Comparison:
    window: tuple[float, float]
    baseline_mean: float
    treatment_mean: float
    improvement: float  # percent, positive when the treatment is faster
    test: Optional[TTestResult]  # None when either side has fewer than two replications


def compare_tables(baseline: ReportTable, treatment: ReportTable, window: tuple[float, float]) -> Comparison:
    if baseline.intervals != treatment.intervals:
        raise IntervalMismatch("reports cover different intervals")
    lo, hi = window
    if not any(a >= lo - 1e-9 and b <= hi + 1e-9 for a, b in baseline.intervals):
        raise IntervalMismatch(f"window {lo:g}-{hi:g} contains no report interval")
    a = baseline.window_means(lo, hi)
    b = treatment.window_means(lo, hi)
    ma, mb = float(np.mean(a)), float(np.mean(b))
    test = two_sided_t_test(a, b) if len(a) >= 2 and len(b) >= 2 else None
    return Comparison(window, ma, mb, improvement_pct(ma, mb), test)


# ---------------------------------------------------------------- oracle helpers


def dtop_instance(cfg: ScenarioConfig, inputs: ScenarioInputs, level: float = 1.0,
                  t0: Optional[float] = None, lam=None) -> tuple[PredictionEvaluator, TollConstraints]:
    """A single toll optimization problem at ``t0`` (default: start of tolling).

    The state at ``t0`` comes from a consistent no-toll prediction of the
    historical demand (times ``level``) from an empty network.
    """
    c = cfg.cycle
    net = inputs.network
    m = net.n_gantries
    t0 = c.toll_start if t0 is None else float(t0)
    demand = inputs.historical.scaled(level)
    state = NetworkState(net, 0.0)
    guidance = inputs.initial_guidance
    if t0 > 0:
        n0 = int(round(t0 / c.delta))
        before = trips_between(demand, 0.0, t0, cfg.informed_fraction)
        g, _, _ = predict_consistent(
            state, before, None, guidance, cfg.eps_p, cfg.max_iter, derive_seed(cfg.seed, _PREDICT, 0),
            choice=inputs.choice, n_intervals=n0, interval=c.delta, uniform=quasi_uniform,
        )
        simulate(state, before, g, None, t0, derive_seed(cfg.seed, _PREDICT, 0), inputs.choice,
                 uniform=quasi_uniform)
        guidance = g
    trips = trips_between(demand, t0, t0 + c.horizon * c.delta, cfg.informed_fraction)
    lam = np.zeros(m) if lam is None else np.asarray(lam, dtype=float)
    evaluator = PredictionEvaluator(
        estimated=state,
        trips=trips,
        choice=inputs.choice,
        init_guidance=guidance,
        interval=c.delta,
        n_intervals=c.horizon,
        lam=lam,
        reduced=cfg.tolls.reduced,
        eps_p=cfg.eps_p,
        max_iter=cfg.max_iter,
        seed=derive_seed(cfg.seed, _PREDICT, 1),
    )
    rows = 1 if cfg.tolls.reduced else c.horizon - 1
    t = cfg.tolls
    return evaluator, TollConstraints(lam, t.lower, t.upper, t.delta, rows=rows)


MAX_GRID_EVALUATIONS = 10_000


def grid_oracle(evaluator, constraints: TollConstraints, levels: int) -> list[tuple[tuple[float, ...], float]]:
    """Objective of every point of a ``levels``-per-gene grid over the first decision row.

    Only single-row (reduced) problems are gridded; each gene ranges over
    its feasible interval around ``lam``.
    """
    if levels < 1:
        raise ValueError("need at least one level")
    if constraints.rows != 1:
        raise ValueError("grid oracle handles the reduced (single row) variant only")
    m = constraints.n_gantries
    if levels ** m > MAX_GRID_EVALUATIONS:
        raise ValueError(f"grid of {levels}^{m} points exceeds {MAX_GRID_EVALUATIONS} evaluations")
    lo, hi = constraints.interval(constraints.lam)
    axes = [np.linspace(lo[i], hi[i], levels) if levels > 1 else np.array([lo[i]]) for i in range(m)]
    table = []
    for point in np.array(np.meshgrid(*axes, indexing="ij")).reshape(m, -1).T:
        table.append((tuple(float(x) for x in point), float(evaluator(point).objective)))
    return table


__all__ += ["IntervalMismatch", "MAX_GRID_EVALUATIONS", "ControllerContext", "demand_factor", "trips_between"]
