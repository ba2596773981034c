"""Real-coded genetic algorithm for time-varying toll schedules.

Decision genes are the tolls of intervals 2..H (flattened row-major, one
column per gantry), or a single row in the reduced variant.  Feasibility
(box bounds plus the per-interval change limit chained from ``lam``) is
kept by projection after every variation operator.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .prediction import Evaluation
from .timetables import GuidanceTable, TollSchedule

__all__ = [
    "ConstraintViolation",
    "GAParams",
    "Individual",
    "InfeasibleConstraints",
    "OptimizationAborted",
    "OptimizationResult",
    "TollConstraints",
    "TollSchedule",
    "clamp_to_constraints",
    "evaluate_batch",
    "add_observer",
    "init_population",
    "is_feasible",
    "optimize",
    "optimize_static",
    "polynomial_mutation",
    "remove_observer",
    "rank_and_truncate",
    "sbx_crossover",
    "tournament_select",
]

log = logging.getLogger(__name__)

# callables notified as fn(constraints, result) after every optimize() run
_observers: list[Callable] = []


def add_observer(fn: Callable) -> None:
    _observers.append(fn)


def remove_observer(fn: Callable) -> None:
    if fn in _observers:
        _observers.remove(fn)


class InfeasibleConstraints(ValueError):
    """Bounds and change limits leave no feasible toll value."""


class ConstraintViolation(AssertionError):
    def __init__(self, index: int, genes):
        super().__init__(f"strategy {index} violates toll constraints: {np.round(genes, 6)}")
        self.index = index


class OptimizationAborted(RuntimeError):
    def __init__(self, message: str, trace: list, index: Optional[int] = None):
        super().__init__(message)
        self.trace = trace
        self.index = index


@dataclass
class GAParams:
    population_size: int = 60
    crossover_probability: float = 0.7
    mutation_probability: float = 0.1
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    max_generations: int = 10
    time_budget: float = 300.0
    batch_size: Optional[int] = None  # None: whole population in one batch
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population size must be even and >= 2")
        for p in (self.crossover_probability, self.mutation_probability):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.max_generations < 1 or self.time_budget <= 0:
            raise ValueError("budgets must be positive")
        if self.batch_size is not None and not 1 <= self.batch_size <= self.population_size:
            raise ValueError("batch size must lie in [1, N]")


@dataclass
class Individual:
    genes: np.ndarray
    objective: Optional[float] = None
    rank: Optional[int] = None
    evaluation: Optional[Evaluation] = field(default=None, repr=False)

    def copy(self) -> "Individual":
        return Individual(self.genes.copy())


def _as_vec(x, m: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(x, dtype=float), (m,)).copy()


@dataclass
class TollConstraints:
    """Box bounds and change limits for ``rows`` decision rows after ``lam``."""

    lam: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    delta: np.ndarray
    rows: int = 1

    def __post_init__(self):
        m = np.asarray(self.lam, dtype=float).size
        self.lam = _as_vec(self.lam, m)
        self.lower = _as_vec(self.lower, m)
        self.upper = _as_vec(self.upper, m)
        self.delta = _as_vec(self.delta, m)
        if np.any(self.delta < 0):
            raise InfeasibleConstraints("change limits must be non-negative")
        if np.any(self.lower > self.upper):
            raise InfeasibleConstraints("lower bound above upper bound")

    @property
    def n_gantries(self) -> int:
        return self.lam.size

    @property
    def n_genes(self) -> int:
        return self.rows * self.n_gantries

    def interval(self, prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo = np.maximum(prev - self.delta, self.lower)
        hi = np.minimum(prev + self.delta, self.upper)
        if np.any(lo > hi):
            raise InfeasibleConstraints(
                f"empty feasible interval: lo={lo}, hi={hi} (check change limits vs bounds)"
            )
        return lo, hi


def clamp_to_constraints(genes, constraints: TollConstraints) -> np.ndarray:
    """Project row by row: each row into the box intersected with the tube around its predecessor."""
    m = constraints.n_gantries
    rows = np.asarray(genes, dtype=float).reshape(-1, m).copy()
    prev = constraints.lam
    for h in range(rows.shape[0]):
        lo, hi = constraints.interval(prev)
        rows[h] = np.minimum(np.maximum(rows[h], lo), hi)
        prev = rows[h]
    return rows.reshape(-1)


def is_feasible(genes, constraints: TollConstraints) -> bool:
    m = constraints.n_gantries
    rows = np.asarray(genes, dtype=float).reshape(-1, m)
    prev = constraints.lam
    for row in rows:
        if np.any(row < constraints.lower) or np.any(row > constraints.upper):
            return False
        if np.any(row < prev - constraints.delta) or np.any(row > prev + constraints.delta):
            return False
        prev = row
    return True


def init_population(params: GAParams, constraints: TollConstraints, rng: np.random.Generator) -> list[Individual]:
    pop = []
    for _ in range(params.population_size):
        prev = constraints.lam
        rows = []
        for _h in range(constraints.rows):
            lo, hi = constraints.interval(prev)
            row = rng.uniform(lo, hi)
            rows.append(row)
            prev = row
        pop.append(Individual(np.concatenate(rows)))
    return pop


def _sbx_beta(u: float, eta: float) -> float:
    if u <= 0.5:
        return (2.0 * u) ** (1.0 / (eta + 1.0))
    return (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0))


def sbx_crossover(
    p1: Individual,
    p2: Individual,
    eta_c: float,
    rng: np.random.Generator,
    crossover_probability: float = 1.0,
    constraints: Optional[TollConstraints] = None,
) -> tuple[Individual, Individual]:
    """Simulated binary crossover; each gene takes part with probability 1/2.

    Before repair the two children are symmetric about the parents' midpoint.
    """
    c1, c2 = p1.genes.copy(), p2.genes.copy()
    if rng.random() < crossover_probability:
        for i in range(c1.size):
            if rng.random() > 0.5 or abs(c1[i] - c2[i]) <= 1e-14:
                continue
            beta = _sbx_beta(rng.random(), eta_c)
            x1, x2 = c1[i], c2[i]
            c1[i] = 0.5 * ((1 + beta) * x1 + (1 - beta) * x2)
            c2[i] = 0.5 * ((1 - beta) * x1 + (1 + beta) * x2)
    if constraints is not None:
        c1 = clamp_to_constraints(c1, constraints)
        c2 = clamp_to_constraints(c2, constraints)
    return Individual(c1), Individual(c2)


def _poly_step(y: float, lo: float, hi: float, eta: float, r: float) -> float:
    span = hi - lo
    d1 = (y - lo) / span
    d2 = (hi - y) / span
    power = 1.0 / (eta + 1.0)
    if r < 0.5:
        val = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1) ** (eta + 1.0)
        dq = val**power - 1.0
    else:
        val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2) ** (eta + 1.0)
        dq = 1.0 - val**power
    return min(max(y + dq * span, lo), hi)


def polynomial_mutation(
    ind: Individual,
    eta_m: float,
    p_m: float,
    constraints: TollConstraints,
    rng: np.random.Generator,
) -> Individual:
    """Bounded polynomial mutation, gene by gene.

    A gene's support is the box intersected with the change-limit tube
    around its (already processed) predecessor row, so mutants are feasible
    by construction; untouched genes are re-projected when a predecessor moved.
    """
    m = constraints.n_gantries
    rows = ind.genes.reshape(-1, m).copy()
    prev = constraints.lam
    for h in range(rows.shape[0]):
        lo, hi = constraints.interval(prev)
        for j in range(m):
            y = min(max(rows[h, j], lo[j]), hi[j])
            if rng.random() < p_m and hi[j] > lo[j]:
                y = _poly_step(y, lo[j], hi[j], eta_m, rng.random())
            rows[h, j] = y
        prev = rows[h]
    return Individual(rows.reshape(-1))


def tournament_select(population: Sequence[Individual], rng: np.random.Generator) -> Individual:
    """Binary tournament with replacement; lower rank wins, then lower index."""
    n = len(population)
    i, j = (int(x) for x in rng.integers(0, n, size=2))
    a, b = population[i], population[j]
    if a.rank is None or b.rank is None:
        raise ValueError("tournament needs ranked individuals")
    return a if (a.rank, i) <= (b.rank, j) else b


def rank_and_truncate(mixed: Sequence[Individual], n: int) -> list[Individual]:
    """Stable ascending sort by objective, keep the first ``n``, ranks 1..n."""
    if any(ind.objective is None for ind in mixed):
        raise ValueError("cannot rank unevaluated individuals")
    order = sorted(range(len(mixed)), key=lambda k: mixed[k].objective)
    kept = [mixed[k] for k in order[:n]]
    for r, ind in enumerate(kept, 1):
        ind.rank = r
    return kept


def evaluate_batch(
    strategies: Sequence[Individual],
    evaluator: Callable[[np.ndarray], Evaluation],
    batch_size: Optional[int] = None,
    constraints: Optional[TollConstraints] = None,
    executor=None,
) -> list[float]:
    """Evaluate in batches of ``batch_size``; concurrent within a batch when an executor is given.

    Results are index aligned and do not depend on batch size or scheduling
    because every evaluation is a pure function of its genes.
    """
    n = len(strategies)
    size = batch_size or max(n, 1)
    if size < 1:
        raise ValueError("batch size must be >= 1")
    if constraints is not None:
        for k, ind in enumerate(strategies):
            if not is_feasible(ind.genes, constraints):
                raise ConstraintViolation(k, ind.genes)
    results: list[Optional[Evaluation]] = [None] * n
    for b0 in range(0, n, size):
        idx = range(b0, min(n, b0 + size))
        if executor is None:
            for k in idx:
                results[k] = _evaluate_one(evaluator, strategies[k], k)
        else:
            futures = {k: executor.submit(evaluator, strategies[k].genes) for k in idx}
            for k, fut in futures.items():  # barrier per batch
                try:
                    results[k] = fut.result()
                except Exception as exc:
                    raise EvaluationError(k, exc) from exc
    for ind, ev in zip(strategies, results):
        ind.evaluation = ev
        ind.objective = ev.objective
    return [ev.objective for ev in results]


class EvaluationError(RuntimeError):
    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"evaluation of strategy {index} failed: {cause!r}")
        self.index = index


def _evaluate_one(evaluator, ind: Individual, k: int) -> Evaluation:
    try:
        return evaluator(ind.genes)
    except Exception as exc:
        raise EvaluationError(k, exc) from exc


@dataclass
class TraceRow:
    generation: int
    best: float
    mean: float
    elapsed: float


@dataclass
class OptimizationResult:
    best_genes: np.ndarray
    best_objective: float
    best_schedule: Optional[TollSchedule]
    best_guidance: Optional[GuidanceTable]
    trace: list[TraceRow]
    evaluated: list[np.ndarray]  # every decision vector sent to the evaluator
    reports: list  # consistency reports of every evaluation

    @property
    def best_trace(self) -> list[float]:
        return [row.best for row in self.trace]


def _make_children(pop, params: GAParams, constraints: TollConstraints, rng) -> list[Individual]:
    children = []
    while len(children) < params.population_size:
        a = tournament_select(pop, rng)
        b = tournament_select(pop, rng)
        c1, c2 = sbx_crossover(a, b, params.sbx_eta, rng, params.crossover_probability, constraints)
        children.append(polynomial_mutation(c1, params.mutation_eta, params.mutation_probability, constraints, rng))
        children.append(polynomial_mutation(c2, params.mutation_eta, params.mutation_probability, constraints, rng))
    return children[: params.population_size]


def optimize(
    evaluator: Callable[[np.ndarray], Evaluation],
    constraints: TollConstraints,
    params: GAParams,
    executor=None,
    clock: Callable[[], float] = time.perf_counter,
) -> OptimizationResult:
    """Generational GA with elitist (N parents + N children) -> N replacement.

    No generation starts once ``params.time_budget`` seconds have elapsed;
    the initial population is always evaluated.
    """
    rng = np.random.default_rng(params.seed)
    t_start = clock()
    trace: list[TraceRow] = []
    evaluated: list[np.ndarray] = []
    reports: list = []
    n = params.population_size

    def _eval(individuals, generation):
        evaluated.extend(ind.genes.copy() for ind in individuals)
        try:
            evaluate_batch(individuals, evaluator, params.batch_size, constraints, executor)
        except (EvaluationError, ConstraintViolation) as exc:
            raise OptimizationAborted(
                f"generation {generation}: {exc}", trace, getattr(exc, "index", None)
            ) from exc
        reports.extend(ind.evaluation.report for ind in individuals)

    pop = init_population(params, constraints, rng)
    _eval(pop, 1)
    pop = rank_and_truncate(pop, n)
    trace.append(_trace_row(1, pop, clock() - t_start))
    for g in range(2, params.max_generations + 1):
        if clock() - t_start > params.time_budget:
            log.info("time budget exhausted before generation %d", g)
            break
        children = _make_children(pop, params, constraints, rng)
        _eval(children, g)
        pop = rank_and_truncate(pop + children, n)
        trace.append(_trace_row(g, pop, clock() - t_start))
    best = pop[0]
    sched = evaluator.schedule(best.genes) if hasattr(evaluator, "schedule") else None
    result = OptimizationResult(
        best_genes=best.genes.copy(),
        best_objective=best.objective,
        best_schedule=sched,
        best_guidance=best.evaluation.guidance,
        trace=trace,
        evaluated=evaluated,
        reports=reports,
    )
    for fn in list(_observers):
        fn(constraints, result)
    return result


def _trace_row(g: int, pop: list[Individual], elapsed: float) -> TraceRow:
    objs = [ind.objective for ind in pop]
    return TraceRow(g, objs[0], float(np.mean(objs)), elapsed)


def optimize_static(
    evaluator: Callable[[np.ndarray], Evaluation],
    lower,
    upper,
    params: GAParams,
    n_gantries: int,
    executor=None,
) -> OptimizationResult:
    """Same GA over one toll vector held for the whole tolling period (no change limit)."""
    lower = _as_vec(lower, n_gantries)
    constraints = TollConstraints(lower, lower, upper, np.full(n_gantries, math.inf), rows=1)
    return optimize(evaluator, constraints, params, executor)
