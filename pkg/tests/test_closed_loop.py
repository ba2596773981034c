from dataclasses import replace

import numpy as np
import pytest

from predtoll import closed_loop
from predtoll.closed_loop import (
    IntervalMismatch,
    PerformanceReport,
    ReplicationResult,
    ReportTable,
    ScenarioInputs,
    compare_tables,
    compute_static_tolls,
    demand_factor,
    dtop_instance,
    estimate_state,
    grid_oracle,
    run_replication,
    run_scenario,
    warm_start,
)
from predtoll.demand import ODDemand, TripRecord, generate_trips
from predtoll.metrics import rmsn
from predtoll.optimizer import OptimizationAborted
from predtoll.route_choice import RouteChoiceModel
from predtoll.supply import NetworkState, clone_state, simulate
from predtoll.timetables import GuidanceTable
from predtoll.toy import two_route, two_route_demand

from .conftest import toy_with

FAST = ("replications=2", "ga.population_size=4", "ga.max_generations=2",
        "static_ga.population_size=4", "static_ga.max_generations=2")


@pytest.fixture(scope="module")
def fast_cfg():
    return toy_with(*FAST)


@pytest.fixture(scope="module")
def fast_inputs(fast_cfg):
    return ScenarioInputs.from_config(fast_cfg)


@pytest.fixture(scope="module")
def predictive_rep(fast_cfg, fast_inputs):
    return run_replication(fast_cfg, "predictive", 1.1, 0, fast_inputs)


def tolling_flags(cfg, rep):
    return [cfg.cycle.in_tolling(rec.t0) for rec in rep.records]


# ---------------------------------------------------------------- estimation


def loaded_world(seed=4, profile=(115, 115)):
    net = two_route()
    choice = RouteChoiceModel.build(net, [(1, 3)], 3)
    world = NetworkState(net, 0.0)
    trips = generate_trips(two_route_demand(profile), 1.0, seed)
    simulate(world, [t for t in trips if t.departure_time < 300], GuidanceTable.free_flow(net, 0, 300, 1), None, 300.0, 0, choice)
    return world, trips, choice


def test_estimate_without_noise_is_exact():
    world, trips, choice = loaded_world()
    est = estimate_state(world, 0.0)
    rest = [t for t in trips if 300 <= t.departure_time < 600]
    g = GuidanceTable.free_flow(world.network, 300, 300, 1)
    a = simulate(est, rest, g, None, 300.0, 3, choice)
    b = simulate(clone_state(world), rest, g, None, 300.0, 3, choice)
    assert a.trips == b.trips and np.array_equal(a.link_times, b.link_times)


def test_estimate_with_noise_differs():
    world, _, _ = loaded_world(profile=(60, 60))
    assert 0 < len(world.queues[0]) < world.network.links[0].storage
    est = estimate_state(world, 3.0, seed=1)
    assert rmsn(est.link_counts(), world.link_counts()) > 0
    ids = [v.trip.vehicle_id for v in est.vehicles()]
    assert len(ids) == len(set(ids))
    for q, link in zip(est.queues, est.network.links):
        assert len(q) <= link.storage


def test_estimate_empty():
    est = estimate_state(NetworkState(two_route(), 900.0), 2.0, seed=3)
    assert est.n_vehicles == 0 and est.clock == 900.0


def test_demand_factor():
    hist = ODDemand(((1, 3),), np.array([[60.0, 60.0, 60.0]]), 300.0)
    seen = [TripRecord(i, 1, 3, float(t)) for i, t in enumerate(range(0, 600, 5))]  # 120 in [0, 600)
    assert demand_factor(seen, hist, 600.0, 600.0) == pytest.approx(1.0)
    assert demand_factor(seen[::2], hist, 600.0, 600.0) == pytest.approx(0.5)
    assert demand_factor(seen, hist, 0.0, 600.0) == 1.0
    assert demand_factor([], hist, 600.0, 600.0) == 0.2
    small = ODDemand(((1, 3),), np.array([[1.0, 1.0]]), 300.0)
    assert demand_factor([], small, 600.0, 600.0) == 1.0


def test_warm_start():
    prev = GuidanceTable(np.array([[10.0, 20.0, 30.0]]), 0.0, 300.0)
    g = warm_start(prev, None, 300.0, 3, 300.0)
    assert g.times.tolist() == [[20.0, 30.0, 30.0]]
    hist = GuidanceTable(np.array([[1.0, 2.0, 3.0, 4.0, 5.0]]), 0.0, 300.0)
    g = warm_start(prev, hist, 300.0, 3, 300.0)
    assert g.times.tolist() == [[20.0, 30.0, 4.0]]


# ---------------------------------------------------------------- cycles


def test_no_toll_applies_nothing(fast_cfg, fast_inputs):
    rep = run_replication(fast_cfg, "no_toll", 1.0, 0, fast_inputs)
    assert rep.complete
    assert all(not rec.applied.any() and not rec.optimized for rec in rep.records)


def test_predictive_chaining(fast_cfg, predictive_rep):
    rep = predictive_rep
    assert rep.complete
    flags = tolling_flags(fast_cfg, rep)
    first = flags.index(True)
    assert not rep.records[first].applied.any()  # first tolling interval starts untolled
    optimized = [rec for rec in rep.records if rec.optimized]
    assert optimized
    for prev, rec in zip(rep.records, rep.records[1:]):
        if prev.optimized:
            assert np.array_equal(rec.applied, prev.next_lam)


def test_tolls_only_inside_window(fast_cfg, fast_inputs, predictive_rep):
    static, _ = compute_static_tolls(fast_cfg, fast_inputs)
    static_rep = run_replication(fast_cfg, "static", 1.0, 0, fast_inputs, static)
    for rep in (predictive_rep, static_rep):
        for rec, inside in zip(rep.records, tolling_flags(fast_cfg, rep)):
            if not inside:
                assert not rec.applied.any()
    assert all(np.array_equal(rec.applied, static) for rec, f in zip(static_rep.records, tolling_flags(fast_cfg, static_rep)) if f)


def test_static_tolls_within_bounds(fast_cfg, fast_inputs):
    static, res = compute_static_tolls(fast_cfg, fast_inputs)
    assert fast_cfg.tolls.lower <= static[0] <= fast_cfg.tolls.upper
    assert res.best_objective > 0


def test_aborted_cycle_carries_toll(fast_cfg, fast_inputs, monkeypatch):
    calls = [0]
    real = closed_loop.optimize

    def sometimes(*a, **kw):
        calls[0] += 1
        if calls[0] == 3:
            raise OptimizationAborted("forced", [])
        return real(*a, **kw)

    monkeypatch.setattr(closed_loop, "optimize", sometimes)
    rep = run_replication(fast_cfg, "predictive", 1.1, 0, fast_inputs)
    assert rep.complete
    aborted = [k for k, rec in enumerate(rep.records) if rec.aborted]
    assert len(aborted) == 1
    k = aborted[0]
    assert np.array_equal(rep.records[k].next_lam, rep.records[k].applied)
    assert np.array_equal(rep.records[k + 1].applied, rep.records[k].applied)


def test_failures_are_recorded(fast_cfg, fast_inputs, monkeypatch):
    def broken(*a, **kw):
        raise RuntimeError("world crashed")

    monkeypatch.setattr(closed_loop, "run_cycle", broken)
    rep = run_replication(fast_cfg, "no_toll", 1.0, 0, fast_inputs)
    assert rep.error and "world crashed" in rep.error and not rep.complete


# ---------------------------------------------------------------- scenarios


def test_empty_tolling_window_matches_no_toll():
    cfg = toy_with(*FAST, "tolling=0", "warmup=900", "post=900", "peak=null")
    inputs = ScenarioInputs.from_config(cfg)
    a = run_scenario(cfg, "no_toll", 1.0, inputs)
    b = run_scenario(cfg, "predictive", 1.0, inputs)
    assert a.to_csv().replace("no_toll", "X") == b.to_csv().replace("predictive", "X")


def test_inert_optimizer_matches_no_toll():
    cfg = toy_with(*FAST, "tolls.delta=0", "tolls.lower=0", "tolls.upper=0")
    inputs = ScenarioInputs.from_config(cfg)
    a = run_scenario(cfg, "no_toll", 1.1, inputs)
    b = run_scenario(cfg, "predictive", 1.1, inputs)
    assert any(rec.optimized for rep in b.replications for rec in rep.records)
    assert a.to_csv().replace("no_toll", "X") == b.to_csv().replace("predictive", "X")
    for r in range(2):
        assert a.trips_csv(r) == b.trips_csv(r)


def test_report_reproducible(fast_cfg, fast_inputs):
    a = run_scenario(fast_cfg, "predictive", 1.0, fast_inputs)
    b = run_scenario(fast_cfg, "predictive", 1.0, ScenarioInputs.from_config(fast_cfg))
    assert a.to_csv() == b.to_csv()
    assert a.cycles_csv(1) == b.cycles_csv(1)
    assert a.guidance_csv(0, fast_inputs.network) == b.guidance_csv(0, fast_inputs.network)


def test_report_covers_every_interval(fast_cfg, fast_inputs):
    rep = run_scenario(fast_cfg, "no_toll", 1.0, fast_inputs)
    n = fast_cfg.cycle.n_cycles
    table = rep.table()
    assert table.intervals == [(h * 300.0, (h + 1) * 300.0) for h in range(n)]
    assert all(len(s) == n for s in table.rows.values())
    agg = rep.aggregate()
    assert len(agg) == n
    means = [rep.series(r)[3][0] for r in range(2)]
    assert agg[3] == pytest.approx(sum(means) / 2)
    assert sum(len(r.trips) for r in rep.replications) == sum(r.n_loaded for r in rep.replications)


# ---------------------------------------------------------------- comparison


def synthetic(mean_by_rep, scenario="s", intervals=4, delta=300.0):
    reps = []
    for r, mean in enumerate(mean_by_rep):
        trips = [TripRecord(k, 1, 3, float(h * delta + 1), experienced_tt=float(mean)) for k, h in enumerate(range(intervals))]
        reps.append(ReplicationResult(r, r, trips, []))
    return PerformanceReport(scenario, 1.0, delta, intervals * delta, (0.0, intervals * delta), None, reps)


def test_compare_self():
    t = synthetic([100, 104, 98]).table()
    c = compare_tables(t, t, t.tolling)
    assert c.improvement == 0.0 and not c.test.significant


def test_compare_arithmetic():
    base = synthetic([99, 100, 101]).table()
    treat = synthetic([90, 91, 92]).table()
    c = compare_tables(base, treat, base.tolling)
    assert c.improvement == pytest.approx(9.0)
    assert c.test.significant


def test_compare_directions():
    a = synthetic([99, 100, 101]).table()
    b = synthetic([90, 91, 93]).table()
    ab = compare_tables(a, b, a.tolling).improvement
    ba = compare_tables(b, a, a.tolling).improvement
    # each is relative to its own baseline: opposite signs, and the ratios invert
    assert ab > 0 > ba
    assert (1 - ab / 100) * (1 - ba / 100) == pytest.approx(1.0)


def test_compare_interval_mismatch():
    a = synthetic([100, 101]).table()
    b = synthetic([100, 101], intervals=5).table()
    with pytest.raises(IntervalMismatch):
        compare_tables(a, b, (0.0, 1200.0))
    with pytest.raises(IntervalMismatch):
        compare_tables(a, a, (5000.0, 6000.0))


def test_report_table_roundtrip():
    rep = synthetic([100, 110])
    t = ReportTable.from_csv(rep.to_csv())
    assert t.window_means(0, 1200) == [100.0, 110.0]
    assert t.delta == 300.0 and t.scenario == "s"


# ---------------------------------------------------------------- oracle helpers


def test_grid_oracle_one_gantry(fast_cfg, fast_inputs):
    ev, con = dtop_instance(fast_cfg, fast_inputs, 1.2, 1200.0)
    table = grid_oracle(ev, con, 5)
    assert [p for p, _ in table] == [(0.0,), (0.75,), (1.5,), (2.25,), (3.0,)]
    best = min(o for _, o in table)
    assert all(best <= o for _, o in table)
    with pytest.raises(ValueError):
        grid_oracle(ev, con, 10_001)
    with pytest.raises(ValueError):
        grid_oracle(ev, replace(con, rows=2), 3)
