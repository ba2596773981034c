"""Closed-loop run of the toy corridor: no toll, static and predictive at one demand level."""

import argparse
from pathlib import Path

from predtoll.closed_loop import ScenarioInputs, compare_tables, compute_static_tolls, run_scenario
from predtoll.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs/toy/toy.yaml"))
    ap.add_argument("--level", type=float, default=1.0)
    ap.add_argument("--replications", type=int, default=None)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    overrides = list(args.set)
    if args.replications:
        overrides.append(f"replications={args.replications}")
    cfg = load_config(args.config, overrides)
    inputs = ScenarioInputs.from_config(cfg)
    static, _ = compute_static_tolls(cfg, inputs)
    print(f"static toll: {static.round(3).tolist()}")

    tables = {}
    for scenario in ("no_toll", "static", "predictive"):
        rep = run_scenario(cfg, scenario, args.level, inputs, static if scenario == "static" else None)
        tables[scenario] = rep.table()
    base = tables["no_toll"]
    for scenario in ("static", "predictive"):
        c = compare_tables(base, tables[scenario], base.tolling)
        p = f"p={c.test.p_value:.4f}" if c.test else "no test"
        print(f"{scenario:>10}: {c.treatment_mean:7.1f}s vs {c.baseline_mean:7.1f}s  {c.improvement:+6.2f}%  {p}")


if __name__ == "__main__":
    main()
