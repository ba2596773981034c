"""Genetic algorithm against exhaustive grid search on single optimization instances."""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from predtoll.closed_loop import ScenarioInputs, dtop_instance, grid_oracle, static_instance
from predtoll.config import load_config
from predtoll.optimizer import GAParams, optimize

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs/toy/toy.yaml"))
    ap.add_argument("--level", type=float, default=1.2)
    ap.add_argument("--t0", type=float, default=1200.0)
    ap.add_argument("--grid", type=int, default=5)
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    cfg = load_config(args.config)
    inputs = ScenarioInputs.from_config(cfg)
    params = GAParams(population_size=12, max_generations=10, time_budget=1e9)
    for name, (ev, con) in {
        "rolling": dtop_instance(cfg, inputs, args.level, args.t0),
        "static": static_instance(cfg, inputs),
    }.items():
        grid = grid_oracle(ev, con, args.grid)
        point, best = min(grid, key=lambda row: row[1])
        print(f"{name}: grid best {best:.1f} at {point}")
        for seed in range(args.seeds):
            t = time.perf_counter()
            res = optimize(ev, con, replace(params, seed=seed))
            print(f"  seed {seed}: {res.best_objective:.1f} ({100 * (res.best_objective / best - 1):+.3f}%) "
                  f"genes {res.best_genes.round(3).tolist()} in {time.perf_counter() - t:.1f}s")


if __name__ == "__main__":
    main()
