"""Improvement of predictive tolling over no toll across demand multipliers."""

import argparse
from pathlib import Path

from predtoll.closed_loop import ScenarioInputs, compare_tables, run_scenario
from predtoll.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs/toy/toy.yaml"))
    ap.add_argument("--levels", type=float, nargs="+", default=[0.3, 0.9, 1.0, 1.1, 1.2])
    ap.add_argument("--replications", type=int, default=4)
    args = ap.parse_args()

    cfg = load_config(args.config, [f"replications={args.replications}"])
    inputs = ScenarioInputs.from_config(cfg)
    print("level  no_toll  predictive  improvement  p")
    for level in args.levels:
        base = run_scenario(cfg, "no_toll", level, inputs).table()
        pred = run_scenario(cfg, "predictive", level, inputs).table()
        c = compare_tables(base, pred, base.tolling)
        p = f"{c.test.p_value:.4f}" if c.test else "-"
        print(f"{level:5.2f}  {c.baseline_mean:7.1f}  {c.treatment_mean:10.1f}  {c.improvement:+10.2f}%  {p}")


if __name__ == "__main__":
    main()
