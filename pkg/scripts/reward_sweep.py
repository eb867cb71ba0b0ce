"""Compare reward shapes by time within the region and reach ratio.

Each reward kind is scored over the same polar launch sample on every day, and
the pooled positions are written as KDE grids.

    python3 scripts/reward_sweep.py --days 0-4 --launches 20 --out runs/rewards
"""

import argparse
from pathlib import Path

import numpy as np

from stratokeeper.config import RunConfig
from stratokeeper.env import metrics
from stratokeeper.harness import day_label, kde_2d, reward_sweep, split_seed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", default="0-4")
    ap.add_argument("--launches", type=int, default=20)
    ap.add_argument("--rewards", default="step,tanh,exp")
    ap.add_argument("--controller", default="greedy")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    cfg = RunConfig().replace(days=args.days, rewards=args.rewards, controller=args.controller, seed=args.seed)
    spec = cfg.experiment_spec(threads=1)
    pooled = {r: [] for r in spec.rewards}
    for day in spec.days:
        seed = split_seed(spec.master_seed, "sweep", day_label(day))
        per_day, traces = reward_sweep(day, spec.rewards, spec.controller, args.launches, spec, seed, return_traces=True)
        for r in spec.rewards:
            pooled[r].extend(traces[r])
        print(f"day {day_label(day):>3s}  " + "  ".join(f"{r} {tw:.3f}/{reach:.3f}" for r, (tw, reach) in per_day.items()))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{'reward':6s} {'tw':>7s} {'reach':>7s}")
    for r, traces in pooled.items():
        tw, reach = metrics(traces, spec.env.region_radius)
        print(f"{r:6s} {tw:7.3f} {reach:7.3f}")
        pts = np.vstack([t.positions for t in traces])
        kde_2d(pts, spec.kde_bandwidth, spec.kde_extent, spec.kde_resolution).to_csv(out / f"kde_{r}.csv")


if __name__ == "__main__":
    main()
