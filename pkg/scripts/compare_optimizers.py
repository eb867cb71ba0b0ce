"""Launch-configuration search on synthetic days: BO, PSO and uniform sampling.

Writes the full run directory (traces, report, KDE, wind cones) and prints the
per-optimiser converged max and converge index.

    python3 scripts/compare_optimizers.py --days 0-19 --budget 60 --out runs/compare
"""

import argparse
import logging
import time

from stratokeeper.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", default="0-19")
    ap.add_argument("--budget", type=int, default=60)
    ap.add_argument("--optimizers", default="bo,uniform,pso")
    ap.add_argument("--rewards", default="step")
    ap.add_argument("--controller", default="greedy")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=0, help="0 = all cores")
    ap.add_argument("--sweep-launches", type=int, default=0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    cfg = RunConfig().replace(
        days=args.days, budget=args.budget, optimizers=args.optimizers, rewards=args.rewards,
        controller=args.controller, seed=args.seed, threads=args.threads, sweep_launches=args.sweep_launches,
    )
    spec = cfg.experiment_spec()
    t0 = time.perf_counter()
    from stratokeeper.harness import run_experiment

    report = run_experiment(spec, args.out, config_lines=cfg.to_lines())
    print(f"{len(spec.days)} days, budget {spec.budget}, {spec.threads} worker(s), {time.perf_counter() - t0:.0f} s")
    print(f"{'optimizer':10s} {'reward':6s} {'n':>3s} {'mean max':>10s} {'mean idx':>9s} {'median idx':>10s}")
    for c in report.cells:
        print(
            f"{c.optimizer:10s} {c.reward:6s} {c.count:3d} {c.mean_converged_max:10.2f} "
            f"{c.mean_converge_index:9.1f} {c.median_converge_index:10.1f}"
        )


if __name__ == "__main__":
    main()
