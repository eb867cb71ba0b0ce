"""Mean best-so-far curve per optimiser from a run directory's trace files.

Writes ``curves.csv`` (iter, then one column per optimiser/reward) next to the
traces, ready for plotting.

    python3 scripts/convergence_curves.py runs/compare
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import numpy as np


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir")
    args = ap.parse_args()
    run = Path(args.run_dir)

    curves = defaultdict(list)
    for path in sorted(run.glob("trace_*.csv")):
        _day, opt, reward, _seed = path.stem[len("trace_"):].rsplit("_", 3)
        with open(path) as f:
            best = [float(r["best_so_far"]) for r in csv.DictReader(f)]
        if best:
            curves[f"{opt}_{reward}"].append(best)
    if not curves:
        raise SystemExit(f"no trace files under {run}")

    length = max(len(c) for cs in curves.values() for c in cs)
    names = sorted(curves)
    means = {}
    for name in names:
        # Truncated traces hold their last value.
        padded = np.array([c + [c[-1]] * (length - len(c)) for c in curves[name]])
        means[name] = padded.mean(axis=0)
    with open(run / "curves.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iter"] + names)
        for i in range(length):
            w.writerow([i + 1] + [repr(float(means[n][i])) for n in names])
    for name in names:
        m = means[name]
        print(f"{name:16s} n={len(curves[name]):3d}  iter 10: {m[min(9, length - 1)]:8.2f}  final: {m[-1]:8.2f}")


if __name__ == "__main__":
    main()
