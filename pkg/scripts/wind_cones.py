"""Export wind cones for several synthetic days and report their angular spread.

The spread is the widest angle between any two level directions; a cone close
to pi can steer the balloon in any direction.

    python3 scripts/wind_cones.py --days 0-9 --at 0,0,0 --out runs/cones
"""

import argparse
import math
from pathlib import Path

from stratokeeper.config import RunConfig
from stratokeeper.harness import build_windfield, day_label, wind_cone, write_windcone


def spread(cone) -> float:
    angles = [math.atan2(v, u) for u, v in cone if math.hypot(u, v) > 1e-9]
    best = 0.0
    for a in angles:
        for b in angles:
            best = max(best, abs(math.remainder(a - b, 2.0 * math.pi)))
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", default="0-9")
    ap.add_argument("--at", default="0,0,0", help="x km, y km, hours")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    x, y, t = (float(s) for s in args.at.split(","))

    cfg = RunConfig().replace(days=args.days)
    spec = cfg.experiment_spec(threads=1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for day in spec.days:
        cone = wind_cone(build_windfield(day, spec), x, y, t, spec.env)
        write_windcone(cone, spec.env.obs_pressures, out / f"windcone_{day_label(day)}.csv")
        speeds = [math.hypot(u, v) for u, v in cone]
        print(f"day {day_label(day):>3s}  spread {math.degrees(spread(cone)):6.1f} deg  "
              f"speed {min(speeds):5.2f}-{max(speeds):5.2f} m/s")


if __name__ == "__main__":
    main()
