"""Command-line entry point.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import RunConfig
from .errors import ConfigError, ConstraintError, StratoError, UsageError
from .harness import (
    build_windfield,
    day_label,
    launch_objective,
    run_experiment,
    split_seed,
    wind_cone,
    write_meta,
    write_windcone,
)
from .optimize import bo_run, converged_stats, pso_run, uniform_run
from .windfield import synthesize_grid, write_grid

log = logging.getLogger("stratokeeper")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _triple(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(
        prog="stratokeeper",
        description="Balloon station-keeping simulator and launch-configuration optimizers.",
        epilog=RunConfig.help_text(),
        formatter_class=fmt,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_help="output directory"):
        p.add_argument("--config", type=Path, help="key = value configuration file (defaults apply if omitted)")
        p.add_argument("--seed", type=int, help="master seed (overrides the 'seed' key; default 0)")
        p.add_argument("--out", type=Path, required=True, help=out_help)

    p = sub.add_parser("simulate", help="run one episode", epilog=RunConfig.help_text(), formatter_class=fmt)
    common(p)
    p.add_argument("--launch", type=_triple, required=True, metavar="X,Y,DT", help="launch x km, y km, delay h")

    p = sub.add_parser("optimize", help="optimise the launch on the first day", epilog=RunConfig.help_text(),
                       formatter_class=fmt)
    common(p)
    p.add_argument("--method", choices=("bo", "pso", "uniform"), help="overrides the 'method' key")
    p.add_argument("--budget", type=int, help="overrides the 'budget' key")

    p = sub.add_parser("experiment", help="full day x optimizer x reward sweep", epilog=RunConfig.help_text(),
                       formatter_class=fmt)
    common(p)

    p = sub.add_parser("synth-wind", help="write the first day's synthetic wind grid", epilog=RunConfig.help_text(),
                       formatter_class=fmt)
    common(p, "grid file to write")

    p = sub.add_parser("export-windcone", help="wind vectors at the observed levels",
                       epilog=RunConfig.help_text(), formatter_class=fmt)
    common(p, "CSV file to write")
    p.add_argument("--at", type=_triple, required=True, metavar="X,Y,T", help="x km, y km, hours since grid start")
    return parser


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "method", None):
        changes["method"] = args.method
    if getattr(args, "budget", None) is not None:
        changes["budget"] = args.budget
    return cfg.replace(**changes) if changes else cfg


def _first_day(cfg: RunConfig):
    return cfg.day_list()[0]


def cmd_simulate(cfg: RunConfig, args) -> None:
    spec = cfg.experiment_spec(threads=1)
    day = _first_day(cfg)
    obj = launch_objective(day, cfg.reward, spec.controller, spec)
    trace = obj.trace(args.launch)
    args.out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(args.out / "episode.csv")
    lines = cfg.to_lines() + [
        f"launch = {','.join(repr(v) for v in args.launch)}",
        f"day = {day_label(day)}",
        f"seed.episode = {obj.episode_seed}",
        f"result.G = {trace.G!r}",
        f"result.steps = {len(trace.steps)}",
        f"result.termination = {trace.reason}",
    ]
    write_meta(args.out, lines, ["episode.csv"])
    print(f"G = {trace.G:.6g} over {len(trace.steps)} steps ({trace.reason})")


def cmd_optimize(cfg: RunConfig, args) -> None:
    spec = cfg.experiment_spec(threads=1)
    day = _first_day(cfg)
    obj = launch_objective(day, cfg.reward, spec.controller, spec)
    seed = split_seed(cfg.seed, "optimizer", day_label(day), cfg.method, cfg.reward, 0)
    if cfg.method == "bo":
        trace = bo_run(obj, spec.bounds, cfg.budget, seed, cfg.bo_init, cfg.bo_refit_every)
    elif cfg.method == "pso":
        trace = pso_run(obj, spec.bounds, cfg.budget, spec.pso, seed)
    else:
        trace = uniform_run(obj, spec.bounds, cfg.budget, seed)
    args.out.mkdir(parents=True, exist_ok=True)
    name = f"trace_{day_label(day)}_{cfg.method}_{cfg.reward}_0.csv"
    trace.to_csv(args.out / name)
    lines = cfg.to_lines() + [f"day = {day_label(day)}", f"seed.optimizer = {seed}"]
    if len(trace):
        st = converged_stats(trace)
        lines += [f"result.converged_max = {st.converged_max!r}", f"result.converge_index = {st.converge_index}"]
        print(f"converged max {st.converged_max:.6g} at iteration {st.converge_index} of {len(trace)}")
    if trace.error:
        lines.append(f"result.error = {trace.error}")
    write_meta(args.out, lines, [name])
    if trace.error:
        raise StratoError(f"objective failed: {trace.error}")


def cmd_experiment(cfg: RunConfig, args) -> None:
    spec = cfg.experiment_spec()
    report = run_experiment(spec, args.out, config_lines=cfg.to_lines())
    for c in report.cells:
        print(
            f"{c.optimizer:8s} {c.reward:5s} n={c.count} mean max {c.mean_converged_max:.6g} "
            f"mean index {c.mean_converge_index:.4g}"
        )
    for r, (tw, reach) in report.sweep.items():
        print(f"sweep {r:5s} tw {tw:.4f} reach {reach:.4f}")
    failed = sum(c.failures for c in report.cells)
    if failed:
        print(f"{failed} cell(s) failed; see trace files", file=sys.stderr)


def cmd_synth_wind(cfg: RunConfig, args) -> None:
    day = _first_day(cfg)
    if not isinstance(day, int):
        raise UsageError("synth-wind needs a synthetic day; day_files is set")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_grid(synthesize_grid(cfg.wind_spec(day), cfg.axes()), args.out)


def cmd_export_windcone(cfg: RunConfig, args) -> None:
    spec = cfg.experiment_spec(threads=1)
    wf = build_windfield(_first_day(cfg), spec)
    x, y, t = args.at
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_windcone(wind_cone(wf, x, y, t, spec.env), spec.env.obs_pressures, args.out)


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "experiment": cmd_experiment,
    "synth-wind": cmd_synth_wind,
    "export-windcone": cmd_export_windcone,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError, ConstraintError) as exc:
        print(f"stratokeeper: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StratoError, ArithmeticError, ValueError, OSError) as exc:
        print(f"stratokeeper: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
