"""Experiment orchestration: optimiser sweeps over days, reward sweeps, KDE and wind-cone exports.

A *day* is either an integer (seed of a synthetic wind grid) or a path to a
grid file. Every random stream is derived from the master seed with
:func:`split_seed`, so a run is fully determined by its :class:`ExperimentSpec`.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .balloon import BalloonParams
from .env import EnvConfig, EpisodeTrace, RewardKind, metrics, rollout
from .errors import UsageError
from .noise import NoiseSpec
from .optimize import Bounds, PsoParams, Trace, bo_run, converged_stats, pso_run, uniform_run
from .policy import ControllerSpec
from .windfield import GridAxes, SyntheticWindSpec, WindField, WindVector, read_grid, synthesize_grid

log = logging.getLogger(__name__)

OPTIMIZER_NAMES = ("bo", "pso", "uniform")


def split_seed(seed: int, *labels) -> int:
    """``seed`` XOR a stable 63-bit hash of the labels."""
    h = hashlib.blake2b("\x1f".join(str(x) for x in labels).encode(), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(h, "little")) & 0x7FFFFFFFFFFFFFFF


def day_label(day) -> str:
    if isinstance(day, (int, np.integer)):
        return str(int(day))
    return Path(str(day)).stem


@dataclass(frozen=True)
class ExperimentSpec:
    days: tuple = tuple(range(20))
    optimizers: tuple = ("bo", "uniform")
    rewards: tuple = ("step",)
    controller: ControllerSpec = ControllerSpec()
    budget: int = 60
    seeds: tuple = (0,)
    threads: int = 1
    master_seed: int = 0
    env: EnvConfig = EnvConfig()
    balloon: BalloonParams = BalloonParams()
    bounds: Bounds = Bounds()
    wind: SyntheticWindSpec = SyntheticWindSpec()
    axes: GridAxes = field(default_factory=GridAxes.centered)
    perturbation: NoiseSpec = NoiseSpec(amplitude=1.0)
    bo_init: int = 4
    bo_refit_every: int = 5
    pso: PsoParams = PsoParams()
    kde_bandwidth: float = 15.0
    kde_resolution: int = 201
    kde_extent: float = 400.0
    sweep_launches: int = 20
    sweep_radius: float = 400.0
    windcone_at: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("days", "optimizers", "rewards", "seeds"):
            val = tuple(getattr(self, name))
            if not val:
                raise ValueError(f"experiment needs at least one entry in {name}")
            object.__setattr__(self, name, val)
        opts = tuple(str(o).lower() for o in self.optimizers)
        for o in opts:
            if o not in OPTIMIZER_NAMES:
                raise ValueError(f"unknown optimizer {o!r}; expected one of {', '.join(OPTIMIZER_NAMES)}")
        object.__setattr__(self, "optimizers", opts)
        object.__setattr__(self, "rewards", tuple(RewardKind.parse(r).value for r in self.rewards))
        labels = [day_label(d) for d in self.days]
        if len(set(labels)) != len(labels):
            raise ValueError("day labels must be unique")
        if self.budget < 1 or self.threads < 1:
            raise ValueError("budget and threads must be >= 1")
        if not self.kde_bandwidth > 0 or self.kde_resolution < 2:
            raise ValueError("kde_bandwidth must be > 0 and kde_resolution >= 2")
        if self.sweep_launches < 0:
            raise ValueError("sweep_launches must be >= 0")


# ---------------------------------------------------------------- days


_FIELD_CACHE: dict = {}


def build_windfield(day, spec: ExperimentSpec) -> WindField:
    """Wind field for one day with its fixed per-day perturbation seed (cached per process)."""
    key = (day, spec.wind, spec.axes, spec.perturbation, spec.master_seed)
    wf = _FIELD_CACHE.get(key)
    if wf is None:
        if isinstance(day, (int, np.integer)):
            grid = synthesize_grid(replace(spec.wind, seed=int(day)), spec.axes)
        else:
            grid = read_grid(day)
        noise = replace(spec.perturbation, seed=split_seed(spec.master_seed, "perturbation", day_label(day)))
        wf = WindField(grid, noise)
        if len(_FIELD_CACHE) > 8:
            _FIELD_CACHE.clear()
        _FIELD_CACHE[key] = wf
    return wf


class LaunchObjective:
    """Pure adapter: launch configuration -> episode return ``G``."""

    def __init__(self, windfield: WindField, cfg: EnvConfig, controller, params: BalloonParams, episode_seed: int):
        self.windfield = windfield
        self.cfg = cfg
        self.controller = controller
        self.params = params
        self.episode_seed = episode_seed

    def trace(self, config) -> EpisodeTrace:
        return rollout(self.cfg, config, self.windfield, self.controller, self.episode_seed, self.params)

    def __call__(self, config) -> float:
        return self.trace(config).G


def launch_objective(day, reward_kind, controller: ControllerSpec, cfg: ExperimentSpec) -> LaunchObjective:
    env_cfg = replace(cfg.env, reward_kind=RewardKind.parse(reward_kind))
    wf = build_windfield(day, cfg)
    return LaunchObjective(
        wf, env_cfg, controller.build(env_cfg), cfg.balloon, split_seed(cfg.master_seed, "episode", day_label(day))
    )


# ---------------------------------------------------------------- analysis helpers


@dataclass(frozen=True, eq=False)
class KdeGrid:
    extent: float  # km, grid spans [-extent, extent] on both axes
    resolution: int
    bandwidth: float
    xs: np.ndarray
    ys: np.ndarray
    density: np.ndarray  # (len(ys), len(xs))

    @property
    def cell_area(self) -> float:
        return float((self.xs[1] - self.xs[0]) * (self.ys[1] - self.ys[0]))

    def integral(self) -> float:
        return float(self.density.sum() * self.cell_area)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("x_km", "y_km", "density"))
            for j, y in enumerate(self.ys):
                for i, x in enumerate(self.xs):
                    w.writerow((repr(float(x)), repr(float(y)), repr(float(self.density[j, i]))))


def kde_2d(points, bandwidth: float = 15.0, extent: float = 400.0, resolution: int = 201) -> KdeGrid:
    """Isotropic Gaussian KDE evaluated on a square grid."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise UsageError("kde_2d needs at least one point")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be > 0")
    xs = np.linspace(-extent, extent, resolution)
    ys = np.linspace(-extent, extent, resolution)
    ex = np.exp(-((xs[None, :] - pts[:, :1]) ** 2) / (2.0 * bandwidth**2))
    ey = np.exp(-((ys[None, :] - pts[:, 1:]) ** 2) / (2.0 * bandwidth**2))
    density = (ey.T @ ex) / (2.0 * math.pi * bandwidth**2 * pts.shape[0])
    return KdeGrid(extent, resolution, bandwidth, xs, ys, density)


def wind_cone(windfield: WindField, x_km: float, y_km: float, t_hours: float, cfg: EnvConfig = EnvConfig()) -> list:
    """Wind vectors at the observation pressure levels for one location and time."""
    return [windfield.sample(x_km, y_km, float(p), t_hours) for p in cfg.obs_pressures]


def write_windcone(cone: Sequence[WindVector], pressures, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("level", "pressure_pa", "u", "v"))
        for i, (p, vec) in enumerate(zip(pressures, cone)):
            w.writerow((i, repr(float(p)), repr(float(vec[0])), repr(float(vec[1]))))


def polar_launches(rng: np.random.Generator, n: int, radius: float = 400.0) -> np.ndarray:
    """Launch points with r ~ U(0, radius) and angle ~ U(0, 2 pi); not area-uniform."""
    r = rng.uniform(0.0, radius, n)
    a = rng.uniform(0.0, 2.0 * math.pi, n)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


def reward_sweep(
    day,
    reward_kinds,
    controller: ControllerSpec,
    n_launch: int,
    cfg: ExperimentSpec = ExperimentSpec(),
    seed: int = 0,
    radius: float | None = None,
    return_traces: bool = False,
):
    """Per reward kind ``(tw_fraction, reach_ratio)`` over polar-uniform launches at dt = 0."""
    if n_launch < 1:
        raise UsageError("reward_sweep needs n_launch >= 1")
    radius = cfg.sweep_radius if radius is None else radius
    rng = np.random.default_rng(seed)
    launches = polar_launches(rng, n_launch, radius)
    launches = np.clip(launches, -np.array([cfg.env.x_max, cfg.env.y_max]), np.array([cfg.env.x_max, cfg.env.y_max]))
    out, traces = {}, {}
    for kind in reward_kinds:
        kind = RewardKind.parse(kind).value
        obj = launch_objective(day, kind, controller, cfg)
        trs = [obj.trace((float(x), float(y), 0.0)) for x, y in launches]
        out[kind] = metrics(trs, cfg.env.region_radius)
        traces[kind] = trs
    return (out, traces) if return_traces else out


# ---------------------------------------------------------------- sweep


@dataclass(frozen=True)
class CellResult:
    day: str
    optimizer: str
    reward: str
    seed: int
    rows: tuple
    error: str | None

    @property
    def file_name(self) -> str:
        return f"trace_{self.day}_{self.optimizer}_{self.reward}_{self.seed}.csv"

    def trace(self) -> Trace:
        return Trace(self.optimizer, list(self.rows), self.error)


@dataclass
class CellAggregate:
    optimizer: str
    reward: str
    count: int
    failures: int
    mean_converged_max: float
    mean_converge_index: float
    median_converge_index: float


@dataclass
class AggregateReport:
    cells: list  # CellAggregate per (optimizer, reward)
    sweep: dict  # reward -> (tw_fraction, reach_ratio)
    results: list = field(default_factory=list)  # CellResult in sweep order

    def cell(self, optimizer: str, reward: str = "step") -> CellAggregate:
        for c in self.cells:
            if c.optimizer == optimizer and c.reward == reward:
                return c
        raise KeyError((optimizer, reward))

    def stats(self, optimizer: str, reward: str = "step") -> list:
        return [
            converged_stats(r.trace())
            for r in self.results
            if r.optimizer == optimizer and r.reward == reward and r.rows
        ]

    COLUMNS = (
        "section", "optimizer", "reward", "count", "failures", "mean_converged_max",
        "mean_converge_index", "median_converge_index", "tw_fraction", "reach_ratio",
    )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for c in self.cells:
                w.writerow((
                    "optimizer", c.optimizer, c.reward, c.count, c.failures, repr(c.mean_converged_max),
                    repr(c.mean_converge_index), repr(c.median_converge_index), "", "",
                ))
            for reward, (tw, reach) in self.sweep.items():
                w.writerow(("sweep", "", reward, "", "", "", "", "", repr(float(tw)), repr(float(reach))))


def _cell_seed(spec: ExperimentSpec, day, optimizer: str, reward: str, seed: int) -> int:
    return split_seed(spec.master_seed, "optimizer", day_label(day), optimizer, reward, seed)


def _run_cell(args) -> CellResult:
    spec, day, optimizer, reward, seed = args
    label = day_label(day)
    try:
        obj = launch_objective(day, reward, spec.controller, spec)
        s = _cell_seed(spec, day, optimizer, reward, seed)
        if optimizer == "bo":
            tr = bo_run(obj, spec.bounds, spec.budget, s, spec.bo_init, spec.bo_refit_every)
        elif optimizer == "pso":
            tr = pso_run(obj, spec.bounds, spec.budget, spec.pso, s)
        else:
            tr = uniform_run(obj, spec.bounds, spec.budget, s)
        return CellResult(label, optimizer, reward, seed, tuple(tr.rows), tr.error)
    except Exception as exc:  # a failed cell is recorded, never fatal to the sweep
        log.warning("cell %s/%s/%s/%s failed: %s", label, optimizer, reward, seed, exc)
        return CellResult(label, optimizer, reward, seed, (), f"{type(exc).__name__}: {exc}")


def resolve_threads(threads: int | None) -> int:
    env = os.environ.get("STRATOKEEPER_THREADS")
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise UsageError(f"STRATOKEEPER_THREADS must be an integer, got {env!r}") from None
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise UsageError("threads must be >= 1")
    return threads


def _map(fn, tasks: list, threads: int) -> list:
    threads = min(threads, len(tasks))
    if threads <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def _sweep_task(args):
    spec, day, seed = args
    _, traces = reward_sweep(day, spec.rewards, spec.controller, spec.sweep_launches, spec, seed, return_traces=True)
    return traces


def aggregate(results: Sequence[CellResult], spec: ExperimentSpec) -> list:
    cells = []
    for opt in spec.optimizers:
        for reward in spec.rewards:
            rs = [r for r in results if r.optimizer == opt and r.reward == reward]
            stats = [converged_stats(r.trace()) for r in rs if r.rows]
            n = len(stats)
            cells.append(CellAggregate(
                opt, reward, n, sum(1 for r in rs if r.error),
                math.fsum(s.converged_max for s in stats) / n if n else float("nan"),
                math.fsum(s.converge_index for s in stats) / n if n else float("nan"),
                float(np.median([s.converge_index for s in stats])) if n else float("nan"),
            ))
    return cells


def run_experiment(spec: ExperimentSpec, out_dir=None, config_lines: Sequence[str] = ()) -> AggregateReport:
    """Run every (day, optimiser, reward, seed) cell plus the reward sweep; write CSVs if ``out_dir``."""
    threads = spec.threads
    tasks = [
        (spec, day, opt, reward, seed)
        for day in spec.days
        for opt in spec.optimizers
        for reward in spec.rewards
        for seed in spec.seeds
    ]
    results = _map(_run_cell, tasks, threads)
    cells = aggregate(results, spec)

    sweep, positions = {}, {}
    if spec.sweep_launches > 0:
        sweep_tasks = [(spec, day, split_seed(spec.master_seed, "sweep", day_label(day))) for day in spec.days]
        pooled = {r: [] for r in spec.rewards}
        for traces in _map(_sweep_task, sweep_tasks, threads):
            for r in spec.rewards:
                pooled[r].extend(traces[r])
        for r in spec.rewards:
            sweep[r] = metrics(pooled[r], spec.env.region_radius)
            positions[r] = np.vstack([t.positions for t in pooled[r]])

    report = AggregateReport(cells, sweep, list(results))
    if out_dir is not None:
        _write_outputs(spec, report, positions, Path(out_dir), config_lines)
    return report


def _write_outputs(spec: ExperimentSpec, report: AggregateReport, positions: dict, out: Path, config_lines) -> None:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    report.to_csv(out / "report.csv")
    files.append("report.csv")
    for r in report.results:
        r.trace().to_csv(out / r.file_name)
        files.append(r.file_name)
    for reward, pts in positions.items():
        if len(pts):
            kde_2d(pts, spec.kde_bandwidth, spec.kde_extent, spec.kde_resolution).to_csv(out / f"kde_{reward}.csv")
            files.append(f"kde_{reward}.csv")
    x, y, t = spec.windcone_at
    for day in spec.days:
        name = f"windcone_{day_label(day)}.csv"
        wf = build_windfield(day, spec)
        write_windcone(wind_cone(wf, x, y, t, spec.env), spec.env.obs_pressures, out / name)
        files.append(name)
    write_meta(out, list(config_lines) + describe_spec(spec), files)


def describe_spec(spec: ExperimentSpec) -> list:
    """Flat ``key = value`` lines for the resolved spec, including derived seeds."""
    lines = [f"{k} = {v!r}" for k, v in sorted(vars(spec).items())]
    for day in spec.days:
        label = day_label(day)
        lines.append(f"seed.perturbation.{label} = {split_seed(spec.master_seed, 'perturbation', label)}")
        lines.append(f"seed.episode.{label} = {split_seed(spec.master_seed, 'episode', label)}")
        for opt in spec.optimizers:
            for reward in spec.rewards:
                for s in spec.seeds:
                    lines.append(f"seed.optimizer.{label}.{opt}.{reward}.{s} = {_cell_seed(spec, day, opt, reward, s)}")
    return lines


def write_meta(out: Path, config_lines: Sequence[str], files: Sequence[str]) -> None:
    with open(out / "meta.txt", "w", newline="\n") as f:
        f.write("# resolved configuration\n")
        for line in config_lines:
            f.write(line + "\n")
        f.write("# files\n")
        for name in sorted(set(files) | {"meta.txt"}):
            f.write(f"file = {name}\n")
