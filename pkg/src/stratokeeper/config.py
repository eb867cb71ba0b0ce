"""Flat ``key = value`` run configuration.

One assignment per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys are rejected. List-valued keys take comma-separated items;
``days`` also accepts inclusive ranges such as ``0-19``.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .balloon import BalloonParams
from .env import EnvConfig, RewardKind
from .errors import ConfigError
from .harness import ExperimentSpec, resolve_threads
from .noise import NoiseSpec
from .optimize import Bounds, PsoParams
from .policy import ControllerSpec
from .windfield import GridAxes, SyntheticWindSpec

_DEFAULT_ENV = EnvConfig()
_DEFAULT_BALLOON = BalloonParams()
_DEFAULT_WIND = SyntheticWindSpec()


def _key(default, doc: str, kind: str | None = None):
    return field(default=default, metadata={"doc": doc, "kind": kind})


@dataclass(frozen=True)
class RunConfig:
    # run
    seed: int = _key(0, "master seed; every random stream is split from it")
    threads: int = _key(0, "worker processes for experiment cells (0 = all cores; STRATOKEEPER_THREADS overrides)")

    # days and wind
    days: str = _key("0-19", "synthetic day seeds, e.g. '0-19' or '1,4,7'", "days")
    day_files: str = _key("", "comma-separated wind grid files used as days instead of synthetic seeds", "list")
    grid_center_lon: float = _key(0.0, "synthetic grid centre longitude (deg), also the station target")
    grid_center_lat: float = _key(1.0, "synthetic grid centre latitude (deg), also the station target")
    grid_half_width_km: float = _key(2400.0, "synthetic grid half width (km)")
    grid_hours: float = _key(72.0, "synthetic grid time span (h)")
    grid_step_deg: float = _key(0.4, "synthetic grid lon/lat spacing (deg)")
    grid_time_step: float = _key(6.0, "synthetic grid time spacing (h)")
    grid_levels: str = _key("2000,3500,5000,7000,9000,11000,14000,17500", "grid pressure levels (Pa, ascending)", "floats")
    wind_base_speed: float = _key(_DEFAULT_WIND.base_speed, "synthetic mean wind speed (m/s)")
    wind_twist: float = _key(_DEFAULT_WIND.direction_twist, "wind direction change per Pa (rad/Pa)")
    wind_time_drift: float = _key(_DEFAULT_WIND.time_drift, "wind direction drift (rad/h)")
    wind_speed_noise: float = _key(_DEFAULT_WIND.noise.amplitude, "relative speed modulation amplitude")
    wind_noise_scale_km: float = _key(_DEFAULT_WIND.noise.spatial_scale, "speed modulation length scale (km)")
    perturb_amplitude: float = _key(1.0, "forecast-error noise amplitude (m/s)")
    perturb_scale_km: float = _key(300.0, "forecast-error noise length scale (km)")
    perturb_pressure_scale: float = _key(3000.0, "forecast-error noise pressure scale (Pa)")
    perturb_time_scale: float = _key(12.0, "forecast-error noise time scale (h)")

    # environment
    reward: str = _key("step", "reward for simulate/optimize: step, tanh or exp")
    region_radius: float = _key(_DEFAULT_ENV.region_radius, "station-keeping radius (km)")
    decision_period: float = _key(_DEFAULT_ENV.decision_period, "seconds between actions")
    physics_dt: float = _key(_DEFAULT_ENV.physics_dt, "integrator step (s)")
    horizon: int = _key(_DEFAULT_ENV.horizon, "decision steps per episode")
    obs_pressure_lo: float = _key(_DEFAULT_ENV.obs_pressure_lo, "lowest observed wind level (Pa)")
    obs_pressure_hi: float = _key(_DEFAULT_ENV.obs_pressure_hi, "highest observed wind level (Pa)")
    cliff_c: float = _key(_DEFAULT_ENV.cliff_c, "reward just outside the region for step/tanh")
    decay_rho: float = _key(_DEFAULT_ENV.decay_rho, "distance where the outside decay starts (km)")
    decay_tau: float = _key(_DEFAULT_ENV.decay_tau, "outside reward half-distance (km)")
    exp_rate: float = _key(_DEFAULT_ENV.exp_rate, "exp reward halving rate (1/km)")
    altitude_lo: float = _key(_DEFAULT_ENV.altitude_lo, "lowest commandable altitude (m)")
    altitude_hi: float = _key(_DEFAULT_ENV.altitude_hi, "highest commandable altitude (m)")
    launch_altitude: float = _key(_DEFAULT_ENV.launch_altitude, "episode start altitude (m)")
    floor_altitude: float = _key(_DEFAULT_ENV.floor_altitude, "episode ends below this altitude (m)")
    sink_rate_limit: float = _key(_DEFAULT_ENV.sink_rate_limit, "sink rate ending a resource-exhausted episode (m/s)")
    lapse_scale_lo: float = _key(_DEFAULT_ENV.lapse_scale_lo, "lower bound of the per-episode lapse-rate scale")
    lapse_scale_hi: float = _key(_DEFAULT_ENV.lapse_scale_hi, "upper bound of the per-episode lapse-rate scale")

    # balloon
    payload_mass: float = _key(_DEFAULT_BALLOON.payload_mass, "payload mass (kg)")
    drag_coefficient: float = _key(_DEFAULT_BALLOON.drag_coefficient, "envelope drag coefficient")
    initial_sand: float = _key(_DEFAULT_BALLOON.initial_sand, "ballast at launch (kg)")
    initial_helium: float = _key(0.0, "helium at launch (mol); 0 solves for free_lift_ascent at sea level")
    free_lift_ascent: float = _key(_DEFAULT_BALLOON.free_lift_ascent, "sea-level ascent rate used to size the fill (m/s)")
    burst_altitude: float = _key(_DEFAULT_BALLOON.burst_altitude, "altitude whose full-fill volume is the burst volume (m)")
    max_vent_rate: float = _key(_DEFAULT_BALLOON.max_vent_rate, "helium vented per decision step at most (mol)")
    max_ballast_rate: float = _key(_DEFAULT_BALLOON.max_ballast_rate, "sand dropped per decision step at most (kg)")

    # controller
    controller: str = _key("greedy", "greedy, hold or mlp")
    greedy_speed_weight: float = _key(ControllerSpec.speed_weight, "inside the region: weight on wind speed vs bearing")
    greedy_float_rate: float = _key(ControllerSpec.float_rate, "greedy floats only below this |ascent rate| (m/s)")
    hold_altitude: float = _key(ControllerSpec.hold_altitude, "target altitude of the hold controller (m)")
    mlp_weights: str = _key("", "actor weights file for controller = mlp")

    # optimisers
    method: str = _key("bo", "optimizer for the optimize command: bo, pso or uniform")
    budget: int = _key(60, "objective evaluations per optimizer run")
    x_max: float = _key(400.0, "launch box half width east-west (km)")
    y_max: float = _key(400.0, "launch box half width north-south (km)")
    t_max: float = _key(24.0, "latest launch delay (h)")
    bo_init: int = _key(4, "uniform samples seeding BO")
    bo_refit_every: int = _key(5, "BO iterations between hyperparameter fits")
    pso_swarm: int = _key(12, "PSO swarm size")
    pso_mode: str = _key("schedule", "PSO coefficients: schedule or constant")

    # experiment
    optimizers: str = _key("bo,uniform", "optimizers compared by the experiment command", "list")
    rewards: str = _key("step", "reward kinds compared by the experiment command", "list")
    seeds: str = _key("0", "optimizer seeds per cell", "ints")
    kde_bandwidth: float = _key(15.0, "KDE bandwidth (km)")
    kde_resolution: int = _key(201, "KDE grid points per axis")
    kde_extent: float = _key(400.0, "KDE grid half width (km)")
    sweep_launches: int = _key(20, "launches per day in the reward sweep (0 disables it)")
    sweep_radius: float = _key(400.0, "launch radius of the reward sweep (km)")

    @classmethod
    def keys(cls) -> list:
        return [f.name for f in fields(cls)]

    @classmethod
    def help_text(cls) -> str:
        lines = ["configuration keys (key = default: description):"]
        for f in fields(cls):
            lines.append(f"  {f.name} = {f.default!r}: {f.metadata['doc']}")
        return "\n".join(lines)

    # ------------------------------------------------------------ parsing

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
            if key in values:
                raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
            values[key] = _convert(known[key], value, f"{source}:{lineno}")
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
        return cls.from_text(text, str(path))

    def to_lines(self) -> list:
        return [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]

    # ------------------------------------------------------------ builders

    def validate(self) -> None:
        """Build every module config so invariant violations surface before any run."""
        try:
            self.env_config()
            self.balloon_params()
            self.controller_spec()
            self.experiment_spec(threads=1)
            self.day_list()
            if self.method not in ("bo", "pso", "uniform"):
                raise ValueError(f"unknown method {self.method!r}")
            if self.budget < 1:
                raise ValueError("budget must be >= 1")
            if self.threads < 0:
                raise ValueError("threads must be >= 0")
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def env_config(self, reward: str | None = None) -> EnvConfig:
        return EnvConfig(
            region_radius=self.region_radius, decision_period=self.decision_period, physics_dt=self.physics_dt,
            horizon=self.horizon, obs_pressure_lo=self.obs_pressure_lo, obs_pressure_hi=self.obs_pressure_hi,
            reward_kind=RewardKind.parse(reward or self.reward), cliff_c=self.cliff_c, decay_rho=self.decay_rho,
            decay_tau=self.decay_tau, exp_rate=self.exp_rate, altitude_lo=self.altitude_lo,
            altitude_hi=self.altitude_hi, launch_altitude=self.launch_altitude,
            floor_altitude=self.floor_altitude, sink_rate_limit=self.sink_rate_limit,
            lapse_scale_lo=self.lapse_scale_lo, lapse_scale_hi=self.lapse_scale_hi,
            x_max=self.x_max, y_max=self.y_max, t_max=self.t_max,
        )

    def balloon_params(self) -> BalloonParams:
        return BalloonParams(
            payload_mass=self.payload_mass, drag_coefficient=self.drag_coefficient,
            initial_sand=self.initial_sand, initial_helium=self.initial_helium or None,
            free_lift_ascent=self.free_lift_ascent, burst_altitude=self.burst_altitude,
            max_vent_rate=self.max_vent_rate, max_ballast_rate=self.max_ballast_rate,
        )

    def controller_spec(self) -> ControllerSpec:
        return ControllerSpec(
            kind=self.controller, speed_weight=self.greedy_speed_weight, float_rate=self.greedy_float_rate,
            hold_altitude=self.hold_altitude, mlp_path=self.mlp_weights,
        )

    def axes(self) -> GridAxes:
        return GridAxes.centered(
            self.grid_center_lon, self.grid_center_lat, self.grid_half_width_km,
            tuple(_floats(self.grid_levels)), self.grid_hours, self.grid_step_deg, self.grid_step_deg,
            self.grid_time_step,
        )

    def wind_spec(self, seed: int = 0) -> SyntheticWindSpec:
        return SyntheticWindSpec(
            seed=seed, base_speed=self.wind_base_speed, direction_twist=self.wind_twist,
            time_drift=self.wind_time_drift,
            noise=NoiseSpec(amplitude=self.wind_speed_noise, spatial_scale=self.wind_noise_scale_km),
        )

    def perturbation(self) -> NoiseSpec:
        return NoiseSpec(
            amplitude=self.perturb_amplitude, spatial_scale=self.perturb_scale_km,
            pressure_scale=self.perturb_pressure_scale, time_scale=self.perturb_time_scale,
        )

    def day_list(self) -> tuple:
        files = _items(self.day_files)
        if files:
            return tuple(files)
        return _parse_days(self.days)

    def experiment_spec(self, threads: int | None = None) -> ExperimentSpec:
        if threads is None:
            threads = resolve_threads(self.threads or None)
        return ExperimentSpec(
            days=self.day_list(), optimizers=tuple(_items(self.optimizers)), rewards=tuple(_items(self.rewards)),
            controller=self.controller_spec(), budget=self.budget, seeds=tuple(_ints(self.seeds)),
            threads=threads, master_seed=self.seed, env=self.env_config(), balloon=self.balloon_params(),
            bounds=Bounds(self.x_max, self.y_max, self.t_max), wind=self.wind_spec(), axes=self.axes(),
            perturbation=self.perturbation(), bo_init=self.bo_init, bo_refit_every=self.bo_refit_every,
            pso=PsoParams(swarm_size=self.pso_swarm, mode=self.pso_mode), kde_bandwidth=self.kde_bandwidth,
            kde_resolution=self.kde_resolution, kde_extent=self.kde_extent, sweep_launches=self.sweep_launches,
            sweep_radius=self.sweep_radius,
        )

    def replace(self, **changes) -> "RunConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg


def _items(text: str) -> list:
    return [s.strip() for s in str(text).split(",") if s.strip()]


def _floats(text: str) -> list:
    return [float(s) for s in _items(text)]


def _ints(text: str) -> list:
    return [int(s) for s in _items(text)]


def _parse_days(text: str) -> tuple:
    days = []
    for item in _items(text):
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", item)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty day range {item!r}")
            days.extend(range(lo, hi + 1))
        else:
            days.append(int(item))
    if not days:
        raise ValueError("days must name at least one day")
    return tuple(days)


def _convert(f, value: str, where: str):
    kind = f.metadata.get("kind")
    try:
        if f.type in (int, "int"):
            return int(value)
        if f.type in (float, "float"):
            v = float(value)
            if not math.isfinite(v):
                raise ValueError("must be finite")
            return v
        if kind == "days":
            _parse_days(value)
        elif kind == "floats":
            _floats(value)
        elif kind == "ints":
            _ints(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value {value!r} for {f.name}: {exc}") from None
