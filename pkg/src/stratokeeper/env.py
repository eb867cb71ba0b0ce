"""Station-keeping MDP around a latex balloon.

Observation layout (77 floats, each divided by the scale in ``FEATURE_SCALES``):

=========  ===================================================================
index      feature
=========  ===================================================================
0..49      per wind level i (25 levels, ascending pressure on [5000, 14000] Pa):
           ``2i`` wind speed, ``2i+1`` bearing error to the target
50         altitude h
51         ascent rate h_dot
52         envelope drag area A
53         envelope volume V
54         helium mols n_h
55         total mass m_T
56         sand mass m_s
57         wind speed at the balloon
58, 59     sin / cos of the bearing error at the balloon
60         distance to target d
61, 62     sin / cos of the compass bearing from balloon to target
63, 64     sin / cos of the UTC time of day
65         sand remaining as a fraction of the initial load
66         helium remaining as a fraction of the initial fill
67         previous reward
68..70     altitude at the previous three decision steps (newest first)
71..73     ascent rate at the previous three decision steps
74..76     float action a2 at the previous three decision steps
=========  ===================================================================

Bearings are compass angles (clockwise from north) and bearing errors are
wrapped to (-pi, pi]. At the target itself the heading is taken as north,
i.e. (sin, cos) = (0, 1).
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numba
import numpy as np

from .atmosphere import AtmosphereModel, _air, properties_at, sample_lapse_scale
from .balloon import (
    IH,
    IHD,
    IMS,
    INH,
    IT,
    IVX,
    IVY,
    IX,
    IY,
    BalloonParams,
    BalloonState,
    _ballast_calc,
    _rk4,
    _vent_root,
    neutral_helium,
)
from .errors import ConstraintError, UsageError
from .windfield import WindField, _raise_bounds, _wind_at

OBS_SIZE = 77
N_LEVELS = 25

# feature indices
SPEEDS = slice(0, 2 * N_LEVELS, 2)
BEARINGS = slice(1, 2 * N_LEVELS, 2)
F_H, F_HDOT, F_AREA, F_VOL, F_NH, F_MT, F_MS = range(50, 57)
F_VH, F_SIN_TH, F_COS_TH, F_D, F_SIN_TX, F_COS_TX = range(57, 63)
F_SIN_TOD, F_COS_TOD, F_MS_FRAC, F_NH_FRAC, F_PREV_R = range(63, 68)
HIST_H = slice(68, 71)
HIST_HDOT = slice(71, 74)
HIST_A2 = slice(74, 77)

FEATURE_SCALES = {
    "wind_speed": 30.0,  # m/s
    "bearing": math.pi,  # rad
    "altitude": 21000.0,  # m
    "ascent_rate": 10.0,  # m/s
    "area": 50.0,  # m^2
    "volume": 100.0,  # m^3
    "helium": 200.0,  # mol
    "mass": 5.0,  # kg
    "sand": 1.0,  # kg
    "distance": 400.0,  # km
}


class RewardKind(str, enum.Enum):
    STEP = "step"
    TANH = "tanh"
    EXP = "exp"

    @classmethod
    def parse(cls, value) -> "RewardKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown reward kind {value!r}; expected one of step, tanh, exp") from None


@dataclass(frozen=True)
class EnvConfig:
    region_radius: float = 50.0  # km
    decision_period: float = 180.0  # s
    physics_dt: float = 10.0  # s
    horizon: int = 960
    obs_pressure_lo: float = 5000.0
    obs_pressure_hi: float = 14000.0
    n_wind_levels: int = N_LEVELS
    reward_kind: RewardKind = RewardKind.STEP
    cliff_c: float = 0.4
    decay_rho: float = 50.0  # km
    decay_tau: float = 100.0  # km
    exp_rate: float = 0.01  # per km
    altitude_lo: float = 14000.0
    altitude_hi: float = 21000.0
    time_factor_lo: float = 1.0
    time_factor_hi: float = 5.0
    launch_altitude: float = 14000.0
    floor_altitude: float = 10000.0
    sink_rate_limit: float = 2.0  # m/s, resource-exhaustion termination
    lapse_scale_lo: float = 0.95
    lapse_scale_hi: float = 1.05
    x_max: float = 400.0
    y_max: float = 400.0
    t_max: float = 24.0

    def __post_init__(self):
        object.__setattr__(self, "reward_kind", RewardKind.parse(self.reward_kind))
        if not self.region_radius > 0:
            raise ValueError("region_radius must be > 0")
        if not self.obs_pressure_lo < self.obs_pressure_hi:
            raise ValueError("obs_pressure_lo must be < obs_pressure_hi")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be >= 1")
        if self.n_wind_levels != N_LEVELS:
            raise ValueError(f"the observation layout fixes n_wind_levels at {N_LEVELS}")
        if not (self.decision_period > 0 and self.physics_dt > 0):
            raise ValueError("decision_period and physics_dt must be > 0")
        if not self.decay_tau > 0:
            raise ValueError("decay_tau must be > 0")
        if self.lapse_scale_lo > self.lapse_scale_hi:
            raise ValueError("lapse_scale_lo must be <= lapse_scale_hi")

    @property
    def obs_pressures(self) -> np.ndarray:
        return np.linspace(self.obs_pressure_lo, self.obs_pressure_hi, self.n_wind_levels)

    @property
    def n_substeps(self) -> int:
        return max(1, int(round(self.decision_period / self.physics_dt)))


class Action(NamedTuple):
    u0: float
    u1: float
    u2: float


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    terminated: bool
    reason: str | None
    info: dict


@dataclass
class EpisodeTrace:
    """Per-step records of one episode. ``G`` is the undiscounted return."""

    steps: list = field(default_factory=list)
    horizon: int = 0
    reason: str | None = None
    G: float = 0.0

    COLUMNS = ("step", "t_s", "x_km", "y_km", "h_m", "d_km", "reward", "u0", "u1", "u2")

    def append(self, row: tuple) -> None:
        self.steps.append(row)
        self.G += row[6]

    @property
    def rewards(self) -> list:
        return [r[6] for r in self.steps]

    @property
    def distances(self) -> np.ndarray:
        return np.array([r[5] for r in self.steps])

    @property
    def positions(self) -> np.ndarray:
        return np.array([(r[2], r[3]) for r in self.steps]).reshape(-1, 2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.steps:
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


# ---------------------------------------------------------------- scalar ops


def decode_action(u: Sequence[float], cfg: EnvConfig = EnvConfig()) -> tuple:
    """Map normalised controls in [-1, 1] to (target altitude m, time factor, float flag)."""
    u0, u1, u2 = (min(max(float(c), -1.0), 1.0) for c in u)
    a0 = cfg.altitude_lo + (u0 + 1.0) / 2.0 * (cfg.altitude_hi - cfg.altitude_lo)
    a1 = cfg.time_factor_lo + (u1 + 1.0) / 2.0 * (cfg.time_factor_hi - cfg.time_factor_lo)
    return a0, a1, u2


def desired_ascent_rate(a0: float, a1: float, a2: float, h_t: float, T: float) -> float:
    if not T > 0:
        raise ValueError("decision period must be positive")
    if -1.0 <= a2 <= 0.0:
        return (a0 - h_t) / (a1 * T)
    return 0.0


def reward(d: float, kind=RewardKind.STEP, cfg: EnvConfig = EnvConfig()) -> float:
    if d < 0:
        raise ValueError(f"distance must be >= 0, got {d!r}")
    kind = RewardKind.parse(kind)
    if kind is RewardKind.EXP:
        return 2.0 ** (-cfg.exp_rate * d)
    if d < cfg.region_radius:
        if kind is RewardKind.STEP:
            return 1.0
        return -(math.tanh(d / 20.0 - 3.0) - 1.0) / 2.0
    return cfg.cliff_c * 2.0 ** (-(d - cfg.decay_rho) / cfg.decay_tau)


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _wrap(a):
    a = a + math.pi
    a -= 2.0 * math.pi * math.floor(a / (2.0 * math.pi))
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@numba.njit(cache=True)
def _bearing_error(u, v, tx):
    if u == 0.0 and v == 0.0:
        return 0.0
    return _wrap(math.atan2(u, v) - tx)


@numba.njit(cache=True)
def _observe(y, hist, prev_reward, n0, ms0, obs_p, atm_alt, atm_t, atm_l, atm_p, h_max,
             wu, wv, levels, wseed, wfp, bp, scales, out):
    """Fill ``out`` (77) for state ``y``; returns the wind error axis (0 = ok)."""
    x = y[IX]
    yy = y[IY]
    t_h = y[IT] / 3600.0
    d = math.sqrt(x * x + yy * yy)
    if d > 0.0:
        tx = math.atan2(-x, -yy)
        sin_tx = -x / d
        cos_tx = -yy / d
    else:
        tx = 0.0
        sin_tx = 0.0
        cos_tx = 1.0
    for i in range(obs_p.shape[0]):
        u, v, err, _ = _wind_at(wu, wv, levels, wseed, wfp, x, yy, obs_p[i], t_h)
        if err != 0:
            return err
        out[2 * i] = math.sqrt(u * u + v * v) / scales[0]
        out[2 * i + 1] = _bearing_error(u, v, tx) / scales[1]
    h = min(max(y[IH], 0.0), h_max)
    T, P, rho = _air(h, atm_alt, atm_t, atm_l, atm_p)
    n_h = y[INH]
    m_s = y[IMS]
    V = n_h * 8.31446 * T / P
    A = math.pi * (3.0 * V / (4.0 * math.pi)) ** (2.0 / 3.0)
    u, v, err, _ = _wind_at(wu, wv, levels, wseed, wfp, x, yy, P, t_h)
    if err != 0:
        return err
    th = _bearing_error(u, v, tx)
    out[50] = y[IH] / scales[2]
    out[51] = y[IHD] / scales[3]
    out[52] = A / scales[4]
    out[53] = V / scales[5]
    out[54] = n_h / scales[6]
    out[55] = (bp[0] + n_h * bp[2] + m_s) / scales[7]
    out[56] = m_s / scales[8]
    out[57] = math.sqrt(u * u + v * v) / scales[0]
    out[58] = math.sin(th)
    out[59] = math.cos(th)
    out[60] = d / scales[9]
    out[61] = sin_tx
    out[62] = cos_tx
    tod = 2.0 * math.pi * ((wfp[4] + t_h) % 24.0) / 24.0
    out[63] = math.sin(tod)
    out[64] = math.cos(tod)
    out[65] = m_s / ms0 if ms0 > 0.0 else 0.0
    out[66] = n_h / n0 if n0 > 0.0 else 0.0
    out[67] = prev_reward
    for k in range(3):
        out[68 + k] = hist[k] / scales[2]
        out[71 + k] = hist[3 + k] / scales[3]
        out[74 + k] = hist[6 + k]
    return 0


@numba.njit(cache=True)
def _advance(y, n_sub, dt, atm_alt, atm_t, atm_l, atm_p, h_max, wu, wv, levels, wseed, wfp, bp, floor_h):
    """Integrate ``n_sub`` physics steps; stops early on burst or floor.

    Returns (error_axis, clamps, status) with status 0 ok, 1 burst, 2 floor.
    """
    clamps = 0
    for _ in range(n_sub):
        err, c = _rk4(y, dt, atm_alt, atm_t, atm_l, atm_p, h_max, wu, wv, levels, wseed, wfp, bp)
        clamps += c
        if err != 0:
            return err, clamps, 0
        h = min(max(y[IH], 0.0), h_max)
        T, P, rho = _air(h, atm_alt, atm_t, atm_l, atm_p)
        if y[INH] * 8.31446 * T / P >= bp[3]:
            return 0, clamps, 1
        if y[IH] < floor_h:
            return 0, clamps, 2
    return 0, clamps, 0


def _scales_array() -> np.ndarray:
    s = FEATURE_SCALES
    return np.array(
        [s["wind_speed"], s["bearing"], s["altitude"], s["ascent_rate"], s["area"], s["volume"],
         s["helium"], s["mass"], s["sand"], s["distance"]]
    )


_SCALES = _scales_array()


# ---------------------------------------------------------------- environment


def observe(
    state: BalloonState,
    windfield: WindField,
    cfg: EnvConfig = EnvConfig(),
    *,
    params: BalloonParams | None = None,
    atmosphere: AtmosphereModel | None = None,
    history: Sequence[float] | None = None,
    prev_reward: float = 0.0,
) -> np.ndarray:
    """Build the 77-feature observation for a standalone state.

    ``history`` is (h_-1, h_-2, h_-3, hd_-1, hd_-2, hd_-3, a2_-1, a2_-2, a2_-3);
    it defaults to the current altitude / zero ascent / zero float.
    """
    params = params or BalloonParams()
    atmosphere = atmosphere or AtmosphereModel.standard()
    if history is None:
        history = [state.h] * 3 + [state.h_dot] * 3 + [0.0] * 3
    out = np.empty(OBS_SIZE)
    wu, wv, levels, wseed, wfp = windfield.kernel_params
    y = state.to_array()
    err = _observe(
        y, np.asarray(history, dtype=float), float(prev_reward), params.initial_helium, params.initial_sand,
        cfg.obs_pressures, *atmosphere.arrays, atmosphere.max_altitude, wu, wv, levels, wseed, wfp,
        params.kernel_args, _SCALES, out,
    )
    if err:
        lon, lat = windfield.lonlat(state.x, state.y)
        _raise_bounds(windfield.grid, err, lon, lat, float("nan"), state.t / 3600.0)
    return out


class StationKeepingEnv:
    """Single-owner mutable environment. Call :meth:`reset` before stepping."""

    def __init__(self, cfg: EnvConfig, windfield: WindField, params: BalloonParams | None = None):
        self.cfg = cfg
        self.windfield = windfield
        self.params = params or BalloonParams()
        self._kernel_wind = windfield.kernel_params
        self._obs_p = cfg.obs_pressures
        self._bp = self.params.kernel_args
        self.terminated = True
        self.y = None

    def check_launch(self, launch) -> tuple:
        x0, y0, dt_h = (float(v) for v in launch)
        c = self.cfg
        if not abs(x0) <= c.x_max:
            raise ConstraintError(f"launch x0={x0!r} km violates |x0| <= {c.x_max!r}")
        if not abs(y0) <= c.y_max:
            raise ConstraintError(f"launch y0={y0!r} km violates |y0| <= {c.y_max!r}")
        if not 0.0 <= dt_h <= c.t_max:
            raise ConstraintError(f"launch dt={dt_h!r} h violates 0 <= dt <= {c.t_max!r}")
        return x0, y0, dt_h

    def reset(self, launch=(0.0, 0.0, 0.0), seed: int = 0) -> np.ndarray:
        x0, y0, dt_h = self.check_launch(launch)
        rng = np.random.default_rng(seed)
        self.atmosphere = AtmosphereModel.standard(
            sample_lapse_scale(rng, self.cfg.lapse_scale_lo, self.cfg.lapse_scale_hi)
        )
        self._atm = (*self.atmosphere.arrays, self.atmosphere.max_altitude)
        h0 = self.cfg.launch_altitude
        air = properties_at(self.atmosphere, h0)
        wind = self.windfield.sample(x0, y0, air.pressure, dt_h)
        p = self.params
        self.y = BalloonState(
            x0, y0, h0, 0.0, wind.u, wind.v, p.initial_helium, p.initial_sand, dt_h * 3600.0
        ).to_array()
        self.t0 = dt_h * 3600.0
        self.hist = np.array([h0] * 3 + [0.0] * 6)
        self.n_steps = 0
        self.prev_reward = 0.0
        self.terminated = False
        self.obs = self._observe()
        return self.obs

    @property
    def state(self) -> BalloonState:
        return BalloonState.from_array(self.y)

    def _raise(self, err):
        lon, lat = self.windfield.lonlat(self.y[IX], self.y[IY])
        _raise_bounds(self.windfield.grid, err, lon, lat, float("nan"), self.y[IT] / 3600.0)

    def _observe(self) -> np.ndarray:
        out = np.empty(OBS_SIZE)
        wu, wv, levels, wseed, wfp = self._kernel_wind
        p = self.params
        err = _observe(
            self.y, self.hist, self.prev_reward, p.initial_helium, p.initial_sand, self._obs_p,
            *self._atm, wu, wv, levels, wseed, wfp, self._bp, _SCALES, out,
        )
        if err:
            self._raise(err)
        return out

    def step(self, action) -> StepOutcome:
        if self.terminated:
            raise UsageError("step() called on a terminated environment; call reset() first")
        cfg, p, y = self.cfg, self.params, self.y
        u = [min(max(float(c), -1.0), 1.0) for c in action]
        a0, a1, a2 = decode_action(u, cfg)
        h_t, hd_t = y[IH], y[IHD]
        hd_d = desired_ascent_rate(a0, a1, a2, h_t, cfg.decision_period)
        vented = dropped = 0.0
        floating = not (-1.0 <= a2 <= 0.0)
        if not floating and hd_d != hd_t:
            T, P, rho = _air(min(max(h_t, 0.0), self._atm[4]), *self._atm[:4])
            if hd_d > hd_t:
                m_calc = _ballast_calc(hd_d, y[INH], T, P, rho, p.payload_mass, p.drag_coefficient, p.m_he)
                dropped = min(max(y[IMS] - m_calc, 0.0), p.max_ballast_rate, y[IMS])
                y[IMS] -= dropped
            else:
                n_calc, ok = _vent_root(
                    hd_d, T, P, rho, p.payload_mass + y[IMS], max(y[INH], 1e-12), p.drag_coefficient, p.m_he
                )
                if ok:
                    vented = min(max(y[INH] - n_calc, 0.0), p.max_vent_rate, y[INH])
                else:
                    vented = min(p.max_vent_rate, y[INH])
                y[INH] -= vented

        wu, wv, levels, wseed, wfp = self._kernel_wind
        err, clamps, status = _advance(
            y, cfg.n_substeps, cfg.decision_period / cfg.n_substeps, *self._atm,
            wu, wv, levels, wseed, wfp, self._bp, cfg.floor_altitude,
        )
        self.windfield.pressure_clamps += clamps
        if err:
            self.terminated = True
            self._raise(err)

        self.n_steps += 1
        d = math.hypot(y[IX], y[IY])
        r = reward(d, cfg.reward_kind, cfg)
        reason = None
        if status == 1:
            reason = "burst"
        elif status == 2:
            reason = "floor"
        elif (
            y[IMS] <= 0.0
            and y[INH] <= neutral_helium(p, 0.0)
            and y[IHD] < -cfg.sink_rate_limit
        ):
            reason = "resources"
        elif self.n_steps >= cfg.horizon:
            reason = "horizon"

        self.hist = np.array(
            [h_t, self.hist[0], self.hist[1], hd_t, self.hist[3], self.hist[4], a2, self.hist[6], self.hist[7]]
        )
        self.prev_reward = r
        self.terminated = reason is not None
        self.obs = self._observe()
        info = {
            "d_km": d, "n_h": y[INH], "m_s": y[IMS], "vented": vented, "dropped": dropped,
            "h": y[IH], "h_dot_desired": hd_d, "step": self.n_steps,
        }
        return StepOutcome(self.obs, r, self.terminated, reason, info)


Controller = Callable[[np.ndarray], Sequence[float]]


def rollout(
    cfg: EnvConfig,
    launch,
    windfield: WindField,
    controller: Controller,
    seed: int = 0,
    params: BalloonParams | None = None,
) -> EpisodeTrace:
    """Run one episode from ``launch = (x0 km, y0 km, dt h)`` and return its trace."""
    env = StationKeepingEnv(cfg, windfield, params)
    obs = env.reset(launch, seed)
    trace = EpisodeTrace(horizon=cfg.horizon)
    while True:
        a = tuple(float(c) for c in controller(obs))
        out = env.step(a)
        y = env.y
        trace.append(
            (out.info["step"], y[IT] - env.t0, y[IX], y[IY], y[IH], out.info["d_km"], out.reward, a[0], a[1], a[2])
        )
        obs = out.observation
        if out.terminated:
            trace.reason = out.reason
            return trace


def metrics(traces: Sequence[EpisodeTrace], radius: float = 50.0) -> tuple:
    """(time-within-region fraction, reach ratio) over a set of episodes.

    The time fraction divides by the full horizon of each episode, so steps
    lost to early termination count as outside.
    """
    if not traces:
        raise UsageError("metrics() needs at least one trace")
    inside = 0
    total = 0
    reached = 0
    for tr in traces:
        d = tr.distances
        inside += int(np.sum(d < radius))
        total += max(tr.horizon, len(tr.steps))
        reached += int(d.size > 0 and d.min() < radius)
    return inside / total, reached / len(traces)
