"""Latex balloon point-mass dynamics.

Forces are buoyancy, quadratic drag against the wind-relative velocity, and
weight::

    m a = rho V g e_z - 1/2 rho c_d A |v_r| v_r - (m_p + m_h + m_s) g e_z

with ``V = n R T / P`` (gas at ambient temperature) and the sphere
cross-section ``A = pi (3V / 4pi)^(2/3)``. Horizontal positions are km,
velocities m/s, altitude m, time s.

Because ``rho V = n M_air`` the buoyancy does not depend on altitude: a
balloon with more than neutral helium climbs until it bursts unless it vents.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from .atmosphere import G0, M_AIR, R_GAS, SEA_LEVEL_PRESSURE, SEA_LEVEL_TEMPERATURE, AirProperties, AtmosphereModel, _air
from .errors import DomainError
from .windfield import WindField, WindVector, _raise_bounds, _wind_at

log = logging.getLogger(__name__)

M_HE = 0.0040026  # kg/mol

# State vector layout shared with the compiled kernels.
IX, IY, IH, IVX, IVY, IHD, INH, IMS, IT = range(9)

# RK4 micro-steps are sized so the local drag relaxation rate times the step
# stays at or below this value.
_STIFF_LIMIT = 0.75
_MAX_MICRO = 2000


@dataclass(frozen=True)
class BalloonParams:
    """Vehicle constants.

    ``initial_helium`` defaults to the mols giving ``free_lift_ascent`` m/s
    terminal ascent at sea level; ``burst_volume`` defaults to the envelope
    volume those mols reach at ``burst_altitude`` in the standard atmosphere.
    """

    payload_mass: float = 1.5
    drag_coefficient: float = 0.47
    m_he: float = M_HE
    m_air: float = M_AIR
    initial_sand: float = 0.5
    initial_helium: float | None = None
    free_lift_ascent: float = 4.0
    burst_volume: float | None = None
    burst_altitude: float = 22000.0
    max_vent_rate: float = 25.0  # mol per decision step
    max_ballast_rate: float = 0.05  # kg per decision step

    def __post_init__(self):
        for name in ("payload_mass", "drag_coefficient", "m_he", "m_air", "max_vent_rate", "max_ballast_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.initial_sand < 0:
            raise ValueError("initial_sand must be >= 0")
        if self.initial_helium is None:
            rho0 = SEA_LEVEL_PRESSURE * self.m_air / (R_GAS * SEA_LEVEL_TEMPERATURE)
            n, ok = _vent_root(
                self.free_lift_ascent, SEA_LEVEL_TEMPERATURE, SEA_LEVEL_PRESSURE, rho0,
                self.payload_mass + self.initial_sand, 1e4, self.drag_coefficient, self.m_he,
            )
            if not ok:
                raise ValueError("could not size initial helium for the requested free lift")
            object.__setattr__(self, "initial_helium", float(n))
        if not self.initial_helium > 0:
            raise ValueError("initial_helium must be positive")
        if self.burst_volume is None:
            from .atmosphere import properties_at

            air = properties_at(AtmosphereModel.standard(), self.burst_altitude)
            object.__setattr__(
                self, "burst_volume", envelope_volume(self.initial_helium, air.temperature, air.pressure)
            )
        if not self.burst_volume > 0:
            raise ValueError("burst_volume must be positive")

    @property
    def kernel_args(self) -> np.ndarray:
        return np.array([self.payload_mass, self.drag_coefficient, self.m_he, self.burst_volume])


@dataclass(frozen=True)
class BalloonState:
    x: float  # km, east of target
    y: float  # km, north of target
    h: float  # m
    h_dot: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    n_h: float = 0.0  # mol helium
    m_s: float = 0.0  # kg sand
    t: float = 0.0  # s since the wind grid time origin

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.h, self.vx, self.vy, self.h_dot, self.n_h, self.m_s, self.t])

    @classmethod
    def from_array(cls, a) -> "BalloonState":
        return cls(
            x=float(a[IX]), y=float(a[IY]), h=float(a[IH]), h_dot=float(a[IHD]),
            vx=float(a[IVX]), vy=float(a[IVY]), n_h=float(a[INH]), m_s=float(a[IMS]), t=float(a[IT]),
        )

    def total_mass(self, params: BalloonParams) -> float:
        return params.payload_mass + self.n_h * params.m_he + self.m_s


@dataclass(frozen=True)
class EnvelopeGeometry:
    volume: float
    drag_area: float


def envelope_volume(n_h: float, T: float, P: float) -> float:
    if not T > 0:
        raise DomainError(f"temperature must be positive, got {T!r}")
    if not P > 0:
        raise DomainError(f"pressure must be positive, got {P!r}")
    if n_h < 0:
        raise DomainError(f"helium mols must be >= 0, got {n_h!r}")
    return n_h * R_GAS * T / P


def drag_area(V: float) -> float:
    if V < 0:
        raise DomainError(f"volume must be >= 0, got {V!r}")
    return math.pi * (3.0 * V / (4.0 * math.pi)) ** (2.0 / 3.0)


def envelope_geometry(n_h: float, air: AirProperties) -> EnvelopeGeometry:
    V = envelope_volume(n_h, air.temperature, air.pressure)
    return EnvelopeGeometry(V, drag_area(V))


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _accel(h_dot, vx, vy, n_h, m_s, u, v, T, P, rho, m_p, c_d, m_he):
    V = n_h * R_GAS * T / P
    A = math.pi * (3.0 * V / (4.0 * math.pi)) ** (2.0 / 3.0)
    m = m_p + n_h * m_he + m_s
    rx = vx - u
    ry = vy - v
    rz = h_dot
    speed = math.sqrt(rx * rx + ry * ry + rz * rz)
    k = 0.5 * rho * c_d * A * speed / m
    return -k * rx, -k * ry, (rho * V - m) * G0 / m - k * rz


@numba.njit(cache=True)
def _stiffness(y, T, P, rho, u, v, m_p, c_d, m_he):
    """Upper estimate of the linearised drag relaxation rate (1/s)."""
    n_h = y[INH]
    V = n_h * R_GAS * T / P
    A = math.pi * (3.0 * V / (4.0 * math.pi)) ** (2.0 / 3.0)
    m = m_p + n_h * m_he + y[IMS]
    k = 0.5 * rho * c_d * A
    rx = y[IVX] - u
    ry = y[IVY] - v
    vr = math.sqrt(rx * rx + ry * ry + y[IHD] * y[IHD])
    f_net = abs(rho * V - m) * G0
    return (2.0 * k * (vr + 1.0) + 2.0 * math.sqrt(k * f_net)) / m


@numba.njit(cache=True)
def _deriv(y, atm_alt, atm_t, atm_l, atm_p, h_max, wu, wv, levels, wseed, wfp, bp, out):
    """Fill ``out`` with d/dt of (x, y, h, vx, vy, h_dot); returns (error_axis, clamped)."""
    h = min(max(y[IH], 0.0), h_max)
    T, P, rho = _air(h, atm_alt, atm_t, atm_l, atm_p)
    u, v, err, clamped = _wind_at(wu, wv, levels, wseed, wfp, y[IX], y[IY], P, y[IT] / 3600.0)
    if err != 0:
        return err, clamped
    ax, ay, az = _accel(y[IHD], y[IVX], y[IVY], y[INH], y[IMS], u, v, T, P, rho, bp[0], bp[1], bp[2])
    out[IX] = y[IVX] / 1000.0
    out[IY] = y[IVY] / 1000.0
    out[IH] = y[IHD]
    out[IVX] = ax
    out[IVY] = ay
    out[IHD] = az
    return 0, clamped


@numba.njit(cache=True)
def _rk4(y, dt, atm_alt, atm_t, atm_l, atm_p, h_max, wu, wv, levels, wseed, wfp, bp):
    """Advance ``y`` in place by ``dt`` seconds. Returns (error_axis, n_clamped)."""
    h = min(max(y[IH], 0.0), h_max)
    T, P, rho = _air(h, atm_alt, atm_t, atm_l, atm_p)
    u, v, err, _ = _wind_at(wu, wv, levels, wseed, wfp, y[IX], y[IY], P, y[IT] / 3600.0)
    if err != 0:
        return err, 0
    lam = _stiffness(y, T, P, rho, u, v, bp[0], bp[1], bp[2])
    n = int(math.ceil(dt * lam / _STIFF_LIMIT))
    if n < 1:
        n = 1
    if n > _MAX_MICRO:
        n = _MAX_MICRO
    hstep = dt / n
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    tmp = y.copy()
    clamps = 0
    t0 = y[IT]
    for s in range(n):
        ts = t0 + s * hstep
        y[IT] = ts
        err, c = _deriv(y, atm_alt, atm_t, atm_l, atm_p, h_max, wu, wv, levels, wseed, wfp, bp, k1)
        clamps += c
        if err:
            return err, clamps
        for i in range(6):
            tmp[i] = y[i] + 0.5 * hstep * k1[i]
        tmp[IT] = ts + 0.5 * hstep
        err, c = _deriv(tmp, atm_alt, atm_t, atm_l, atm_p, h_max, wu, wv, levels, wseed, wfp, bp, k2)
        clamps += c
        if err:
            return err, clamps
        for i in range(6):
            tmp[i] = y[i] + 0.5 * hstep * k2[i]
        err, c = _deriv(tmp, atm_alt, atm_t, atm_l, atm_p, h_max, wu, wv, levels, wseed, wfp, bp, k3)
        clamps += c
        if err:
            return err, clamps
        for i in range(6):
            tmp[i] = y[i] + hstep * k3[i]
        tmp[IT] = ts + hstep
        err, c = _deriv(tmp, atm_alt, atm_t, atm_l, atm_p, h_max, wu, wv, levels, wseed, wfp, bp, k4)
        clamps += c
        if err:
            return err, clamps
        for i in range(6):
            y[i] += hstep / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    y[IT] = t0 + dt
    return 0, clamps


@numba.njit(cache=True)
def _vent_residual(n, h_dot_d, T, P, rho, m_rest, c_d, m_he):
    return (
        G0 * (rho * R_GAS * T / P - m_he) * n
        - 0.5 * rho * abs(h_dot_d) * h_dot_d * c_d * math.pi
        * (3.0 * R_GAS * T / (4.0 * math.pi * P)) ** (2.0 / 3.0) * n ** (2.0 / 3.0)
        - m_rest * G0
    )


@numba.njit(cache=True)
def _vent_root(h_dot_d, T, P, rho, m_rest, n_hi, c_d, m_he):
    """Root of the steady-ascent force balance in helium mols; returns (n, found).

    Brackets on (0, n_hi], widening upward if the root lies above ``n_hi``.
    """
    tol = 1e-9 * m_rest * G0  # three decades inside the contract
    lo = 0.0
    hi = n_hi
    f_hi = _vent_residual(hi, h_dot_d, T, P, rho, m_rest, c_d, m_he)
    grow = 0
    while f_hi < 0.0:
        lo = hi
        hi *= 2.0
        grow += 1
        if grow > 60 or not math.isfinite(hi):
            return np.nan, False
        f_hi = _vent_residual(hi, h_dot_d, T, P, rho, m_rest, c_d, m_he)
    if abs(f_hi) <= tol:
        return hi, True
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        f_mid = _vent_residual(mid, h_dot_d, T, P, rho, m_rest, c_d, m_he)
        if abs(f_mid) <= tol:
            return mid, True
        if f_mid < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    mid = 0.5 * (lo + hi)
    return mid, abs(_vent_residual(mid, h_dot_d, T, P, rho, m_rest, c_d, m_he)) <= tol


@numba.njit(cache=True)
def _ballast_calc(h_dot_d, n_h, T, P, rho, m_p, c_d, m_he):
    V = n_h * R_GAS * T / P
    A = math.pi * (3.0 * V / (4.0 * math.pi)) ** (2.0 / 3.0)
    return rho * V - rho * c_d * A * abs(h_dot_d) * h_dot_d / (2.0 * G0) - m_p - n_h * m_he


# ---------------------------------------------------------------- public API


def acceleration(state: BalloonState, wind: WindVector, air: AirProperties, params: BalloonParams) -> tuple:
    """Acceleration (ax, ay, az) in m/s^2; vertical wind is taken as zero."""
    return tuple(
        float(a)
        for a in _accel(
            state.h_dot, state.vx, state.vy, state.n_h, state.m_s, wind[0], wind[1],
            air.temperature, air.pressure, air.density,
            params.payload_mass, params.drag_coefficient, params.m_he,
        )
    )


def integrate_step(
    state: BalloonState, windfield: WindField, atmosphere: AtmosphereModel, params: BalloonParams, dt: float
) -> BalloonState:
    """Advance ``dt`` seconds with classical RK4.

    The interval is split into equal RK4 micro-steps short enough for the
    quadratic drag (relaxation times are well under a second for a small
    latex envelope). Helium and sand are untouched.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    y = state.to_array()
    wu, wv, levels, wseed, wfp = windfield.kernel_params
    err, clamps = _rk4(y, float(dt), *atmosphere.arrays, atmosphere.max_altitude, wu, wv, levels, wseed, wfp, params.kernel_args)
    windfield.pressure_clamps += clamps
    if err:
        lon, lat = windfield.lonlat(y[IX], y[IY])
        _raise_bounds(windfield.grid, err, lon, lat, float("nan"), y[IT] / 3600.0)
    return BalloonState.from_array(y)


def ballast_for_ascent(h_dot_d: float, state: BalloonState, air: AirProperties, params: BalloonParams) -> float:
    """Sand mass (kg) at which the balloon's steady ascent rate equals ``h_dot_d``.

    May be negative when even dropping all sand cannot reach the target rate.
    """
    return float(
        _ballast_calc(
            h_dot_d, state.n_h, air.temperature, air.pressure, air.density,
            params.payload_mass, params.drag_coefficient, params.m_he,
        )
    )


def ballast_drop(m_s_calc: float, state: BalloonState, params: BalloonParams) -> float:
    """Sand to release this step: ``m_s - m_s_calc`` limited by the rate and by the sand on board."""
    drop = min(max(state.m_s - m_s_calc, 0.0), params.max_ballast_rate)
    return min(drop, state.m_s)


def vent_for_ascent(h_dot_d: float, state: BalloonState, air: AirProperties, params: BalloonParams) -> float:
    """Helium mols at which the steady ascent rate equals ``h_dot_d`` (bisection root).

    Returns NaN when no root exists; :func:`vent_amount` then saturates.
    """
    n, ok = _vent_root(
        h_dot_d, air.temperature, air.pressure, air.density,
        params.payload_mass + state.m_s, max(state.n_h, 1e-12), params.drag_coefficient, params.m_he,
    )
    if not ok:
        log.warning("vent solver found no root for target ascent %.3f m/s", h_dot_d)
        return float("nan")
    return float(n)


def vent_amount(n_calc: float, state: BalloonState, params: BalloonParams) -> float:
    """Helium to vent this step; saturates at the rate limit when ``n_calc`` is NaN."""
    if math.isnan(n_calc):
        return min(params.max_vent_rate, state.n_h)
    return min(max(state.n_h - n_calc, 0.0), params.max_vent_rate, state.n_h)


def neutral_helium(params: BalloonParams, m_s: float) -> float:
    """Mols at which buoyancy exactly balances the weight (altitude independent)."""
    return (params.payload_mass + m_s) / (params.m_air - params.m_he)


def with_resources(state: BalloonState, n_h: float, m_s: float) -> BalloonState:
    return replace(state, n_h=n_h, m_s=m_s)
