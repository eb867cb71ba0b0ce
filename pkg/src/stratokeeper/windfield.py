"""4-D gridded wind field over (longitude, latitude, pressure, time).

Arrays are indexed ``[time, pressure, lat, lon]``. Longitude, latitude and time
axes are uniform; pressure levels are an explicit ascending list. Sampling is
quadrilinear over the 16 enclosing nodes and never clamps silently: only the
simulator path (:meth:`WindField.sample`) may clamp pressure, and it counts
every time it does.

Grid file layout (UTF-8 text)::

    WINDGRID 1
    axes lon0 lat0 dlon dlat nlon nlat t0 dt nt np
    plevels p1 ... pnp
    u v            # nt*np*nlat*nlon rows, time outermost, lon innermost
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numba
import numpy as np

from .errors import GridBoundsError, ParseError
from .noise import NoiseSpec, _gradient_noise, gradient_noise_many

KM_PER_DEG = 111.32
PRESSURE_RANGE = (2000.0, 17500.0)
_SNAP = 1e-9


class WindVector(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class GridAxes:
    lon_origin: float
    lat_origin: float
    pressure_levels: tuple
    n_lon: int
    n_lat: int
    n_time: int
    lon_step: float = 0.4
    lat_step: float = 0.4
    time_origin: float = 0.0
    time_step: float = 6.0

    def __post_init__(self):
        levels = tuple(float(p) for p in self.pressure_levels)
        object.__setattr__(self, "pressure_levels", levels)
        if len(levels) < 2:
            raise ValueError("need at least 2 pressure levels")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("pressure levels must be strictly ascending")
        lo, hi = PRESSURE_RANGE
        if levels[0] < lo or levels[-1] > hi:
            raise ValueError(f"pressure levels must lie within [{lo}, {hi}] Pa")
        for name in ("lon_step", "lat_step", "time_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("n_lon", "n_lat", "n_time"):
            if int(getattr(self, name)) < 2:
                raise ValueError(f"{name} must be >= 2")

    @property
    def n_pressure(self) -> int:
        return len(self.pressure_levels)

    @property
    def shape(self) -> tuple:
        return (self.n_time, self.n_pressure, self.n_lat, self.n_lon)

    @property
    def lons(self) -> np.ndarray:
        return self.lon_origin + self.lon_step * np.arange(self.n_lon)

    @property
    def lats(self) -> np.ndarray:
        return self.lat_origin + self.lat_step * np.arange(self.n_lat)

    @property
    def times(self) -> np.ndarray:
        return self.time_origin + self.time_step * np.arange(self.n_time)

    @property
    def center(self) -> tuple:
        return (
            self.lon_origin + 0.5 * self.lon_step * (self.n_lon - 1),
            self.lat_origin + 0.5 * self.lat_step * (self.n_lat - 1),
        )

    @classmethod
    def centered(
        cls,
        center_lon: float = 0.0,
        center_lat: float = 1.0,
        half_width_km: float = 2400.0,
        pressure_levels=(2000.0, 3500.0, 5000.0, 7000.0, 9000.0, 11000.0, 14000.0, 17500.0),
        hours: float = 72.0,
        lon_step: float = 0.4,
        lat_step: float = 0.4,
        time_step: float = 6.0,
    ) -> "GridAxes":
        """Axes covering at least ``half_width_km`` around a centre and ``hours`` of time."""
        half_lat = math.ceil(half_width_km / (KM_PER_DEG * lat_step))
        coslat = math.cos(math.radians(center_lat))
        half_lon = math.ceil(half_width_km / (KM_PER_DEG * coslat * lon_step))
        return cls(
            lon_origin=center_lon - half_lon * lon_step,
            lat_origin=center_lat - half_lat * lat_step,
            lon_step=lon_step,
            lat_step=lat_step,
            pressure_levels=tuple(pressure_levels),
            time_origin=0.0,
            time_step=time_step,
            n_lon=2 * half_lon + 1,
            n_lat=2 * half_lat + 1,
            n_time=math.ceil(hours / time_step) + 1,
        )


@dataclass(frozen=True, eq=False)
class WindGrid:
    axes: GridAxes
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        if u.shape != self.axes.shape or v.shape != self.axes.shape:
            raise ValueError(f"wind arrays {u.shape}/{v.shape} do not match axes {self.axes.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("wind components must be finite")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def __eq__(self, other):
        if not isinstance(other, WindGrid):
            return NotImplemented
        return (
            self.axes == other.axes
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
        )

    @property
    def geometry(self) -> np.ndarray:
        a = self.axes
        return np.array([a.lon_origin, a.lon_step, a.lat_origin, a.lat_step, a.time_origin, a.time_step])

    @property
    def levels(self) -> np.ndarray:
        return np.array(self.axes.pressure_levels)


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _locate_uniform(x, x0, step, n):
    f = (x - x0) / step
    if not (f >= -_SNAP and f <= n - 1 + _SNAP):
        return -1, 0.0
    r = round(f)
    if abs(f - r) < _SNAP:
        f = r
    i = int(math.floor(f))
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    return i, f - i


@numba.njit(cache=True)
def _locate_levels(p, levels):
    n = levels.shape[0]
    span = levels[n - 1] - levels[0]
    if not (p >= levels[0] - _SNAP * span and p <= levels[n - 1] + _SNAP * span):
        return -1, 0.0
    i = 0
    while i < n - 2 and p >= levels[i + 1]:
        i += 1
    frac = (p - levels[i]) / (levels[i + 1] - levels[i])
    if abs(frac) < _SNAP:
        frac = 0.0
    elif abs(frac - 1.0) < _SNAP:
        frac = 1.0
    if frac < 0.0:
        frac = 0.0
    return i, frac


@numba.njit(cache=True)
def _quadrilinear(u, v, geom, levels, lon, lat, p, t, clamp_p):
    """Return (u, v, error_axis, clamped); error_axis 0 means in bounds."""
    nt, npl, nlat, nlon = u.shape
    clamped = False
    if clamp_p:
        if p < levels[0]:
            p = levels[0]
            clamped = True
        elif p > levels[npl - 1]:
            p = levels[npl - 1]
            clamped = True
    ilon, flon = _locate_uniform(lon, geom[0], geom[1], nlon)
    if ilon < 0:
        return 0.0, 0.0, 1, clamped
    ilat, flat = _locate_uniform(lat, geom[2], geom[3], nlat)
    if ilat < 0:
        return 0.0, 0.0, 2, clamped
    ip, fp = _locate_levels(p, levels)
    if ip < 0:
        return 0.0, 0.0, 3, clamped
    it, ft = _locate_uniform(t, geom[4], geom[5], nt)
    if it < 0:
        return 0.0, 0.0, 4, clamped
    su = 0.0
    sv = 0.0
    for c in range(16):
        a = c & 1
        b = (c >> 1) & 1
        d = (c >> 2) & 1
        e = (c >> 3) & 1
        w = (flon if a else 1.0 - flon) * (flat if b else 1.0 - flat)
        w *= (fp if d else 1.0 - fp) * (ft if e else 1.0 - ft)
        if w != 0.0:
            su += w * u[it + e, ip + d, ilat + b, ilon + a]
            sv += w * v[it + e, ip + d, ilat + b, ilon + a]
    return su, sv, 0, clamped


@numba.njit(cache=True)
def _tangent_xy(lon, lat, c_lon, c_lat):
    return (
        (lon - c_lon) * KM_PER_DEG * math.cos(c_lat * math.pi / 180.0),
        (lat - c_lat) * KM_PER_DEG,
    )


@numba.njit(cache=True)
def _perturbed(u, v, geom, levels, nseed, namp, s_xy, s_p, s_t, c_lon, c_lat, lon, lat, p, t, clamp_p):
    uu, vv, err, clamped = _quadrilinear(u, v, geom, levels, lon, lat, p, t, clamp_p)
    if err != 0 or namp == 0.0:
        return uu, vv, err, clamped
    if clamp_p:
        p = min(max(p, levels[0]), levels[levels.shape[0] - 1])
    x, y = _tangent_xy(lon, lat, c_lon, c_lat)
    uu += namp * _gradient_noise(nseed, s_xy, s_p, s_t, x, y, p, t)
    vv += namp * _gradient_noise(nseed ^ np.uint64(1), s_xy, s_p, s_t, x, y, p, t)
    return uu, vv, err, clamped


def _raise_bounds(grid: WindGrid, err: int, lon, lat, p, t):
    a = grid.axes
    if err == 1:
        raise GridBoundsError("longitude", float(lon), float(a.lons[0]), float(a.lons[-1]))
    if err == 2:
        raise GridBoundsError("latitude", float(lat), float(a.lats[0]), float(a.lats[-1]))
    if err == 3:
        raise GridBoundsError("pressure", float(p), a.pressure_levels[0], a.pressure_levels[-1])
    raise GridBoundsError("time", float(t), float(a.times[0]), float(a.times[-1]))


def quadrilinear_sample(grid: WindGrid, lon: float, lat: float, p: float, t: float) -> WindVector:
    """Multilinear wind at (lon deg, lat deg, p Pa, t hours); raises on any out-of-range axis."""
    uu, vv, err, _ = _quadrilinear(
        grid.u, grid.v, grid.geometry, grid.levels, float(lon), float(lat), float(p), float(t), False
    )
    if err:
        _raise_bounds(grid, err, lon, lat, p, t)
    return WindVector(uu, vv)


def perturbed_sample(
    grid: WindGrid, noise: NoiseSpec, lon: float, lat: float, p: float, t: float, center=None
) -> WindVector:
    """Grid wind plus ``amplitude`` times gradient noise (seed for u, seed^1 for v).

    Noise coordinates are tangent-plane km about ``center`` (default: grid centre).
    """
    c_lon, c_lat = grid.axes.center if center is None else center
    seed, s_xy, s_p, s_t = noise.kernel_args
    uu, vv, err, _ = _perturbed(
        grid.u, grid.v, grid.geometry, grid.levels, seed, float(noise.amplitude), s_xy, s_p, s_t,
        float(c_lon), float(c_lat), float(lon), float(lat), float(p), float(t), False,
    )
    if err:
        _raise_bounds(grid, err, lon, lat, p, t)
    return WindVector(uu, vv)


@dataclass
class WindField:
    """Grid plus forecast-error perturbation and the station target location.

    Positions are tangent-plane km relative to the target. This is what the
    environment samples; pressure queries outside the grid levels are clamped
    and counted in ``pressure_clamps``.
    """

    grid: WindGrid
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec(amplitude=0.0))
    target: tuple | None = None
    pressure_clamps: int = 0

    def __post_init__(self):
        if self.target is None:
            self.target = self.grid.axes.center

    def lonlat(self, x_km: float, y_km: float) -> tuple:
        t_lon, t_lat = self.target
        return (
            t_lon + x_km / (KM_PER_DEG * math.cos(math.radians(t_lat))),
            t_lat + y_km / KM_PER_DEG,
        )

    @property
    def kernel_params(self) -> tuple:
        """``(u, v, levels, seed, fparams)`` packed for compiled callers."""
        seed, s_xy, s_p, s_t = self.noise.kernel_args
        c_lon, c_lat = self.grid.axes.center
        t_lon, t_lat = self.target
        g = self.grid.geometry
        fparams = np.concatenate(
            [g, [float(self.noise.amplitude), s_xy, s_p, s_t, c_lon, c_lat, t_lon, t_lat]]
        )
        return self.grid.u, self.grid.v, self.grid.levels, seed, fparams

    def sample(self, x_km: float, y_km: float, p: float, t_hours: float) -> WindVector:
        u, v, levels, seed, fp = self.kernel_params
        uu, vv, err, clamped = _wind_at(u, v, levels, seed, fp, float(x_km), float(y_km), float(p), float(t_hours))
        if clamped:
            self.pressure_clamps += 1
        if err:
            lon, lat = self.lonlat(x_km, y_km)
            _raise_bounds(self.grid, err, lon, lat, p, t_hours)
        return WindVector(uu, vv)


@numba.njit(cache=True)
def _wind_at(u, v, levels, seed, fp, x_km, y_km, p, t_hours):
    """Perturbed wind at target-relative km with pressure clamping."""
    t_lat = fp[13]
    lon = fp[12] + x_km / (KM_PER_DEG * math.cos(t_lat * math.pi / 180.0))
    lat = t_lat + y_km / KM_PER_DEG
    return _perturbed(
        u, v, fp[:6], levels, seed, fp[6], fp[7], fp[8], fp[9], fp[10], fp[11], lon, lat, p, t_hours, True
    )


# ---------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class SyntheticWindSpec:
    """Seeded stand-in for a reanalysis day.

    Direction (compass bearing the wind blows toward) rotates linearly with
    pressure and time; speed is modulated by ``noise.amplitude`` times gradient
    noise, clipped to [-1, 1], with a 30% depth.
    """

    seed: int = 0
    base_speed: float = 6.0
    direction_twist: float = 2.0 * math.pi * 0.9 / 15500.0  # rad/Pa
    time_drift: float = 0.02  # rad/h
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec(amplitude=1.0, spatial_scale=500.0))

    def __post_init__(self):
        if self.base_speed < 0:
            raise ValueError("base_speed must be >= 0")


def synthesize_grid(spec: SyntheticWindSpec, axes: GridAxes) -> WindGrid:
    rng = np.random.default_rng(int(spec.seed) & 0xFFFFFFFFFFFFFFFF)
    theta0 = rng.uniform(0.0, 2.0 * math.pi)
    levels = np.array(axes.pressure_levels)
    p_mid = 0.5 * (levels[0] + levels[-1])
    t_rel = axes.time_step * np.arange(axes.n_time)
    c_lon, c_lat = axes.center
    x = (axes.lons - c_lon) * KM_PER_DEG * math.cos(math.radians(c_lat))
    y = (axes.lats - c_lat) * KM_PER_DEG
    T, P, Y, X = np.meshgrid(axes.times, levels, y, x, indexing="ij")
    n = gradient_noise_many(spec.noise, X, Y, P, T)
    n = np.clip(spec.noise.amplitude * n, -1.0, 1.0)
    speed = spec.base_speed * (1.0 + 0.3 * n)
    theta = theta0 + spec.direction_twist * (levels - p_mid)[None, :] + spec.time_drift * t_rel[:, None]
    theta = theta[:, :, None, None]
    return WindGrid(axes, speed * np.sin(theta), speed * np.cos(theta))


# ---------------------------------------------------------------- file IO

_MAGIC = "WINDGRID 1"


def write_grid(grid: WindGrid, path) -> None:
    a = grid.axes
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(_MAGIC + "\n")
        f.write(
            "axes "
            + " ".join(
                _fmt(x)
                for x in (a.lon_origin, a.lat_origin, a.lon_step, a.lat_step)
            )
            + f" {a.n_lon} {a.n_lat} {_fmt(a.time_origin)} {_fmt(a.time_step)} {a.n_time} {a.n_pressure}\n"
        )
        f.write("plevels " + " ".join(_fmt(p) for p in a.pressure_levels) + "\n")
        np.savetxt(f, np.column_stack([grid.u.ravel(), grid.v.ravel()]), fmt="%.17g")


def _fmt(x: float) -> str:
    return "%.17g" % x


def read_grid(path) -> WindGrid:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header", line=1)
    if lines[0].strip() != _MAGIC:
        raise ParseError(f"bad magic {lines[0].strip()!r}, expected {_MAGIC!r}", line=1)
    if len(lines) < 3:
        raise ParseError("missing axes/plevels header lines", line=len(lines) + 1)
    tok = lines[1].split()
    if len(tok) != 11 or tok[0] != "axes":
        raise ParseError("axes line must be 'axes lon0 lat0 dlon dlat nlon nlat t0 dt nt np'", line=2)
    try:
        lon0, lat0, dlon, dlat = (float(x) for x in tok[1:5])
        nlon, nlat = int(tok[5]), int(tok[6])
        t0, dt = float(tok[7]), float(tok[8])
        nt, npl = int(tok[9]), int(tok[10])
    except ValueError as exc:
        raise ParseError(f"malformed axes line: {exc}", line=2) from None
    ptok = lines[2].split()
    if not ptok or ptok[0] != "plevels":
        raise ParseError("expected 'plevels' line", line=3)
    if len(ptok) - 1 != npl:
        raise ParseError(f"header declares {npl} pressure levels but {len(ptok) - 1} provided", line=3)
    try:
        levels = tuple(float(x) for x in ptok[1:])
    except ValueError as exc:
        raise ParseError(f"malformed pressure level: {exc}", line=3) from None
    try:
        axes = GridAxes(lon0, lat0, levels, nlon, nlat, nt, dlon, dlat, t0, dt)
    except ValueError as exc:
        raise ParseError(str(exc), line=2) from None

    body = lines[3:]
    while body and not body[-1].strip():
        body.pop()
    expected = nt * npl * nlat * nlon
    if len(body) != expected:
        raise ParseError(
            f"expected {expected} value rows for declared axes, found {len(body)}",
            line=3 + min(len(body), expected) + 1,
        )
    data = np.empty((expected, 2))
    for k, line in enumerate(body):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 2 values 'u v', found {len(parts)}", line=k + 4)
        try:
            data[k, 0] = float(parts[0])
            data[k, 1] = float(parts[1])
        except ValueError:
            raise ParseError(f"non-numeric value in {line!r}", line=k + 4) from None
    bad = np.flatnonzero(~np.isfinite(data).all(axis=1))
    if bad.size:
        raise ParseError("non-finite wind value", line=int(bad[0]) + 4)
    return WindGrid(axes, data[:, 0].reshape(axes.shape), data[:, 1].reshape(axes.shape))
