"""US Standard Atmosphere 1976 layer model.

Geometric altitude is used throughout (no geopotential correction). Layer base
pressures are carried down from sea level with the barometric relations, so the
table is continuous by construction. An optional multiplicative ``lapse_scale``
perturbs every lapse rate for per-episode randomisation; base temperatures are
then re-derived instead of taken from the table.

The underscore kernels take plain arrays so the simulator can call them from
compiled code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import AltitudeRangeError

G0 = 9.80665  # m/s^2
R_GAS = 8.31446  # J/(mol K)
M_AIR = 0.0289644  # kg/mol

SEA_LEVEL_TEMPERATURE = 288.15
SEA_LEVEL_PRESSURE = 101325.0
MAX_ALTITUDE = 47000.0

# (base altitude m, lapse rate K/m, tabulated base temperature K)
US1976_LAYERS = (
    (0.0, -0.0065, 288.15),
    (11000.0, 0.0, 216.65),
    (20000.0, 0.001, 216.65),
    (32000.0, 0.0028, 228.65),
    (47000.0, 0.0, 270.65),
    (51000.0, -0.0028, 270.65),
    (71000.0, -0.002, 214.65),
)


@dataclass(frozen=True)
class AtmosphereLayer:
    base_altitude: float
    base_temperature: float
    lapse_rate: float
    base_pressure: float


@dataclass(frozen=True)
class AirProperties:
    temperature: float
    pressure: float
    density: float


@numba.njit(cache=True)
def _layer_index(h, base_alt):
    i = 0
    for k in range(1, base_alt.shape[0]):
        if h >= base_alt[k]:
            i = k
        else:
            break
    return i


@numba.njit(cache=True)
def _pressure_in_layer(h, hb, tb, lapse, pb):
    if lapse == 0.0:
        return pb * math.exp(-G0 * M_AIR * (h - hb) / (R_GAS * tb))
    t = tb + (h - hb) * lapse
    return pb * (t / tb) ** (-G0 * M_AIR / (R_GAS * lapse))


@numba.njit(cache=True)
def _temperature(h, base_alt, base_t, lapse):
    i = _layer_index(h, base_alt)
    return base_t[i] + (h - base_alt[i]) * lapse[i]


@numba.njit(cache=True)
def _pressure(h, base_alt, base_t, lapse, base_p):
    i = _layer_index(h, base_alt)
    return _pressure_in_layer(h, base_alt[i], base_t[i], lapse[i], base_p[i])


@numba.njit(cache=True)
def _air(h, base_alt, base_t, lapse, base_p):
    """Return (T, P, rho) at altitude ``h``."""
    i = _layer_index(h, base_alt)
    t = base_t[i] + (h - base_alt[i]) * lapse[i]
    p = _pressure_in_layer(h, base_alt[i], base_t[i], lapse[i], base_p[i])
    return t, p, p * M_AIR / (R_GAS * t)


@numba.njit(cache=True)
def _altitude_at_pressure(p, base_alt, base_t, lapse, base_p):
    i = 0
    for k in range(1, base_p.shape[0]):
        if p <= base_p[k]:
            i = k
        else:
            break
    hb, tb, lr, pb = base_alt[i], base_t[i], lapse[i], base_p[i]
    if lr == 0.0:
        return hb - R_GAS * tb * math.log(p / pb) / (G0 * M_AIR)
    t = tb * (p / pb) ** (-R_GAS * lr / (G0 * M_AIR))
    return hb + (t - tb) / lr


@dataclass(frozen=True)
class AtmosphereModel:
    """Immutable layered atmosphere.

    Build with :meth:`standard`; ``layers`` are sorted by base altitude.
    """

    layers: tuple[AtmosphereLayer, ...]
    lapse_scale: float = 1.0
    max_altitude: float = MAX_ALTITUDE
    arrays: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        base_alt = np.array([l.base_altitude for l in self.layers], dtype=float)
        if np.any(np.diff(base_alt) <= 0):
            raise ValueError("layers must be strictly ascending in base altitude")
        object.__setattr__(
            self,
            "arrays",
            (
                base_alt,
                np.array([l.base_temperature for l in self.layers], dtype=float),
                np.array([l.lapse_rate for l in self.layers], dtype=float),
                np.array([l.base_pressure for l in self.layers], dtype=float),
            ),
        )

    @classmethod
    def standard(cls, lapse_scale: float = 1.0) -> "AtmosphereModel":
        layers = []
        t, p = SEA_LEVEL_TEMPERATURE, SEA_LEVEL_PRESSURE
        for i, (hb, lapse, t_table) in enumerate(US1976_LAYERS):
            lapse = lapse * lapse_scale
            if i > 0:
                prev = layers[-1]
                if lapse_scale == 1.0:
                    t = t_table
                else:
                    t = prev.base_temperature + (hb - prev.base_altitude) * prev.lapse_rate
                p = _pressure_in_layer(
                    hb, prev.base_altitude, prev.base_temperature, prev.lapse_rate,
                    prev.base_pressure,
                )
            layers.append(AtmosphereLayer(hb, t, lapse, p))
        return cls(tuple(layers), lapse_scale=lapse_scale)

    def _check(self, h: float) -> float:
        h = float(h)
        if not h >= 0.0:
            raise AltitudeRangeError(h, "lower", 0.0)
        if h > self.max_altitude:
            raise AltitudeRangeError(h, "upper", self.max_altitude)
        return h


def sample_lapse_scale(rng: np.random.Generator, lo: float = 0.95, hi: float = 1.05) -> float:
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))


def temperature_at(model: AtmosphereModel, h: float) -> float:
    h = model._check(h)
    base_alt, base_t, lapse, _ = model.arrays
    return float(_temperature(h, base_alt, base_t, lapse))


def pressure_at(model: AtmosphereModel, h: float) -> float:
    h = model._check(h)
    return float(_pressure(h, *model.arrays))


def density_at(model: AtmosphereModel, h: float) -> float:
    return properties_at(model, h).density


def properties_at(model: AtmosphereModel, h: float) -> AirProperties:
    h = model._check(h)
    t, p, rho = _air(h, *model.arrays)
    return AirProperties(float(t), float(p), float(rho))


def altitude_at_pressure(model: AtmosphereModel, p: float) -> float:
    """Invert :func:`pressure_at`; ``p`` must correspond to an altitude in range."""
    if not p > 0:
        raise ValueError(f"pressure must be positive, got {p!r}")
    h = float(_altitude_at_pressure(float(p), *model.arrays))
    return model._check(h)
