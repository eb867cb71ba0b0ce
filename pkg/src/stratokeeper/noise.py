"""Seeded 4-D lattice gradient noise.

Classic Perlin construction over (x, y, p, t) after dividing each coordinate by
its scale: a pseudo-random gradient from a fixed 32-vector table is hashed per
lattice corner, dotted with the offset to the query point, and blended with
the quintic fade curve. The result is zero on every lattice point, continuous,
deterministic in ``(seed, coordinates)`` and clipped to [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

# Edge midpoints of the 4-cube: one zero component, three +-1 components.
_GRAD4 = np.array(
    [
        [0, a, b, c] for a in (1, -1) for b in (1, -1) for c in (1, -1)
    ]
    + [[a, 0, b, c] for a in (1, -1) for b in (1, -1) for c in (1, -1)]
    + [[a, b, 0, c] for a in (1, -1) for b in (1, -1) for c in (1, -1)]
    + [[a, b, c, 0] for a in (1, -1) for b in (1, -1) for c in (1, -1)],
    dtype=np.float64,
)

# Raw extremes observed around +-1.1; the clip only catches rare outliers.
_NORM = 0.9

_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class NoiseSpec:
    seed: int = 0
    amplitude: float = 1.0  # m/s when used as a wind perturbation
    spatial_scale: float = 300.0  # km
    pressure_scale: float = 3000.0  # Pa
    time_scale: float = 12.0  # hours

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError(f"noise amplitude must be >= 0, got {self.amplitude!r}")
        for name in ("spatial_scale", "pressure_scale", "time_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"noise {name} must be > 0, got {getattr(self, name)!r}")

    @property
    def kernel_args(self):
        return (
            _seed_u64(self.seed),
            self.spatial_scale,
            self.pressure_scale,
            self.time_scale,
        )


def _seed_u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & _MASK64)


@numba.njit(cache=True)
def _mix(z):
    # splitmix64 finaliser
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _corner_hash(seed, i, j, k, l):
    h = _mix(seed + np.uint64(0x9E3779B97F4A7C15))
    h = _mix(h ^ np.uint64(i & 0xFFFFFFFF))
    h = _mix(h ^ (np.uint64(j & 0xFFFFFFFF) << np.uint64(32)))
    h = _mix(h ^ np.uint64(k & 0xFFFFFFFF))
    h = _mix(h ^ (np.uint64(l & 0xFFFFFFFF) << np.uint64(32)))
    return h


@numba.njit(cache=True)
def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


@numba.njit(cache=True)
def _noise4(seed, a, b, c, d):
    ia = math.floor(a)
    ib = math.floor(b)
    ic = math.floor(c)
    id_ = math.floor(d)
    fa = a - ia
    fb = b - ib
    fc = c - ic
    fd = d - id_
    wa = _fade(fa)
    wb = _fade(fb)
    wc = _fade(fc)
    wd = _fade(fd)
    ia = np.int64(ia)
    ib = np.int64(ib)
    ic = np.int64(ic)
    id_ = np.int64(id_)
    total = 0.0
    for corner in range(16):
        oa = corner & 1
        ob = (corner >> 1) & 1
        oc = (corner >> 2) & 1
        od = (corner >> 3) & 1
        g = _GRAD4[np.int64(_corner_hash(seed, ia + oa, ib + ob, ic + oc, id_ + od) & np.uint64(31))]
        dot = g[0] * (fa - oa) + g[1] * (fb - ob) + g[2] * (fc - oc) + g[3] * (fd - od)
        w = (wa if oa else 1.0 - wa) * (wb if ob else 1.0 - wb)
        w *= (wc if oc else 1.0 - wc) * (wd if od else 1.0 - wd)
        total += w * dot
    total *= _NORM
    if total > 1.0:
        return 1.0
    if total < -1.0:
        return -1.0
    return total


@numba.njit(cache=True)
def _gradient_noise(seed, spatial_scale, pressure_scale, time_scale, x_km, y_km, p, t):
    return _noise4(seed, x_km / spatial_scale, y_km / spatial_scale, p / pressure_scale, t / time_scale)


def gradient_noise(spec: NoiseSpec, x_km: float, y_km: float, p: float, t: float) -> float:
    """Noise value in [-1, 1] at tangent-plane ``(x_km, y_km)``, pressure ``p`` (Pa), time ``t`` (h)."""
    return float(_gradient_noise(*spec.kernel_args, float(x_km), float(y_km), float(p), float(t)))


@numba.njit(cache=True)
def _gradient_noise_many(seed, s_xy, s_p, s_t, x, y, p, t):
    out = np.empty(x.shape[0])
    for n in range(x.shape[0]):
        out[n] = _gradient_noise(seed, s_xy, s_p, s_t, x[n], y[n], p[n], t[n])
    return out


def gradient_noise_many(spec: NoiseSpec, x_km, y_km, p, t) -> np.ndarray:
    x, y, pp, tt = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (x_km, y_km, p, t))
    )
    flat = _gradient_noise_many(
        *spec.kernel_args, x.ravel().copy(), y.ravel().copy(), pp.ravel().copy(), tt.ravel().copy()
    )
    return flat.reshape(x.shape)
