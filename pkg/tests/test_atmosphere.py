import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stratokeeper.atmosphere import (
    G0,
    M_AIR,
    R_GAS,
    AtmosphereModel,
    altitude_at_pressure,
    density_at,
    pressure_at,
    properties_at,
    sample_lapse_scale,
    temperature_at,
)
from stratokeeper.errors import AltitudeRangeError

STD = AtmosphereModel.standard()
altitudes = st.floats(0.0, 47000.0, allow_nan=False)
scales = st.floats(0.95, 1.05)


def barometric_11km():
    # Independent gradient-layer formula from sea level.
    t0, lapse = 288.15, -0.0065
    t = t0 + lapse * 11000.0
    return 101325.0 * (t / t0) ** (-G0 * M_AIR / (R_GAS * lapse))


def test_sea_level_constants():
    assert temperature_at(STD, 0.0) == 288.15
    assert pressure_at(STD, 0.0) == 101325.0
    assert density_at(STD, 0.0) == pytest.approx(1.2250, rel=1e-3)


def test_tropopause():
    assert temperature_at(STD, 11000.0) == 216.65
    assert pressure_at(STD, 11000.0) == pytest.approx(22632.0, rel=5e-3)
    assert pressure_at(STD, 11000.0) == pytest.approx(barometric_11km(), rel=1e-12)
    assert density_at(STD, 11000.0) == pytest.approx(0.3639, rel=5e-3)


def test_layer_base_identity():
    for layer in STD.layers:
        if layer.base_altitude > STD.max_altitude:
            continue
        assert temperature_at(STD, layer.base_altitude) == layer.base_temperature
        assert pressure_at(STD, layer.base_altitude) == layer.base_pressure


@pytest.mark.parametrize("h", [-1.0, -1e-9, 47000.001, 1e6, float("nan")])
def test_out_of_range_names_bound(h):
    with pytest.raises(AltitudeRangeError) as info:
        temperature_at(STD, h)
    assert info.value.bound in ("lower", "upper")
    if h == h and h > 0:
        assert "upper" in str(info.value)


@given(scales)
def test_layers_ascending_and_continuous(scale):
    m = AtmosphereModel.standard(scale)
    bases = [l.base_altitude for l in m.layers]
    assert all(b > a for a, b in zip(bases, bases[1:]))
    for prev, nxt in zip(m.layers, m.layers[1:]):
        lo = AtmosphereModel((prev,), max_altitude=1e5)
        assert pressure_at(lo, nxt.base_altitude) == pytest.approx(nxt.base_pressure, rel=1e-9)


@given(scales, st.sampled_from([11000.0, 20000.0, 32000.0, 47000.0 - 1.0]))
def test_temperature_continuous_at_boundaries(scale, h):
    # A 2e-6 m span already moves T by up to 1.4e-8 K along the lapse, so
    # the jump is measured after removing the slope contribution.
    m = AtmosphereModel.standard(scale)
    eps = 1e-6
    slope = max(abs(l.lapse_rate) for l in m.layers)
    assert abs(temperature_at(m, h - eps) - temperature_at(m, h + eps)) <= 1e-9 + 2 * eps * slope
    for prev, nxt in zip(m.layers, m.layers[1:]):
        left = prev.base_temperature + (nxt.base_altitude - prev.base_altitude) * prev.lapse_rate
        assert left == pytest.approx(nxt.base_temperature, abs=1e-9)


@given(scales, altitudes)
def test_ideal_gas_density(scale, h):
    m = AtmosphereModel.standard(scale)
    a = properties_at(m, h)
    assert a.temperature > 0 and a.pressure > 0 and a.density > 0
    assert a.density == pytest.approx(a.pressure * M_AIR / (R_GAS * a.temperature), rel=1e-15)
    assert a.temperature == temperature_at(m, h)


@given(scales, st.lists(altitudes, min_size=2, max_size=2, unique=True))
def test_pressure_strictly_decreasing(scale, hs):
    lo, hi = sorted(hs)
    m = AtmosphereModel.standard(scale)
    if hi - lo > 1e-6:
        assert pressure_at(m, hi) < pressure_at(m, lo)


def test_density_decreasing_to_20km():
    hs = np.linspace(0.0, 20000.0, 401)
    rho = [density_at(STD, h) for h in hs]
    assert all(b < a for a, b in zip(rho, rho[1:]))


@given(scales, st.floats(0.0, 46000.0))
def test_altitude_at_pressure_inverts(scale, h):
    m = AtmosphereModel.standard(scale)
    assert altitude_at_pressure(m, pressure_at(m, h)) == pytest.approx(h, abs=1e-6)


def test_lapse_scale_sampling():
    rng = np.random.default_rng(0)
    draws = [sample_lapse_scale(rng) for _ in range(500)]
    assert min(draws) >= 0.95 and max(draws) <= 1.05
    assert sample_lapse_scale(rng, 1.0, 1.0) == 1.0
    assert math.isclose(np.mean(draws), 1.0, abs_tol=0.01)
