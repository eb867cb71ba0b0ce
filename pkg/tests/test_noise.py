import numpy as np
import pytest
from hypothesis import given, strategies as st

from stratokeeper.noise import NoiseSpec, gradient_noise, gradient_noise_many

seeds = st.integers(0, 2**63 - 1)
coords = st.floats(-1e4, 1e4, allow_nan=False)


@given(seeds, st.integers(-50, 50), st.integers(-50, 50), st.integers(0, 10), st.integers(0, 10))
def test_zero_at_lattice(seed, i, j, k, l):
    spec = NoiseSpec(seed=seed)
    x, y = i * spec.spatial_scale, j * spec.spatial_scale
    p, t = k * spec.pressure_scale, l * spec.time_scale
    assert gradient_noise(spec, x, y, p, t) == 0.0


@given(seeds, coords, coords, st.floats(0, 20000), st.floats(0, 100))
def test_deterministic_and_bounded(seed, x, y, p, t):
    spec = NoiseSpec(seed=seed)
    a = gradient_noise(spec, x, y, p, t)
    assert a == gradient_noise(spec, x, y, p, t)
    assert -1.0 <= a <= 1.0


@given(seeds, coords, coords, st.floats(0, 20000), st.floats(0, 100))
def test_continuous(seed, x, y, p, t):
    spec = NoiseSpec(seed=seed)
    a = gradient_noise(spec, x, y, p, t)
    b = gradient_noise(spec, x + 1e-6, y, p, t + 1e-9)
    assert abs(a - b) < 1e-6


def test_sample_statistics():
    rng = np.random.default_rng(42)
    n = 100_000
    vals = gradient_noise_many(
        NoiseSpec(seed=7),
        rng.uniform(-3000, 3000, n),
        rng.uniform(-3000, 3000, n),
        rng.uniform(2000, 17500, n),
        rng.uniform(0, 96, n),
    )
    assert vals.min() >= -1.0 and vals.max() <= 1.0
    assert abs(vals.mean()) < 0.02
    assert vals.std() > 0.1


def test_vectorised_matches_scalar():
    spec = NoiseSpec(seed=11)
    x = np.linspace(-500, 500, 7)
    many = gradient_noise_many(spec, x, 3.0, 9000.0, 5.0)
    assert list(many) == [gradient_noise(spec, xi, 3.0, 9000.0, 5.0) for xi in x]


def test_seed_sensitivity():
    a = NoiseSpec(seed=1)
    b = NoiseSpec(seed=2)
    pts = [(123.4, -55.0, 8000.0, 3.3), (10.0, 10.0, 4100.0, 7.0)]
    assert any(gradient_noise(a, *p) != gradient_noise(b, *p) for p in pts)


@pytest.mark.parametrize(
    "kw", [dict(amplitude=-1.0), dict(spatial_scale=0.0), dict(pressure_scale=-5.0), dict(time_scale=0.0)]
)
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        NoiseSpec(**kw)
