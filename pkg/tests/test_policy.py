import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stratokeeper.atmosphere import AtmosphereModel, altitude_at_pressure
from stratokeeper.env import (
    BEARINGS,
    F_D,
    F_H,
    F_HDOT,
    FEATURE_SCALES,
    OBS_SIZE,
    SPEEDS,
    EnvConfig,
    decode_action,
)
from stratokeeper.errors import ParseError
from stratokeeper.policy import (
    ACTOR_DIMS,
    ControllerSpec,
    GreedyController,
    GreedyParams,
    HoldAltitudeController,
    MlpController,
    MlpWeights,
    greedy_action,
    load_weights,
    mlp_forward,
    save_weights,
)

CFG = EnvConfig()
STD = AtmosphereModel.standard()
LEVEL_ALT = [altitude_at_pressure(STD, p) for p in CFG.obs_pressures]


def obs_with(bearings=None, speeds=None, d=100.0, h=15000.0, h_dot=0.0):
    obs = np.zeros(OBS_SIZE)
    obs[BEARINGS] = 0.5 if bearings is None else bearings
    obs[SPEEDS] = 10.0 / FEATURE_SCALES["wind_speed"] if speeds is None else speeds
    obs[F_D] = d / FEATURE_SCALES["distance"]
    obs[F_H] = h / FEATURE_SCALES["altitude"]
    obs[F_HDOT] = h_dot / FEATURE_SCALES["ascent_rate"]
    return obs


def chosen_altitude(action):
    return decode_action(action, CFG)[0]


@pytest.mark.parametrize("k", [0, 7, 24])
def test_greedy_unique_aligned_level(k):
    b = np.full(25, 0.6)
    b[k] = 0.0
    a = greedy_action(obs_with(bearings=b), CFG)
    assert chosen_altitude(a) == pytest.approx(min(max(LEVEL_ALT[k], 14000.0), 21000.0), abs=1e-6)
    assert a[1] == 0.0


def test_greedy_inside_picks_calm_level():
    s = np.full(25, 0.5)
    s[11] = 0.0
    a = greedy_action(obs_with(speeds=s, d=10.0), CFG)
    assert chosen_altitude(a) == pytest.approx(LEVEL_ALT[11], abs=1e-6)


def test_greedy_float_hysteresis():
    b = np.full(25, 0.6)
    b[12] = 0.0
    here = greedy_action(obs_with(bearings=b, h=LEVEL_ALT[12]), CFG)
    far = greedy_action(obs_with(bearings=b, h=LEVEL_ALT[0]), CFG)
    moving = greedy_action(obs_with(bearings=b, h=LEVEL_ALT[12], h_dot=3.0), CFG)
    assert here[2] == 0.5
    assert far[2] == -0.5
    assert moving[2] == -0.5
    loose = greedy_action(obs_with(bearings=b, h=LEVEL_ALT[12], h_dot=3.0), CFG, GreedyParams(float_rate=10.0))
    assert loose[2] == 0.5


observations = arrays(np.float64, OBS_SIZE, elements=st.floats(-3.0, 3.0))


@given(observations)
def test_greedy_range_and_purity(obs):
    ctl = GreedyController(CFG)
    a = ctl(obs)
    assert 14000.0 <= chosen_altitude(a) <= 21000.0
    assert a == ctl(obs.copy()) == greedy_action(obs, CFG)


@given(observations)
def test_hold_controller_pure(obs):
    ctl = HoldAltitudeController(17000.0, CFG)
    a = ctl(obs)
    assert a == ctl(obs.copy())
    assert chosen_altitude(a) == pytest.approx(17000.0)


def test_mlp_zero_weights():
    w = MlpWeights(
        tuple(np.zeros((o, i)) for i, o in zip(ACTOR_DIMS[:-1], ACTOR_DIMS[1:])),
        tuple(np.zeros(o) for o in ACTOR_DIMS[1:]),
    )
    assert list(mlp_forward(w, np.ones(OBS_SIZE))) == [0.0, 0.0, 0.0]


def test_mlp_saturating_bias():
    dims = (OBS_SIZE, 4, 4, 3)
    W1 = np.zeros((4, OBS_SIZE))
    W1[0, 0] = 1.0
    W2 = np.eye(4)
    W3 = np.zeros((3, 4))
    W3[0, 0] = 1.0
    w = MlpWeights((W1, W2, W3), (np.zeros(4), np.zeros(4), np.array([10.0, -10.0, 0.0])))
    assert w.dims == dims
    assert np.allclose(mlp_forward(w, np.zeros(OBS_SIZE)), [1.0, -1.0, 0.0], atol=1e-4)


def reference_forward(w, x):
    # Plain-Python oracle.
    vals = [float(v) for v in x]
    n = len(w.weights)
    for k, (W, b) in enumerate(zip(w.weights, w.biases)):
        out = []
        for i in range(W.shape[0]):
            z = math.fsum(float(W[i, j]) * vals[j] for j in range(W.shape[1])) + float(b[i])
            out.append(math.tanh(z) if k == n - 1 else max(z, 0.0))
        vals = out
    return vals


def test_mlp_matches_reference():
    w = MlpWeights.random(seed=123)
    x = np.random.default_rng(5).normal(size=OBS_SIZE)
    assert np.allclose(mlp_forward(w, x), reference_forward(w, x), rtol=0, atol=1e-9)


@settings(max_examples=30)
@given(arrays(np.float64, OBS_SIZE, elements=st.floats(-1e6, 1e6)), st.integers(0, 1000))
def test_mlp_open_interval(obs, seed):
    w = MlpWeights.random(seed=seed, dims=(OBS_SIZE, 8, 8, 3), scale=3.0)
    out = mlp_forward(w, obs)
    assert np.all(np.abs(out) < 1.0)
    assert np.array_equal(out, mlp_forward(w, obs.copy()))


def test_weights_round_trip(tmp_path):
    w = MlpWeights.random(seed=1)
    save_weights(w, tmp_path / "w.txt")
    back = load_weights(tmp_path / "w.txt")
    assert back.dims == ACTOR_DIMS
    for a, b in zip(w.weights + w.biases, back.weights + back.biases):
        assert np.array_equal(a, b)
    ctl = MlpController.from_file(tmp_path / "w.txt")
    x = np.linspace(-1, 1, OBS_SIZE)
    assert ctl(x) == tuple(mlp_forward(w, x))


def small_file(tmp_path, edit=None):
    w = MlpWeights.random(seed=2, dims=(OBS_SIZE, 4, 3))
    path = tmp_path / "w.txt"
    save_weights(w, path)
    if edit:
        lines = path.read_text().splitlines()
        path.write_text("\n".join(edit(lines)) + "\n")
    return path


def test_minimal_file_loads(tmp_path):
    assert load_weights(small_file(tmp_path)).dims == (OBS_SIZE, 4, 3)


def test_bad_magic(tmp_path):
    with pytest.raises(ParseError, match="line 1: bad magic"):
        load_weights(small_file(tmp_path, lambda l: ["ACTOR 2"] + l[1:]))


def test_missing_row_names_layer(tmp_path):
    # Drop the last row of the first weight matrix.
    with pytest.raises(ParseError, match="layer 0: W has 3 rows, expected 4"):
        load_weights(small_file(tmp_path, lambda l: l[:6] + l[7:]))


def test_full_size_wrong_rows_names_layer(tmp_path):
    w = MlpWeights.random(seed=3)
    path = tmp_path / "w.txt"
    save_weights(w, path)
    lines = path.read_text().splitlines()
    start = 3 + 256 + 2 + 1  # second W header
    assert lines[start - 1].startswith("W 256 256")
    del lines[start + 10]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match="layer 1"):
        load_weights(path)


def test_nan_entry(tmp_path):
    def poison(lines):
        parts = lines[3].split()
        parts[5] = "nan"
        lines[3] = " ".join(parts)
        return lines

    with pytest.raises(ParseError, match="non-finite weight"):
        load_weights(small_file(tmp_path, poison))


def test_dims_mismatch(tmp_path):
    with pytest.raises(ParseError, match="dims"):
        load_weights(small_file(tmp_path, lambda l: [l[0], "dims 76 4 3"] + l[2:]))
    with pytest.raises(ValueError):
        MlpWeights((np.zeros((3, 10)),), (np.zeros(3),))


def test_controller_spec(tmp_path):
    assert isinstance(ControllerSpec().build(CFG), GreedyController)
    assert isinstance(ControllerSpec("HoldAltitude").build(CFG), HoldAltitudeController)
    with pytest.raises(ValueError):
        ControllerSpec("sac")
    with pytest.raises(ValueError):
        ControllerSpec("mlp")
    path = small_file(tmp_path)
    assert isinstance(ControllerSpec("mlp", mlp_path=str(path)).build(CFG), MlpController)
