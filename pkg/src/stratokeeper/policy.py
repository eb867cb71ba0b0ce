"""Controllers mapping a 77-feature observation to a normalised action.

All controllers are pure callables ``controller(obs) -> (u0, u1, u2)``.

Actor weights file (text, decimal, 17 significant digits when written)::

    MLPACTOR 1
    dims 77 256 256 3
    W r c          # then r lines of c values, for each layer in order
    b r            # then r values
    ...

Hidden layers use ReLU and the output layer tanh, giving the mean action of
a squashed-Gaussian actor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .atmosphere import AtmosphereModel, altitude_at_pressure
from .env import (
    BEARINGS,
    F_D,
    F_H,
    F_HDOT,
    FEATURE_SCALES,
    OBS_SIZE,
    SPEEDS,
    EnvConfig,
)
from .errors import ParseError

ACTOR_DIMS = (OBS_SIZE, 256, 256, 3)
_EDGE = math.nextafter(1.0, 0.0)


def _encode_altitude(a0: float, cfg: EnvConfig) -> float:
    a0 = min(max(a0, cfg.altitude_lo), cfg.altitude_hi)
    return 2.0 * (a0 - cfg.altitude_lo) / (cfg.altitude_hi - cfg.altitude_lo) - 1.0


@dataclass(frozen=True)
class GreedyParams:
    speed_weight: float = 1.0  # inside the region: weight of wind speed vs bearing error
    float_levels: int = 1  # float when the best level is this close to the current one
    float_rate: float = 0.5  # ... and |ascent rate| is below this (m/s)


class GreedyController:
    """Steer toward the observed level whose wind points closest to the target.

    Outside the region the cost is the absolute bearing error; inside it is
    a blend weighted toward low wind speed. The commanded altitude is that
    level's altitude in the standard atmosphere.
    """

    def __init__(self, cfg: EnvConfig = EnvConfig(), params: GreedyParams = GreedyParams()):
        self.cfg = cfg
        self.params = params
        std = AtmosphereModel.standard()
        self.level_altitudes = np.array([altitude_at_pressure(std, p) for p in cfg.obs_pressures])

    def __call__(self, obs) -> tuple:
        return greedy_action(obs, self.cfg, self.params, self.level_altitudes)


def greedy_action(obs, cfg: EnvConfig = EnvConfig(), params: GreedyParams = GreedyParams(), level_altitudes=None) -> tuple:
    if level_altitudes is None:
        std = AtmosphereModel.standard()
        level_altitudes = np.array([altitude_at_pressure(std, p) for p in cfg.obs_pressures])
    obs = np.asarray(obs, dtype=float)
    speeds = obs[SPEEDS] * FEATURE_SCALES["wind_speed"]
    bearing = np.abs(obs[BEARINGS])  # already in units of pi
    d = obs[F_D] * FEATURE_SCALES["distance"]
    h = obs[F_H] * FEATURE_SCALES["altitude"]
    h_dot = obs[F_HDOT] * FEATURE_SCALES["ascent_rate"]
    if d >= cfg.region_radius:
        cost = bearing
    else:
        w = params.speed_weight
        cost = w * speeds / FEATURE_SCALES["wind_speed"] + (1.0 - w) * bearing
    best = int(np.argmin(cost))
    current = int(np.argmin(np.abs(level_altitudes - h)))
    u0 = _encode_altitude(float(level_altitudes[best]), cfg)
    settled = abs(current - best) <= params.float_levels and abs(h_dot) <= params.float_rate
    return (u0, 0.0, 0.5 if settled else -0.5)


class HoldAltitudeController:
    """Drive to a fixed altitude, then float once there and nearly still."""

    def __init__(self, altitude: float = 17000.0, cfg: EnvConfig = EnvConfig(),
                 deadband: float = 250.0, rate_band: float = 0.3):
        self.cfg = cfg
        self.altitude = altitude
        self.deadband = deadband
        self.rate_band = rate_band
        self._u0 = _encode_altitude(altitude, cfg)

    def __call__(self, obs) -> tuple:
        h = obs[F_H] * FEATURE_SCALES["altitude"]
        h_dot = obs[F_HDOT] * FEATURE_SCALES["ascent_rate"]
        settled = abs(h - self.altitude) <= self.deadband and abs(h_dot) <= self.rate_band
        return (self._u0, 0.0, 0.5 if settled else -0.5)


# ---------------------------------------------------------------- actor MLP


@dataclass(frozen=True, eq=False)
class MlpWeights:
    weights: tuple  # W_k with shape (out, in)
    biases: tuple

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        dims = [self.weights[0].shape[1]]
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or W.shape[1] != dims[-1]:
                raise ValueError(f"layer {k}: weight shape {W.shape} does not chain from {dims[-1]}")
            if b.shape != (W.shape[0],):
                raise ValueError(f"layer {k}: bias shape {b.shape} != ({W.shape[0]},)")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k}: non-finite weight")
            dims.append(W.shape[0])
        if dims[0] != OBS_SIZE or dims[-1] != 3:
            raise ValueError(f"actor must map {OBS_SIZE} -> 3, got {dims[0]} -> {dims[-1]}")

    @property
    def dims(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)

    @classmethod
    def random(cls, seed: int = 0, dims=ACTOR_DIMS, scale: float = 1.0) -> "MlpWeights":
        rng = np.random.default_rng(seed)
        Ws, bs = [], []
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            Ws.append(rng.normal(0.0, scale / math.sqrt(n_in), (n_out, n_in)))
            bs.append(rng.normal(0.0, 0.1 * scale, n_out))
        return cls(tuple(Ws), tuple(bs))


def mlp_forward(weights: MlpWeights, observation) -> np.ndarray:
    """Deterministic squashed-Gaussian mean: tanh of the last layer, ReLU hidden layers."""
    x = np.asarray(observation, dtype=float)
    n = len(weights.weights)
    for k, (W, b) in enumerate(zip(weights.weights, weights.biases)):
        x = W @ x + b
        x = np.tanh(x) if k == n - 1 else np.maximum(x, 0.0)
    # tanh rounds to +-1 past |x| ~ 19; keep the open-interval contract.
    return np.clip(x, -_EDGE, _EDGE)


class MlpController:
    def __init__(self, weights: MlpWeights):
        self.weights = weights

    @classmethod
    def from_file(cls, path) -> "MlpController":
        return cls(load_weights(path))

    def __call__(self, obs) -> tuple:
        return tuple(mlp_forward(self.weights, obs))


def save_weights(weights: MlpWeights, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("MLPACTOR 1\n")
        f.write("dims " + " ".join(str(d) for d in weights.dims) + "\n")
        for W, b in zip(weights.weights, weights.biases):
            f.write(f"W {W.shape[0]} {W.shape[1]}\n")
            np.savetxt(f, W, fmt="%.17g")
            f.write(f"b {b.shape[0]}\n")
            f.write(" ".join("%.17g" % v for v in b) + "\n")


class _Tokens:
    """Whitespace tokens with their 1-based line numbers."""

    def __init__(self, lines):
        self.lines = lines
        self.i = 0

    def line(self):
        while self.i < len(self.lines) and not self.lines[self.i].strip():
            self.i += 1
        if self.i >= len(self.lines):
            raise ParseError("unexpected end of file", line=len(self.lines) + 1)
        self.i += 1
        return self.i, self.lines[self.i - 1].split()


def _floats(parts, lineno, what):
    try:
        vals = np.array([float(p) for p in parts])
    except ValueError:
        raise ParseError(f"{what}: non-numeric value", line=lineno) from None
    if not np.all(np.isfinite(vals)):
        raise ParseError(f"{what}: non-finite weight", line=lineno)
    return vals


def load_weights(path) -> MlpWeights:
    toks = _Tokens(Path(path).read_text(encoding="utf-8").splitlines())
    ln, head = toks.line()
    if head != ["MLPACTOR", "1"]:
        raise ParseError(f"bad magic {' '.join(head)!r}, expected 'MLPACTOR 1'", line=ln)
    ln, parts = toks.line()
    if not parts or parts[0] != "dims":
        raise ParseError("expected 'dims' line", line=ln)
    try:
        dims = [int(p) for p in parts[1:]]
    except ValueError:
        raise ParseError("dims must be integers", line=ln) from None
    if len(dims) < 2 or dims[0] != OBS_SIZE or dims[-1] != 3:
        raise ParseError(f"dims must start at {OBS_SIZE} and end at 3, got {dims}", line=ln)
    Ws, bs = [], []
    for k, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        layer = f"layer {k}"
        ln, parts = toks.line()
        if len(parts) != 3 or parts[0] != "W":
            raise ParseError(f"{layer}: expected 'W r c'", line=ln)
        r, c = int(parts[1]), int(parts[2])
        if (r, c) != (n_out, n_in):
            raise ParseError(f"{layer}: W is {r}x{c}, dims require {n_out}x{n_in}", line=ln)
        W = np.empty((r, c))
        for i in range(r):
            ln, parts = toks.line()
            if parts and parts[0] in ("W", "b"):
                raise ParseError(f"{layer}: W has {i} rows, expected {r}", line=ln)
            if len(parts) != c:
                raise ParseError(f"{layer}: W row {i} has {len(parts)} values, expected {c}", line=ln)
            W[i] = _floats(parts, ln, layer)
        ln, parts = toks.line()
        if len(parts) != 2 or parts[0] != "b":
            raise ParseError(f"{layer}: expected 'b r' (W has more than {r} rows?)", line=ln)
        if int(parts[1]) != n_out:
            raise ParseError(f"{layer}: b has {parts[1]} entries, dims require {n_out}", line=ln)
        vals = []
        while len(vals) < n_out:
            ln, parts = toks.line()
            vals.extend(_floats(parts, ln, layer))
        if len(vals) != n_out:
            raise ParseError(f"{layer}: b has {len(vals)} values, expected {n_out}", line=ln)
        Ws.append(W)
        bs.append(np.array(vals))
    return MlpWeights(tuple(Ws), tuple(bs))


CONTROLLER_KINDS = ("greedy", "hold", "mlp")


@dataclass(frozen=True)
class ControllerSpec:
    kind: str = "greedy"
    speed_weight: float = GreedyParams.speed_weight
    float_rate: float = GreedyParams.float_rate
    hold_altitude: float = 17000.0
    mlp_path: str = ""

    def __post_init__(self):
        kind = str(self.kind).lower()
        aliases = {"holdaltitude": "hold", "hold_altitude": "hold"}
        kind = aliases.get(kind, kind)
        if kind not in CONTROLLER_KINDS:
            raise ValueError(f"unknown controller {self.kind!r}; expected greedy, hold or mlp")
        object.__setattr__(self, "kind", kind)
        if kind == "mlp" and not self.mlp_path:
            raise ValueError("controller 'mlp' needs a weights path")
        if not 0.0 <= self.speed_weight <= 1.0:
            raise ValueError("speed_weight must lie in [0, 1]")

    def build(self, cfg: EnvConfig = EnvConfig()):
        """Instantiate the controller; MLP weights are loaded and validated here."""
        if self.kind == "greedy":
            return GreedyController(cfg, GreedyParams(self.speed_weight, 1, self.float_rate))
        if self.kind == "hold":
            return HoldAltitudeController(self.hold_altitude, cfg)
        return MlpController.from_file(self.mlp_path)
