"""Launch-configuration optimisers over the box |x0| <= x_max, |y0| <= y_max, 0 <= dt <= t_max.

Every optimiser maximises ``objective((x_km, y_km, dt_h)) -> float`` and returns
a :class:`Trace`. Optimisers work internally in normalised coordinates
(x / x_max, y / y_max, dt / t_max).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, UsageError
from .gp import GpDataset, GpPosterior, KernelParams, fit, optimize_hypers, predict

log = logging.getLogger(__name__)

Objective = Callable[[tuple], float]

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Bounds:
    x_max: float = 400.0  # km
    y_max: float = 400.0  # km
    t_max: float = 24.0  # hours

    def __post_init__(self):
        for name in ("x_max", "y_max", "t_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([-self.x_max, -self.y_max, 0.0])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.t_max])

    @property
    def scale(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.t_max])

    def normalize(self, config) -> np.ndarray:
        return np.asarray(config, dtype=float) / self.scale

    def denormalize(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float) * self.scale

    def clip(self, config) -> np.ndarray:
        return np.clip(np.asarray(config, dtype=float), self.lower, self.upper)

    def contains(self, config) -> bool:
        c = np.asarray(config, dtype=float)
        return bool(np.all(c >= self.lower) and np.all(c <= self.upper))

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        size = 3 if n is None else (n, 3)
        return rng.uniform(self.lower, self.upper, size=size)


# normalised box
_U_LO = np.array([-1.0, -1.0, 0.0])
_U_HI = np.array([1.0, 1.0, 1.0])
_U_HALF = (_U_HI - _U_LO) / 2.0


@dataclass
class Trace:
    """Evaluated samples in order, plus an error note if the objective raised."""

    method: str = ""
    rows: list = field(default_factory=list)  # (iter, x, y, dt, value, best)
    error: str | None = None

    COLUMNS = ("iter", "x_km", "y_km", "dt_h", "value", "best_so_far")

    def append(self, config, value: float) -> None:
        value = float(value)
        best = value if not self.rows else max(self.rows[-1][5], value)
        x, y, t = (float(c) for c in config)
        self.rows.append((len(self.rows) + 1, x, y, t, value, best))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def configs(self) -> np.ndarray:
        return np.array([r[1:4] for r in self.rows]).reshape(-1, 3)

    @property
    def values(self) -> np.ndarray:
        return np.array([r[4] for r in self.rows])

    @property
    def best_so_far(self) -> np.ndarray:
        return np.array([r[5] for r in self.rows])

    @property
    def best_config(self) -> tuple:
        i = int(np.argmax(self.values))
        return tuple(self.rows[i][1:4])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])


@dataclass(frozen=True)
class ConvergenceStats:
    converged_max: float
    converge_index: int  # 1-based


def converged_stats(trace) -> ConvergenceStats:
    """Final best value and the first 1-based index where it was reached (within 1e-9)."""
    best = trace.best_so_far if isinstance(trace, Trace) else np.maximum.accumulate(np.asarray(trace, dtype=float))
    if len(best) == 0:
        raise UsageError("converged_stats() needs a non-empty trace")
    final = float(best[-1])
    idx = int(np.argmax(best >= final - 1e-9)) + 1
    return ConvergenceStats(final, idx)


def _evaluate(trace: Trace, objective: Objective, config) -> bool:
    """Evaluate and append; on failure record the error and return False."""
    try:
        value = float(objective(tuple(float(c) for c in config)))
    except Exception as exc:  # objective errors truncate the trace
        trace.error = f"iteration {len(trace) + 1}: {type(exc).__name__}: {exc}"
        log.warning("objective failed, truncating trace: %s", trace.error)
        return False
    if not math.isfinite(value):
        trace.error = f"iteration {len(trace) + 1}: non-finite objective value {value!r}"
        return False
    trace.append(config, value)
    return True


# ---------------------------------------------------------------- acquisition


def expected_improvement(mean, std, f_best):
    """Closed-form EI for maximisation with zero exploration offset."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise DomainError("expected_improvement: std must be >= 0")
    imp = mean - f_best
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, imp / np.where(std > 0, std, 1.0), 0.0)
        ei = np.where(std > 0, imp * ndtr(z) + std * INV_SQRT_2PI * np.exp(-0.5 * z * z), np.maximum(imp, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def _ei_at(posterior: GpPosterior, U: np.ndarray, f_best: float) -> np.ndarray:
    mean, var = predict(posterior, U)
    return expected_improvement(mean, np.sqrt(var), f_best)


def propose_next(
    posterior: GpPosterior,
    bounds: Bounds,
    rng: np.random.Generator,
    n_candidates: int = 2048,
    n_jittered: int = 10,
    refine_iters: int = 50,
) -> np.ndarray:
    """Next configuration (km, km, h) maximising EI over the box."""
    X = posterior.dataset.inputs
    y = posterior.dataset.targets
    f_best = float(np.max(y))
    cand = rng.uniform(_U_LO, _U_HI, size=(n_candidates, 3))
    top = X[np.argsort(-y, kind="stable")[:n_jittered]]
    jittered = np.clip(top + rng.normal(0.0, 0.05, size=top.shape) * _U_HALF, _U_LO, _U_HI)
    cand = np.vstack([cand, jittered])
    ei = _ei_at(posterior, cand, f_best)
    fallback = rng.uniform(_U_LO, _U_HI)
    i = int(np.argmax(ei))
    if not ei[i] > 1e-12:
        return bounds.denormalize(fallback)

    # coordinate pattern search
    x = cand[i].copy()
    fx = float(ei[i])
    step = 0.1 * _U_HALF
    for _ in range(refine_iters):
        trial = []
        for k in range(3):
            for sgn in (1.0, -1.0):
                t = x.copy()
                t[k] = min(max(t[k] + sgn * step[k], _U_LO[k]), _U_HI[k])
                trial.append(t)
        trial = np.array(trial)
        vals = _ei_at(posterior, trial, f_best)
        j = int(np.argmax(vals))
        if vals[j] > fx:
            x, fx = trial[j], float(vals[j])
        else:
            step = step / 2.0
    return bounds.clip(bounds.denormalize(x))


# ---------------------------------------------------------------- optimisers


def _dataset(trace: Trace, bounds: Bounds) -> GpDataset:
    v = trace.values
    sd = float(np.std(v))
    # standardise so returns of any magnitude sit inside the signal-variance bounds
    targets = (v - v.mean()) / (sd if sd > 0 else 1.0)
    return GpDataset(trace.configs / bounds.scale, targets)


def bo_run(
    objective: Objective,
    bounds: Bounds = Bounds(),
    budget: int = 60,
    seed: int = 0,
    n_init: int = 4,
    refit_every: int = 5,
) -> Trace:
    """GP-EI Bayesian optimisation seeded with ``n_init`` uniform samples."""
    if budget < n_init:
        raise UsageError(f"bo_run needs budget >= {n_init}, got {budget}")
    if refit_every < 1:
        raise UsageError("refit_every must be >= 1")
    rng = np.random.default_rng(seed)
    trace = Trace("bo")
    for config in bounds.sample(rng, n_init):
        if not _evaluate(trace, objective, config):
            return trace
    params = None
    for it in range(budget - n_init):
        data = _dataset(trace, bounds)
        if params is None or it % refit_every == 0:
            try:
                params = optimize_hypers(data, seed=int(rng.integers(2**31)))
            except Exception as exc:
                log.warning("hyperparameter fit failed (%s); keeping previous", exc)
                params = params or KernelParams((0.5, 0.5, 0.5), 1.0, 1e-3)
        config = propose_next(fit(data, params), bounds, rng)
        if not _evaluate(trace, objective, config):
            break
    return trace


@dataclass(frozen=True)
class PsoParams:
    swarm_size: int = 12
    mode: str = "schedule"  # "schedule" | "constant"
    w_const: float = 0.8
    c1_const: float = 1.0
    c2_const: float = 1.0
    init_velocity: float = 0.1  # fraction of the box range

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError(f"swarm_size must be >= 2, got {self.swarm_size}")
        if self.mode not in ("schedule", "constant"):
            raise ValueError(f"PSO mode must be 'schedule' or 'constant', got {self.mode!r}")

    def coefficients(self, n: int, N: int) -> tuple:
        """(w, c1, c2) at evaluation index ``n`` of budget ``N``."""
        if self.mode == "constant":
            return self.w_const, self.c1_const, self.c2_const
        return pso_schedule(n, N)


def pso_schedule(n: float, N: float) -> tuple:
    if not N > 0:
        raise ValueError("budget N must be > 0")
    w = 0.4 * (n - N) / (N * N) + 0.4
    c1 = -3.0 * n / N + 3.5
    c2 = 3.0 * n / N + 0.5
    return w, c1, c2


def pso_run(
    objective: Objective,
    bounds: Bounds = Bounds(),
    budget: int = 60,
    params: PsoParams = PsoParams(),
    seed: int = 0,
) -> Trace:
    """Particle swarm with per-evaluation schedules, updating particles round-robin."""
    S = params.swarm_size
    if budget < S:
        raise UsageError(f"pso_run needs budget >= swarm_size ({S}), got {budget}")
    rng = np.random.default_rng(seed)
    span = _U_HI - _U_LO
    pos = rng.uniform(_U_LO, _U_HI, size=(S, 3))
    vel = rng.uniform(-1.0, 1.0, size=(S, 3)) * params.init_velocity * span
    pbest = pos.copy()
    pbest_val = np.full(S, -np.inf)
    g = 0
    trace = Trace("pso")
    for n in range(budget):
        i = n % S
        if n >= S:
            w, c1, c2 = params.coefficients(n, budget)
            r1 = rng.uniform(size=3)
            r2 = rng.uniform(size=3)
            v = w * vel[i] + c1 * r1 * (pbest[i] - pos[i]) + c2 * r2 * (pbest[g] - pos[i])
            v = np.clip(v, -span, span)
            x = pos[i] + v
            clamped = (x < _U_LO) | (x > _U_HI)
            v[clamped] = 0.0
            pos[i] = np.clip(x, _U_LO, _U_HI)
            vel[i] = v
        if not _evaluate(trace, objective, bounds.clip(bounds.denormalize(pos[i]))):
            break
        val = trace.rows[-1][4]
        if val > pbest_val[i]:
            pbest_val[i] = val
            pbest[i] = pos[i].copy()
            if val > pbest_val[g]:
                g = i
    return trace


def uniform_run(objective: Objective, bounds: Bounds = Bounds(), budget: int = 60, seed: int = 0) -> Trace:
    if budget < 1:
        raise UsageError(f"uniform_run needs budget >= 1, got {budget}")
    rng = np.random.default_rng(seed)
    trace = Trace("uniform")
    for config in bounds.sample(rng, budget):
        if not _evaluate(trace, objective, config):
            break
    return trace


def run_optimizer(method: str, objective: Objective, bounds: Bounds, budget: int, seed: int, **kw) -> Trace:
    method = method.lower()
    if method == "bo":
        return bo_run(objective, bounds, budget, seed, **kw)
    if method == "pso":
        return pso_run(objective, bounds, budget, kw.get("params", PsoParams()), seed)
    if method == "uniform":
        return uniform_run(objective, bounds, budget, seed)
    raise UsageError(f"unknown optimizer {method!r}; expected bo, pso or uniform")

