"""Exact Gaussian-process regression with a Matérn-5/2 ARD kernel.

Inputs are expected in normalised units (see ``optimize.Bounds.normalize``).
Targets are centred on their sample mean before fitting; predictions add the
mean back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .errors import NumericError

SQRT5 = math.sqrt(5.0)
LOG_2PI = math.log(2.0 * math.pi)

LENGTHSCALE_BOUNDS = (1e-3, 1e2)
SIGNAL_BOUNDS = (1e-6, 1e3)
NOISE_BOUNDS = (1e-8, 1e2)

JITTER_START = 1e-10
JITTER_MAX = 1e-6


@dataclass(frozen=True)
class KernelParams:
    lengthscales: tuple
    signal_variance: float = 1.0
    noise_variance: float = 1e-6

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        if not all(v > 0 and math.isfinite(v) for v in ls):
            raise ValueError(f"lengthscales must be positive and finite, got {ls}")
        if not self.signal_variance > 0:
            raise ValueError(f"signal_variance must be > 0, got {self.signal_variance!r}")
        if not self.noise_variance >= 0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance!r}")

    def within_bounds(self) -> bool:
        lo, hi = LENGTHSCALE_BOUNDS
        return (
            all(lo <= v <= hi for v in self.lengthscales)
            and SIGNAL_BOUNDS[0] <= self.signal_variance <= SIGNAL_BOUNDS[1]
            and NOISE_BOUNDS[0] <= self.noise_variance <= NOISE_BOUNDS[1]
        )

    def to_log(self) -> np.ndarray:
        return np.log([*self.lengthscales, self.signal_variance, self.noise_variance])

    @classmethod
    def from_log(cls, theta) -> "KernelParams":
        """Inverse of :meth:`to_log`, clipping every entry to the fitting bounds."""
        theta = np.asarray(theta, dtype=float)
        lo, hi = _log_bounds(theta.size - 2)
        d = theta.size - 2
        lo_v = np.array([LENGTHSCALE_BOUNDS[0]] * d + [SIGNAL_BOUNDS[0], NOISE_BOUNDS[0]])
        hi_v = np.array([LENGTHSCALE_BOUNDS[1]] * d + [SIGNAL_BOUNDS[1], NOISE_BOUNDS[1]])
        vals = np.clip(np.exp(np.clip(theta, lo, hi)), lo_v, hi_v)
        return cls(tuple(vals[:-2]), float(vals[-2]), float(vals[-1]))


@dataclass(frozen=True, eq=False)
class GpDataset:
    inputs: np.ndarray  # (n, d)
    targets: np.ndarray  # (n,)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] != y.shape[0] or y.shape[0] < 1:
            raise ValueError(f"need equal, non-zero numbers of inputs and targets, got {X.shape[0]} and {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def _scaled_distance(A: np.ndarray, B: np.ndarray, lengthscales) -> np.ndarray:
    # Subtract before scaling so the kernel depends on x - x' alone.
    ls = np.asarray(lengthscales, dtype=float)
    diff = (A[:, None, :] - B[None, :, :]) / ls
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def matern52(A, B, params: KernelParams) -> np.ndarray:
    """Covariance matrix between the rows of ``A`` and ``B`` (or a scalar for two vectors)."""
    scalar = np.ndim(A) == 1 and np.ndim(B) == 1
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    d = _scaled_distance(A, B, params.lengthscales)
    k = params.signal_variance * (1.0 + SQRT5 * d + 5.0 / 3.0 * d * d) * np.exp(-SQRT5 * d)
    return float(k[0, 0]) if scalar else k


def gram(X, params: KernelParams) -> np.ndarray:
    K = matern52(X, X, params)
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] = params.signal_variance
    return K


@dataclass(frozen=True, eq=False)
class GpPosterior:
    dataset: GpDataset
    params: KernelParams
    factor: np.ndarray  # lower-triangular L with L L^T = K + (noise + jitter) I
    alpha: np.ndarray  # (K + noise I)^-1 (y - mean)
    y_mean: float
    jitter: float = 0.0

    @property
    def centered_targets(self) -> np.ndarray:
        return self.dataset.targets - self.y_mean


def _factor(K: np.ndarray) -> tuple:
    """Cholesky of ``K`` with escalating relative diagonal jitter; returns (L, absolute jitter)."""
    scale = max(float(np.mean(np.diag(K))), np.finfo(float).tiny)
    jitter = 0.0
    eye = None
    while True:
        try:
            if jitter == 0.0:
                L = np.linalg.cholesky(K)
            else:
                eye = np.eye(K.shape[0]) if eye is None else eye
                L = np.linalg.cholesky(K + jitter * scale * eye)
            if np.all(np.isfinite(L)):
                return L, jitter * scale
        except np.linalg.LinAlgError:
            pass
        jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX * (1.0 + 1e-9):
            raise NumericError(
                f"covariance factorisation failed at maximum jitter {JITTER_MAX:g} "
                f"(condition estimate {np.linalg.cond(K):.3g})"
            )


def fit(dataset: GpDataset, params: KernelParams) -> GpPosterior:
    if len(params.lengthscales) != dataset.dim:
        raise ValueError(f"{len(params.lengthscales)} lengthscales for {dataset.dim}-D inputs")
    K = gram(dataset.inputs, params)
    K[np.diag_indices_from(K)] += params.noise_variance
    L, jitter = _factor(K)
    y_mean = float(np.mean(dataset.targets))
    alpha = cho_solve((L, True), dataset.targets - y_mean, check_finite=False)
    return GpPosterior(dataset, params, L, alpha, y_mean, jitter)


def predict(posterior: GpPosterior, x_star) -> tuple:
    """Predictive (mean, variance) at one point or at each row of a 2-D array."""
    single = np.ndim(x_star) == 1
    Xs = np.atleast_2d(np.asarray(x_star, dtype=float))
    Ks = matern52(Xs, posterior.dataset.inputs, posterior.params)
    mean = posterior.y_mean + Ks @ posterior.alpha
    v = solve_triangular(posterior.factor, Ks.T, lower=True, check_finite=False)
    var = posterior.params.signal_variance - np.einsum("ij,ij->j", v, v)
    var = np.where(var < 1e-12, np.maximum(var, 0.0), var)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def log_marginal_likelihood(posterior: GpPosterior) -> float:
    y = posterior.centered_targets
    n = y.shape[0]
    return float(
        -0.5 * y @ posterior.alpha - np.sum(np.log(np.diag(posterior.factor))) - 0.5 * n * LOG_2PI
    )


def _neg_lml(theta, sq: np.ndarray, yc: np.ndarray, lo, hi) -> float:
    """Negative LML from precomputed per-dimension squared differences ``sq`` (d, n, n)."""
    p = KernelParams.from_log(theta)
    ls2 = np.square(p.lengthscales)
    d = np.sqrt(np.tensordot(1.0 / ls2, sq, axes=1))
    K = p.signal_variance * (1.0 + SQRT5 * d + 5.0 / 3.0 * d * d) * np.exp(-SQRT5 * d)
    K[np.diag_indices_from(K)] = p.signal_variance + p.noise_variance
    try:
        L, _ = _factor(K)
    except NumericError:
        return 1e25
    alpha = cho_solve((L, True), yc, check_finite=False)
    val = -0.5 * yc @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * yc.size * LOG_2PI
    if not math.isfinite(val):
        return 1e25
    # from_log clips, so the surface is flat outside the box; a small slope pulls the simplex back in
    return -val + 1e-3 * float(np.sum(np.abs(theta - np.clip(theta, lo, hi))))


def _log_bounds(dim: int) -> tuple:
    lo = np.log([LENGTHSCALE_BOUNDS[0]] * dim + [SIGNAL_BOUNDS[0], NOISE_BOUNDS[0]])
    hi = np.log([LENGTHSCALE_BOUNDS[1]] * dim + [SIGNAL_BOUNDS[1], NOISE_BOUNDS[1]])
    return lo, hi


def optimize_hypers(
    dataset: GpDataset, seed: int = 0, n_starts: int = 8, max_evals: int = 200
) -> KernelParams:
    """Multi-start Nelder-Mead on the log marginal likelihood in log-parameter space."""
    if len(dataset) < 3:
        raise ValueError(f"hyperparameter fitting needs at least 3 points, got {len(dataset)}")
    dim = dataset.dim
    lo, hi = _log_bounds(dim)
    X = dataset.inputs
    sq = np.stack([np.square(X[:, k, None] - X[None, :, k]) for k in range(dim)])
    yc = dataset.targets - np.mean(dataset.targets)
    rng = np.random.default_rng(seed)
    var_y = max(float(np.var(dataset.targets)), SIGNAL_BOUNDS[0])
    starts = [np.log([0.5] * dim + [var_y, max(1e-3 * var_y, NOISE_BOUNDS[0])])]
    for _ in range(n_starts - 1):
        starts.append(
            np.concatenate(
                [
                    rng.uniform(math.log(0.05), math.log(2.0), dim),
                    [math.log(var_y) + rng.uniform(-2.0, 2.0)],
                    [math.log(var_y) + rng.uniform(math.log(1e-6), math.log(1e-1))],
                ]
            )
        )
    best_val, best_theta = math.inf, None
    for theta0 in starts:
        theta0 = np.clip(theta0, lo, hi)
        res = minimize(
            _neg_lml, theta0, args=(sq, yc, lo, hi), method="Nelder-Mead",
            options={"maxfev": max_evals, "xatol": 1e-4, "fatol": 1e-8},
        )
        theta = np.clip(res.x, lo, hi)
        val = _neg_lml(theta, sq, yc, lo, hi)
        if val < best_val:
            best_val, best_theta = val, theta
    if best_theta is None or best_val >= 1e25:
        raise NumericError("every hyperparameter start failed to factorise the covariance")
    return KernelParams.from_log(best_theta)
