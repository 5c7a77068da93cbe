"""Gaussian-process surrogate with a Matern-5/2 ARD kernel.

Outputs are standardized at every fit; all posterior quantities live on the
standardized scale. Thompson sampling draws one exact joint sample over a
finite candidate pool.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

SQRT5 = np.sqrt(5.0)
JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
SAMPLING_LADDER = JITTER_LADDER[1:]


class FactorizationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KernelParams:
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", np.asarray(self.lengthscales, dtype=float).ravel())

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_log_vector(self) -> np.ndarray:
        return np.log(np.concatenate([self.lengthscales, [self.signal_variance, self.noise_variance]]))

    @classmethod
    def from_log_vector(cls, theta: np.ndarray) -> "KernelParams":
        p = np.exp(np.asarray(theta, dtype=float))
        return cls(p[:-2], float(p[-2]), float(p[-1]))


@dataclass(frozen=True)
class HyperBounds:
    """Box constraints for the kernel hyperparameters (inputs scaled to [0, 1])."""

    lengthscale: tuple[float, float] = (0.005, 2.0)
    signal_variance: tuple[float, float] = (0.05, 20.0)
    noise_variance: tuple[float, float] = (5e-4, 0.2)

    def log_bounds(self, dim: int) -> list[tuple[float, float]]:
        ls = tuple(np.log(self.lengthscale))
        return [ls] * dim + [tuple(np.log(self.signal_variance)), tuple(np.log(self.noise_variance))]

    def contains(self, params: KernelParams, rtol: float = 1e-9) -> bool:
        def inside(v, lo_hi):
            lo, hi = lo_hi
            return np.all(v >= lo * (1 - rtol)) and np.all(v <= hi * (1 + rtol))

        return bool(
            inside(params.lengthscales, self.lengthscale)
            and inside(params.signal_variance, self.signal_variance)
            and inside(params.noise_variance, self.noise_variance)
        )


@dataclass(frozen=True)
class ObservationSet:
    inputs: np.ndarray
    raw_outputs: np.ndarray
    output_mean: float
    output_std: float

    @classmethod
    def from_arrays(cls, inputs, outputs, dim: int | None = None) -> "ObservationSet":
        y = np.asarray(outputs, dtype=float).ravel()
        x = np.asarray(inputs, dtype=float)
        if x.size == 0:
            x = np.zeros((0, dim if dim is not None else 0))
        x = x.reshape(len(y), -1) if len(y) else x.reshape(0, x.shape[-1])
        if not np.all(np.isfinite(y)):
            raise ValueError("observations contain non-finite outputs")
        if len(y) == 0:
            return cls(x, y, 0.0, 1.0)
        mean = float(np.mean(y))
        std = float(np.std(y))
        if not std > 0 or not np.isfinite(std):
            std = 1.0
        return cls(x, y, mean, std)

    def __len__(self) -> int:
        return len(self.raw_outputs)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def standardized_outputs(self) -> np.ndarray:
        return (self.raw_outputs - self.output_mean) / self.output_std


def _scaled_dist(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(a) / lengthscales
    b = np.atleast_2d(b) / lengthscales
    sq = a @ b.T
    sq *= -2.0
    sq += (a * a).sum(1)[:, None]
    sq += (b * b).sum(1)[None, :]
    np.maximum(sq, 0.0, out=sq)
    return np.sqrt(sq, out=sq)


def matern52_ard(x, y, params: KernelParams) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size != params.dim:
        raise ValueError(f"dimension mismatch: {x.size}, {y.size} vs {params.dim} lengthscales")
    r = np.sqrt(np.sum(((x - y) / params.lengthscales) ** 2))
    return float(params.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * np.exp(-SQRT5 * r))


def kernel_matrix(a, b, params: KernelParams) -> np.ndarray:
    """Cross-covariance matrix ``k(a_i, b_j)``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != params.dim or b.shape[1] != params.dim:
        raise ValueError(f"dimension mismatch: inputs have {a.shape[1]}/{b.shape[1]} columns, kernel {params.dim}")
    r = _scaled_dist(a, b, params.lengthscales)
    r *= SQRT5
    out = np.exp(-r)
    poly = r * r
    poly *= 1.0 / 3.0
    poly += r
    poly += 1.0
    out *= poly
    out *= params.signal_variance
    return out


def jittered_cholesky(mat: np.ndarray, ladder=JITTER_LADDER, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    n = mat.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    scale = max(float(np.mean(np.diag(mat))), 1e-300)
    for jitter in ladder:
        try:
            return cholesky(mat + (jitter * scale) * np.eye(n), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
    eig_min = float(np.linalg.eigvalsh((mat + mat.T) / 2).min())
    raise FactorizationError(
        f"Cholesky of {n}x{n} {what} failed up to jitter {ladder[-1]:g}; "
        f"min eigenvalue {eig_min:.3e}, mean diagonal {scale:.3e}"
    )


@dataclass(frozen=True)
class GpModel:
    params: KernelParams
    train_set: ObservationSet
    factor: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.params.dim

    def posterior(self, points) -> tuple[np.ndarray, np.ndarray]:
        return posterior(self, points)


def build_model(obs: ObservationSet, params: KernelParams) -> GpModel:
    """Condition a GP with fixed hyperparameters on ``obs``."""
    if len(obs) == 0:
        return GpModel(params, obs, np.zeros((0, 0)), np.zeros(0))
    K = kernel_matrix(obs.inputs, obs.inputs, params)
    K[np.diag_indices_from(K)] += params.noise_variance
    L = jittered_cholesky(K, what="training kernel matrix")
    alpha = cho_solve((L, True), obs.standardized_outputs, check_finite=False)
    return GpModel(params, obs, L, alpha)


def posterior(model: GpModel, points) -> tuple[np.ndarray, np.ndarray]:
    """Joint posterior mean and covariance (standardized scale) at ``points``."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[1] != model.dim:
        raise ValueError(f"points have {X.shape[1]} columns, model expects {model.dim}")
    Kss = kernel_matrix(X, X, model.params)
    if len(model.train_set) == 0:
        return np.zeros(len(X)), Kss
    Ks = kernel_matrix(model.train_set.inputs, X, model.params)
    mean = Ks.T @ model.alpha
    V = solve_triangular(model.factor, Ks, lower=True, check_finite=False)
    cov = Kss
    cov -= V.T @ V
    cov += cov.T
    cov *= 0.5
    diag = np.diag_indices_from(cov)
    cov[diag] = np.maximum(cov[diag], 0.0)
    return mean, cov


def log_marginal_likelihood(theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Log marginal likelihood and its gradient w.r.t. log-hyperparameters."""
    params = KernelParams.from_log_vector(theta)
    n, d = X.shape
    ls, s, noise = params.lengthscales, params.signal_variance, params.noise_variance
    r = _scaled_dist(X, X, ls)
    e = np.exp(-SQRT5 * r)
    K = s * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e
    Kf = K.copy()
    Kf[np.diag_indices(n)] += noise
    L = cholesky(Kf, lower=True, check_finite=False)
    alpha = cho_solve((L, True), y, check_finite=False)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi)

    Kinv = cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    # dK/dlog(l_i) = s (5/3)(1 + sqrt5 r) exp(-sqrt5 r) * (dx_i / l_i)^2
    M = W * (s * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e)
    Xs = X / ls
    grad_ls = 0.5 * (2.0 * (Xs * Xs).T @ M.sum(1) - 2.0 * np.einsum("ai,ab,bi->i", Xs, M, Xs))
    grad_s = 0.5 * np.sum(W * K)
    grad_n = 0.5 * noise * np.trace(W)
    return float(lml), np.concatenate([grad_ls, [grad_s, grad_n]])


def fit(
    obs: ObservationSet,
    bounds: HyperBounds = HyperBounds(),
    restarts: int = 3,
    rng: np.random.Generator | None = None,
    max_iter: int = 100,
    gtol: float = 1e-5,
    init: KernelParams | None = None,
) -> GpModel:
    """Maximum-likelihood fit by multi-start bounded ascent on log-hyperparameters.

    Starts are ``restarts`` log-uniform draws from ``bounds`` plus ``init`` when
    given (used to warm-start consecutive refits). The best local optimum wins.
    """
    if len(obs) < 2:
        raise ValueError(f"need at least 2 observations to fit, got {len(obs)}")
    if not np.all(np.isfinite(obs.inputs)):
        raise ValueError("observations contain non-finite inputs")
    rng = np.random.default_rng() if rng is None else rng
    d = obs.dim
    box = bounds.log_bounds(d)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    X, y = obs.inputs, obs.standardized_outputs

    starts = [] if init is None else [np.clip(init.to_log_vector(), lo, hi)]
    starts += [rng.uniform(lo, hi) for _ in range(max(restarts, 0))]
    if not starts:
        starts = [0.5 * (lo + hi)]

    def objective(theta):
        try:
            val, grad = log_marginal_likelihood(theta, X, y)
        except np.linalg.LinAlgError:
            return 1e10, np.zeros_like(theta)
        return -val, -grad

    best_theta, best_val = None, np.inf
    for theta0 in starts:
        res = minimize(
            objective, theta0, jac=True, method="L-BFGS-B", bounds=box,
            options={"maxiter": max_iter, "gtol": gtol},
        )
        theta = np.clip(res.x, lo, hi)
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_theta = float(res.fun), theta
    if best_theta is None:
        best_theta = starts[0]
    return build_model(obs, KernelParams.from_log_vector(best_theta))


def sample_joint(model: GpModel, candidates, rng: np.random.Generator, max_joint: int = 5000) -> np.ndarray:
    """One joint posterior draw over ``candidates`` (standardized scale)."""
    C = np.atleast_2d(np.asarray(candidates, dtype=float))
    if len(C) == 0:
        raise ValueError("no candidates")
    if len(C) > max_joint:
        raise ValueError(f"{len(C)} candidates exceed the joint-sampling cap {max_joint}")
    mean, cov = posterior(model, C)
    L = jittered_cholesky(cov, SAMPLING_LADDER, what="candidate posterior covariance")
    return mean + L @ rng.standard_normal(len(C))


def thompson_select(model: GpModel, candidates, rng: np.random.Generator, max_joint: int = 5000) -> int:
    """Index of the minimizer of one posterior sample path over ``candidates``."""
    if len(candidates) == 1:
        return 0
    return int(np.argmin(sample_joint(model, candidates, rng, max_joint)))
