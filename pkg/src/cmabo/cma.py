"""CMA search-distribution state machine.

Default hyperparameters, the rank-based mean / covariance / step-size update
with evolution paths, and restart detection. Every function is a pure state
transition: ``update`` returns a fresh :class:`SearchDistribution`.

Two readings are fixed here and switchable where it matters:

* the step-size path smooths with ``c_c`` (literal form); pass
  ``canonical_sigma_path=True`` to use ``c_sigma`` in both the decay and the
  normalization instead;
* the step-size factor compares ``|p_sigma|`` against ``sqrt(d)`` (not the
  expected norm of a standard normal vector).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class CmaParams:
    d: int
    lam: int
    mu: int
    weights: np.ndarray = field(repr=False)
    mu_eff: float
    mu_eff_neg: float
    c_m: float
    c_1: float
    c_mu: float
    c_c: float
    c_sigma: float
    d_sigma: float


def default_params(d: int, lam: int | None = None, mu: int | None = None) -> CmaParams:
    """Default CMA hyperparameters for dimension ``d``.

    ``lam`` defaults to ``4 + floor(3 + ln d)``; ``mu`` to ``floor(lam / 2)``.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    lam = 4 + math.floor(3 + math.log(d)) if lam is None else int(lam)
    mu = lam // 2 if mu is None else int(mu)
    if not 1 <= mu <= lam:
        raise ValueError(f"need 1 <= mu <= lambda, got mu={mu}, lambda={lam}")

    raw = math.log((lam + 1) / 2) - np.log(np.arange(1, lam + 1))
    pos, neg = raw[:mu], raw[mu:]
    mu_eff = pos.sum() ** 2 / np.sum(pos**2)
    neg_nz = neg[neg < 0]
    mu_eff_neg = neg_nz.sum() ** 2 / np.sum(neg_nz**2) if neg_nz.size else 0.0

    c_m = 1.0
    c_1 = 2.0 / ((d + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2) ** 2 + mu_eff))
    c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d)
    c_sigma = (2.0 + mu_eff) / (d + 5.0 + 2.0 * mu_eff)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (d + 1.0)) - 1.0) + c_sigma

    weights = np.zeros(lam)
    weights[:mu] = pos / pos.sum()
    if neg_nz.size:
        alpha_neg = [1.0 + 2.0 * mu_eff_neg / (2.0 + mu_eff)]
        if c_mu > 0:
            alpha_neg += [1.0 + c_1 / c_mu, (1.0 - c_1 - c_mu) / (d * c_mu)]
        # negative raw weights scaled so that they sum to -min(...)
        weights[mu:] = np.where(neg < 0, min(alpha_neg) * neg / np.abs(neg_nz.sum()), 0.0)

    return CmaParams(d, lam, mu, weights, float(mu_eff), float(mu_eff_neg),
                     c_m, c_1, c_mu, c_c, c_sigma, d_sigma)


@dataclass(frozen=True)
class SearchDistribution:
    mean: np.ndarray
    step_size: float
    shape: np.ndarray = field(repr=False)
    path_c: np.ndarray = field(repr=False)
    path_sigma: np.ndarray = field(repr=False)
    generation: int = 0

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def covariance(self) -> np.ndarray:
        return self.step_size**2 * self.shape

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` draws from N(m, sigma^2 C)."""
        vals, vecs = np.linalg.eigh(self.shape)
        root = vecs * np.sqrt(np.maximum(vals, 0.0))
        return self.mean + self.step_size * rng.standard_normal((n, self.dim)) @ root.T


@dataclass(frozen=True)
class RankedPopulation:
    points: np.ndarray
    values: np.ndarray
    order: np.ndarray

    @classmethod
    def from_evaluations(cls, points, values) -> "RankedPopulation":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.asarray(values, dtype=float).ravel()
        if len(points) != len(values):
            raise ValueError(f"{len(points)} points but {len(values)} values")
        return cls(points, values, np.argsort(values, kind="stable"))

    @property
    def ranked_points(self) -> np.ndarray:
        return self.points[self.order]


def init_distribution(points, values, domain_length: float = 1.0) -> SearchDistribution:
    """Start at the best evaluated point with C = I and sigma = 0.3 * (u - l)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    if len(values) == 0:
        raise ValueError("init_distribution needs at least one evaluated point")
    best = int(np.argmin(values))
    d = points.shape[1]
    return SearchDistribution(
        mean=points[best].copy(),
        step_size=0.3 * domain_length,
        shape=np.eye(d),
        path_c=np.zeros(d),
        path_sigma=np.zeros(d),
        generation=0,
    )


def eigen_floor(C: np.ndarray, rel_floor: float = 1e-12) -> np.ndarray:
    """Symmetrize and clamp eigenvalues at ``rel_floor * max(1, trace/d)``."""
    C = 0.5 * (C + C.T)
    floor = rel_floor * max(1.0, float(np.trace(C)) / C.shape[0])
    vals, vecs = np.linalg.eigh(C)
    if vals.min() >= floor:
        return C
    C = (vecs * np.maximum(vals, floor)) @ vecs.T
    return 0.5 * (C + C.T)


def inverse_sqrt(C: np.ndarray, rel_floor: float = 1e-12) -> np.ndarray:
    C = 0.5 * (np.asarray(C, dtype=float) + np.asarray(C, dtype=float).T)
    floor = rel_floor * max(1.0, float(np.trace(C)) / C.shape[0])
    vals, vecs = np.linalg.eigh(C)
    vals = np.maximum(vals, floor)
    return (vecs / np.sqrt(vals)) @ vecs.T


def update(
    dist: SearchDistribution,
    params: CmaParams,
    pop: RankedPopulation,
    canonical_sigma_path: bool = False,
    rel_floor: float = 1e-12,
) -> SearchDistribution:
    """One generation of the CMA update on a ranked population of exactly ``lam`` points."""
    d, lam = params.d, params.lam
    if pop.points.shape != (lam, d):
        raise ValueError(f"population must be {lam}x{d}, got {pop.points.shape}")
    if not (np.all(np.isfinite(pop.points)) and np.all(np.isfinite(pop.values))):
        raise ValueError("population contains non-finite values")

    m_old, sigma, C_old = dist.mean, dist.step_size, dist.shape
    w = params.weights
    diffs = pop.ranked_points - m_old

    m_new = m_old + params.c_m * (w[: params.mu] @ diffs[: params.mu])
    step = (m_new - m_old) / sigma

    c_c = params.c_c
    p_c = (1 - c_c) * dist.path_c + math.sqrt(c_c * (2 - c_c) * params.mu_eff) * step

    rank_mu = (diffs * w[:, None]).T @ diffs / sigma**2
    C_new = (1 - params.c_1 - params.c_mu) * C_old + params.c_mu * rank_mu + params.c_1 * np.outer(p_c, p_c)
    if params.c_1 == 0.0 and params.c_mu == 0.0:
        C_new = C_old.copy()
    else:
        C_new = eigen_floor(C_new, rel_floor)

    c_s = params.c_sigma if canonical_sigma_path else c_c
    p_s = (1 - c_s) * dist.path_sigma + math.sqrt(c_s * (2 - c_s) * params.mu_eff) * (
        inverse_sqrt(C_old, rel_floor) @ step
    )

    expo = params.c_sigma / params.d_sigma * (np.linalg.norm(p_s) / math.sqrt(d) - 1.0)
    # a degenerate C can blow the whitened path up; keep sigma finite so the restart check sees it
    beta = math.exp(min(expo, 700.0))
    return SearchDistribution(m_new, sigma * beta, C_new, p_c, p_s, dist.generation + 1)


@dataclass(frozen=True)
class RestartConfig:
    """Restart triggers. ``flat_generations=None`` means ``10 + ceil(30 d / lam)``."""

    flat_generations: int | None = None
    flat_tol: float = 1e-9
    cond_max: float = 1e14
    sigma_min: float = 1e-8
    sigma_max_factor: float = 10.0

    def n_flat(self, params: CmaParams) -> int:
        if self.flat_generations is not None:
            return self.flat_generations
        return 10 + math.ceil(30 * params.d / params.lam)


def should_restart(
    dist: SearchDistribution,
    params: CmaParams,
    best_history,
    config: RestartConfig = RestartConfig(),
    initial_step_size: float = 0.3,
) -> bool:
    """True when the best value stalls, C degenerates, or sigma leaves its band.

    ``best_history`` holds the best-so-far value of the local run after each
    generation.
    """
    n_flat = config.n_flat(params)
    hist = list(best_history)
    if len(hist) >= n_flat:
        ref, last = hist[-n_flat], hist[-1]
        if ref - last <= config.flat_tol * abs(ref):
            return True
    vals = np.linalg.eigvalsh(dist.shape)
    if vals.min() <= 0 or vals.max() / vals.min() > config.cond_max:
        return True
    return not (config.sigma_min <= dist.step_size <= config.sigma_max_factor * initial_step_size)
