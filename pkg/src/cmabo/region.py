"""Hyper-ellipsoid local regions derived from a Gaussian search distribution.

A region is the set ``{x : (x - m)^T S^-1 (x - m) <= q}`` where ``S`` is the
effective covariance (``L^2 sigma^2 C``) and ``q`` is the chi-squared quantile
holding mass ``alpha``. With ``literal_chi2=True`` the unsquared Mahalanobis
distance is compared against the quantile instead, i.e. ``q`` is squared.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammainc

from .cma import SearchDistribution

DEFAULT_ALPHA = 0.9973
MAX_CANDIDATES = 5000


def chi2_cdf(q: float, dof: int) -> float:
    return float(gammainc(0.5 * dof, 0.5 * q)) if q > 0 else 0.0


def chi2_quantile(p: float, dof: int, tol: float = 1e-10) -> float:
    """Inverse chi-squared CDF by bracketing bisection with Newton steps."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    k = 0.5 * dof
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_cdf(hi, dof) < p:
        lo, hi = hi, 2.0 * hi
    q = 0.5 * (lo + hi)
    log_norm = math.lgamma(k) + k * math.log(2.0)
    for _ in range(200):
        err = chi2_cdf(q, dof) - p
        if err == 0.0:
            break
        if err > 0:
            hi = q
        else:
            lo = q
        dens = math.exp((k - 1.0) * math.log(q) - 0.5 * q - log_norm) if q > 0 else 0.0
        step = q - err / dens if dens > 0 else None
        q_new = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        # polish past the cdf tolerance until the iterate itself stops moving
        if abs(q_new - q) <= 1e-14 * max(1.0, q) and abs(err) <= tol:
            q = q_new
            break
        q = q_new
    return q


@dataclass(frozen=True)
class LocalRegion:
    center: np.ndarray
    eff_cov: np.ndarray = field(repr=False)
    threshold_sq: float
    factor: np.ndarray = field(repr=False)
    inv_factor: np.ndarray = field(repr=False)
    alpha: float = DEFAULT_ALPHA

    @property
    def dim(self) -> int:
        return self.center.size


def _factorize(cov: np.ndarray) -> np.ndarray:
    n = cov.shape[0]
    scale = max(float(np.trace(cov)) / n, 1e-300)
    for jitter in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
        try:
            return np.linalg.cholesky(cov + jitter * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(f"cannot factorize region covariance (trace {np.trace(cov):.3e})")


def region_from_moments(
    center, cov, scale: float = 1.0, alpha: float = DEFAULT_ALPHA, literal_chi2: bool = False
) -> LocalRegion:
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    center = np.asarray(center, dtype=float).ravel()
    eff = scale**2 * np.asarray(cov, dtype=float)
    eff = 0.5 * (eff + eff.T)
    L = _factorize(eff)
    inv_L = solve_triangular(L, np.eye(len(center)), lower=True)
    q = chi2_quantile(alpha, len(center))
    return LocalRegion(center, eff, q * q if literal_chi2 else q, L, inv_L, alpha)


def build_region(
    dist: SearchDistribution, scale: float = 1.0, alpha: float = DEFAULT_ALPHA, literal_chi2: bool = False
) -> LocalRegion:
    """Region of N(m, L^2 sigma^2 C) at confidence ``alpha``."""
    return region_from_moments(dist.mean, dist.covariance, scale, alpha, literal_chi2)


def mahalanobis_sq(x, region: LocalRegion) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != region.dim:
        raise ValueError(f"point dimension {x.shape[-1]} != region dimension {region.dim}")
    z = (x - region.center) @ region.inv_factor.T
    out = np.sum(z * z, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def region_radii(region: LocalRegion) -> np.ndarray:
    """Semi-axis lengths of the region boundary, descending."""
    vals = np.linalg.eigvalsh(region.eff_cov)
    return np.sqrt(region.threshold_sq * np.maximum(vals, 0.0))[::-1]


def default_n_candidates(d_c: int, cap: int = MAX_CANDIDATES) -> int:
    return int(min(100 * d_c, cap))


def sample_candidates(
    region: LocalRegion,
    n_c: int,
    rng: np.random.Generator,
    lower: float | np.ndarray = 0.0,
    upper: float | np.ndarray = 1.0,
) -> np.ndarray:
    """``n_c`` draws from N(center, eff_cov) restricted to the region, clipped to the box.

    Falls back to uniform-radius interior sampling if fewer than one in a
    thousand draws is accepted.
    """
    if n_c < 1:
        raise ValueError(f"n_c must be >= 1, got {n_c}")
    d = region.dim
    accepted: list[np.ndarray] = []
    n_acc = n_drawn = 0
    while n_acc < n_c and n_drawn < 100 * n_c:
        batch = max(n_c - n_acc, 16)
        z = rng.standard_normal((batch, d))
        n_drawn += batch
        keep = z[np.sum(z * z, axis=1) <= region.threshold_sq]
        if len(keep):
            accepted.append(keep[: n_c - n_acc])
            n_acc += len(accepted[-1])
        if n_drawn >= 1000 and n_acc < 1e-3 * n_drawn:
            break
    z = np.concatenate(accepted) if accepted else np.zeros((0, d))
    if len(z) < n_c:
        extra = n_c - len(z)
        u = rng.standard_normal((extra, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        radius = math.sqrt(region.threshold_sq) * rng.uniform(size=(extra, 1)) ** (1.0 / d)
        z = np.concatenate([z, u * radius])
    x = region.center + z @ region.factor.T
    return np.clip(x, lower, upper)

