"""Synthetic test problems, dummy/shift wrappers, and the unit working domain.

Registry names follow ``<function>-<d>d`` (e.g. ``levy-100d``), with a
``shifted-`` prefix for the randomly shifted variants. ``branin2`` and
``schaffer2`` pad their two effective dimensions with dummy coordinates up to
``d``; ``branin-2d`` and ``schaffer-2d`` are aliases without dummies.

Default boxes: Levy/Alpine [-10, 10]; Rastrigin/Ellipsoid/Sphere
[-5.12, 5.12]; Schaffer N.2 [-100, 100]; Branin [-5, 10] x [0, 15] (dummy
coordinates reuse [-5, 10]).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

SHIFT_STREAM = 0x5EED_D17A
PLACEMENT_STREAM = 0x5EED_91AC


def levy(x: np.ndarray) -> float:
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(np.pi * w[0]) ** 2
    mid = np.sum((w[:-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[:-1] + 1.0) ** 2))
    tail = (w[-1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[-1]) ** 2)
    return float(head + mid + tail)


def alpine(x: np.ndarray) -> float:
    return float(np.sum(np.abs(x * np.sin(x) + 0.1 * x)))


def rastrigin(x: np.ndarray) -> float:
    return float(10.0 * x.size + np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x)))


def ellipsoid(x: np.ndarray) -> float:
    return float(np.sum(np.arange(1, x.size + 1) * x * x))


def sphere(x: np.ndarray) -> float:
    return float(np.sum(x * x))


def schaffer2(x: np.ndarray) -> float:
    a, b = x[0] ** 2, x[1] ** 2
    return float(0.5 + (np.sin(a - b) ** 2 - 0.5) / (1.0 + 0.001 * (a + b)) ** 2)


def branin(x: np.ndarray) -> float:
    x1, x2 = x[0], x[1]
    b, c, t = 5.1 / (4 * np.pi**2), 5.0 / np.pi, 1.0 / (8 * np.pi)
    return float((x2 - b * x1**2 + c * x1 - 6.0) ** 2 + 10.0 * (1 - t) * np.cos(x1) + 10.0)


BRANIN_OPTIMA = np.array([[-np.pi, 12.275], [np.pi, 2.275], [9.42478, 2.475]])
BRANIN_MIN = float(branin(np.array([np.pi, 2.275])))


@dataclass
class Problem:
    """Box-constrained minimization problem.

    ``optimum`` holds one known global minimizer per row (``None`` when
    unknown). A problem produced by :func:`to_working_domain` keeps a
    reference to the original problem in ``original``.
    """

    name: str
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    func: Callable[[np.ndarray], float]
    optimum: np.ndarray | None = None
    optimal_value: float | None = None
    effective_dims: np.ndarray | None = None
    shift: np.ndarray | None = None
    original: "Problem | None" = field(default=None, repr=False)

    def __post_init__(self):
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.dim,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.dim,)).copy()
        if self.optimum is not None:
            self.optimum = np.atleast_2d(np.asarray(self.optimum, dtype=float))

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise ValueError(f"{self.name}: expected {self.dim} coordinates, got {x.size}")
        return float(self.func(x))

    def to_original(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.original is None:
            return u
        return self.original.lower + (self.original.upper - self.original.lower) * u

    def from_original(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.original is None:
            return x
        return (x - self.original.lower) / (self.original.upper - self.original.lower)


def _with_dummies(fn, lower2, upper2, d, effective: np.ndarray):
    def wrapped(x):
        return fn(x[effective])

    lower = np.full(d, lower2[0], dtype=float)
    upper = np.full(d, upper2[0], dtype=float)
    lower[effective], upper[effective] = lower2, upper2
    return wrapped, lower, upper


_SEPARABLE = {
    "levy": (levy, -10.0, 10.0, 1.0),
    "alpine": (alpine, -10.0, 10.0, 0.0),
    "rastrigin": (rastrigin, -5.12, 5.12, 0.0),
    "ellipsoid": (ellipsoid, -5.12, 5.12, 0.0),
    "sphere": (sphere, -5.12, 5.12, 0.0),
}
_LOW_DIM = {
    "branin2": (branin, np.array([-5.0, 0.0]), np.array([10.0, 15.0]), BRANIN_OPTIMA, BRANIN_MIN),
    "schaffer2": (schaffer2, np.array([-100.0, -100.0]), np.array([100.0, 100.0]), np.zeros((1, 2)), 0.0),
}
_ALIASES = {"branin": "branin2", "schaffer": "schaffer2"}
STANDARD_SUITE = (
    "levy-100d", "alpine-100d", "rastrigin-100d", "ellipsoid-100d", "schaffer2-100d",
    "branin2-500d", "shifted-levy-100d", "shifted-alpine-100d",
)
_PATTERN = re.compile(r"^(shifted-)?([a-z0-9]+)-(\d+)d$")


def registry() -> list[str]:
    """Canonical names; any ``<function>-<d>d`` combination is accepted."""
    return list(STANDARD_SUITE) + [f"{k}-2d" for k in _SEPARABLE] + ["branin-2d", "schaffer-2d"]


def make_problem(name: str, seed: int = 0, permute_effective: bool = False) -> Problem:
    """Build a registry problem.

    ``seed`` fixes the shift vector of shifted variants (and the effective
    dimension placement when ``permute_effective``), drawn from dedicated
    sub-streams so every method sees the same instance.
    """
    m = _PATTERN.match(name.strip().lower())
    if m is None:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(registry())} (or <function>-<d>d)")
    shifted, base, d = bool(m.group(1)), _ALIASES.get(m.group(2), m.group(2)), int(m.group(3))
    if d < 1:
        raise KeyError(f"problem {name!r} needs at least one dimension")

    if base in _SEPARABLE:
        fn, lo, hi, opt = _SEPARABLE[base]
        lower, upper = np.full(d, lo), np.full(d, hi)
        func, optimum, fmin, effective = fn, np.full((1, d), opt), 0.0, np.arange(d)
    elif base in _LOW_DIM:
        if d < 2:
            raise KeyError(f"{base} needs d >= 2")
        fn, lo2, hi2, opt2, fmin = _LOW_DIM[base]
        effective = np.arange(2)
        if permute_effective:
            placement = np.random.default_rng([seed, PLACEMENT_STREAM])
            effective = np.sort(placement.choice(d, size=2, replace=False))
        func, lower, upper = _with_dummies(fn, lo2, hi2, d, effective)
        optimum = np.zeros((len(opt2), d))
        optimum[:, effective] = opt2
    else:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(registry())} (or <function>-<d>d)")

    shift = None
    if shifted:
        shift = np.random.default_rng([seed, SHIFT_STREAM]).uniform(lower, upper)
        base_func = func

        def func(x, _f=base_func, _s=shift):
            return _f(x + _s)

        optimum = optimum - shift
        inside = np.all((optimum >= lower) & (optimum <= upper), axis=1)
        optimum = optimum[inside] if inside.any() else None
        if optimum is None:
            fmin = None

    canonical = f"{'shifted-' if shifted else ''}{base}-{d}d"
    return Problem(canonical, d, lower, upper, func, optimum, fmin, effective, shift)


def to_working_domain(problem: Problem) -> Problem:
    """Affine rescaling of the box to [0, 1]^d; no-op on already-scaled problems."""
    if problem.original is not None:
        return problem
    lo, span = problem.lower, problem.upper - problem.lower
    if np.any(~np.isfinite(span)) or np.any(span <= 0):
        raise ValueError(f"{problem.name}: box must be finite with positive widths")

    def func(u, _f=problem.func):
        return _f(lo + span * u)

    optimum = None if problem.optimum is None else (problem.optimum - lo) / span
    return Problem(problem.name, problem.dim, np.zeros(problem.dim), np.ones(problem.dim), func,
                   optimum, problem.optimal_value, problem.effective_dims, problem.shift, problem)


def latin_hypercube(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points in [0, 1]^d, one per stratum ``[k/n, (k+1)/n)`` in every dimension."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return qmc.LatinHypercube(d, seed=rng).random(n)


def distance_to_optimum(points, problem: Problem) -> np.ndarray:
    """Euclidean distance of each point (original coordinates) to the nearest known optimum.

    ``points`` may also be a run record, whose evaluated points are used.
    """
    points = getattr(points, "points", points)
    base = problem.original if problem.original is not None else problem
    if base.optimum is None:
        raise ValueError(f"{problem.name}: global optimum is unknown")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    diff = pts[:, None, :] - base.optimum[None, :, :]
    return np.sqrt(np.min(np.sum(diff * diff, axis=-1), axis=1))


def with_noise(problem: Problem, noise_std: float, rng: np.random.Generator) -> Problem:
    """Additive Gaussian observation noise; the optimum metadata is unchanged."""
    if noise_std <= 0:
        return problem

    def func(x, _f=problem.func):
        return _f(x) + noise_std * rng.standard_normal()

    return Problem(problem.name, problem.dim, problem.lower, problem.upper, func, problem.optimum,
                   problem.optimal_value, problem.effective_dims, problem.shift, problem.original)
