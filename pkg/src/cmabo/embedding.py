"""Sparse signed subspace embeddings and their least-squares inverse.

Coordinates are centered: the input box is [-1, 1]^d and the target box is
[-1, 1]^d_V, so every signed coordinate copy stays inside the box.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cma import eigen_floor


@dataclass(frozen=True)
class Embedding:
    """Each input dimension ``i`` reads target coordinate ``assignment[i]`` times ``signs[i]``."""

    d: int
    target_dim: int
    assignment: np.ndarray
    signs: np.ndarray
    bin_size: int = 3
    Q: np.ndarray = field(init=False, repr=False)
    P: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        s = np.asarray(self.signs, dtype=float)
        if a.shape != (self.d,) or s.shape != (self.d,):
            raise ValueError("assignment and signs must have one entry per input dimension")
        if a.min() < 0 or a.max() >= self.target_dim:
            raise ValueError("assignment refers to a non-existent target dimension")
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "signs", s)
        Q = np.zeros((self.d, self.target_dim))
        Q[np.arange(self.d), a] = s
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "P", compute_P(self))

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.target_dim)

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == j)


def compute_P(emb: Embedding) -> np.ndarray:
    """``(Q^T Q)^-1 Q^T``: row j averages the signed inputs assigned to j."""
    counts = np.bincount(emb.assignment, minlength=emb.target_dim)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"target dimensions {empty} have no assigned inputs")
    P = np.zeros((emb.target_dim, emb.d))
    P[emb.assignment, np.arange(emb.d)] = emb.signs / counts[emb.assignment]
    return P


def make_embedding(d: int, target_dim: int, rng: np.random.Generator, bin_size: int = 3) -> Embedding:
    """Random even partition of the inputs over target dims with random signs."""
    if not 1 <= target_dim <= d:
        raise ValueError(f"need 1 <= target_dim <= d, got target_dim={target_dim}, d={d}")
    perm = rng.permutation(d)
    assignment = np.empty(d, dtype=int)
    for j, chunk in enumerate(np.array_split(perm, target_dim)):
        assignment[chunk] = j
    signs = rng.choice([-1.0, 1.0], size=d)
    return Embedding(d, target_dim, assignment, signs, bin_size)


def identity_embedding(d: int, bin_size: int = 3) -> Embedding:
    return Embedding(d, d, np.arange(d), np.ones(d), bin_size)


def project_up(emb: Embedding, v, lower: float = -1.0, upper: float = 1.0) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.clip(v[..., emb.assignment] * emb.signs, lower, upper)


def project_down(emb: Embedding, x) -> np.ndarray:
    return np.asarray(x, dtype=float) @ emb.P.T


def project_distribution(emb: Embedding, mean, cov) -> tuple[np.ndarray, np.ndarray]:
    """Push N(mean, cov) on the input space forward through ``P``."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if mean.shape != (emb.d,) or cov.shape != (emb.d, emb.d):
        raise ValueError(f"expected mean ({emb.d},) and covariance ({emb.d}, {emb.d})")
    P = emb.P
    return P @ mean, eigen_floor(P @ cov @ P.T)


def increase_dim(emb: Embedding, observations, rng: np.random.Generator) -> tuple[Embedding, np.ndarray]:
    """Split every target dim into up to ``bin_size`` children, copying coordinates.

    Returns the new embedding and the observations re-expressed in the new
    target space; their up-projections are unchanged.
    """
    if emb.target_dim >= emb.d:
        raise ValueError("target space already has full dimension; restart instead")
    V = np.asarray(observations, dtype=float).reshape(-1, emb.target_dim)
    assignment = np.empty(emb.d, dtype=int)
    parent = []
    for j in range(emb.target_dim):
        members = rng.permutation(emb.members(j))
        n_children = min(emb.bin_size, len(members))
        for chunk in np.array_split(members, n_children):
            assignment[chunk] = len(parent)
            parent.append(j)
    new = Embedding(emb.d, len(parent), assignment, emb.signs.copy(), emb.bin_size)
    return new, V[:, parent]
