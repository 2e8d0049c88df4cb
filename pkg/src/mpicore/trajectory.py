"""
Field-free-point scan trajectories.

Trajectories are handed to the rest of the pipeline as plain arrays of
times, positions and velocities (:class:`Samples`), so any source can be
used, including several trajectories concatenated together.  Lissajous
curves are the built-in generator.
"""
from dataclasses import dataclass

import numpy as np

from .grid import cell_indices

__all__ = [
    "TrajectoryConfig",
    "Samples",
    "lissajous_position",
    "lissajous_velocity",
    "sample_trajectory",
    "concatenate",
    "coverage_report",
    "CoverageReport",
    "RANK_RTOL",
]

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class TrajectoryConfig:
    """Integer Lissajous frequencies (one per axis) and sample count ``K``."""

    freqs: tuple = (101, 102)
    K: int = 200_000

    def __post_init__(self):
        freqs = tuple(self.freqs)
        if not 1 <= len(freqs) <= 3:
            raise ValueError("need one frequency per axis (1 to 3 axes)")
        if any(int(m) != m or m < 1 for m in freqs):
            raise ValueError(f"frequencies must be positive integers, got {freqs}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        object.__setattr__(self, "freqs", tuple(int(m) for m in freqs))

    @property
    def n(self):
        return len(self.freqs)


@dataclass(frozen=True, eq=False)
class Samples:
    """Time samples ``t`` (K,), FFP positions ``r`` (K, n), velocities ``v`` (K, n)."""

    t: np.ndarray
    r: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, float).ravel()
        r = np.atleast_2d(np.asarray(self.r, float))
        v = np.atleast_2d(np.asarray(self.v, float))
        if r.shape != v.shape or r.shape[0] != t.size:
            raise ValueError("t, r and v must describe the same number of samples")
        for name, arr in (("t", t), ("r", r), ("v", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.t.size

    @property
    def n(self):
        return self.r.shape[1]


def lissajous_position(t, cfg):
    t = np.asarray(t, float)
    m = np.asarray(cfg.freqs, float)
    return np.sin(2 * np.pi * m * t[..., None])


def lissajous_velocity(t, cfg):
    t = np.asarray(t, float)
    m = np.asarray(cfg.freqs, float)
    return 2 * np.pi * m * np.cos(2 * np.pi * m * t[..., None])


def sample_trajectory(cfg):
    """``K`` equidistant samples ``t_k = k/K``, ``k = 0..K-1``, on the closed curve."""
    t = np.arange(cfg.K) / cfg.K
    return Samples(t, lissajous_position(t, cfg), lissajous_velocity(t, cfg))


def concatenate(*parts):
    """Join several sample sequences into one (e.g. mixed trajectories)."""
    return Samples(
        np.concatenate([p.t for p in parts]),
        np.concatenate([p.r for p in parts]),
        np.concatenate([p.v for p in parts]),
    )


@dataclass(frozen=True, eq=False)
class CoverageReport:
    counts: np.ndarray      # samples per cell, flat row-major
    ranks: np.ndarray       # numerical rank of each cell's velocity matrix
    n: int

    @property
    def deficient(self):
        """Flat indices of cells whose velocities do not span R^n."""
        return np.flatnonzero(self.ranks < self.n)


def numerical_rank(V, rtol=RANK_RTOL):
    """Rank of an ``n x m`` matrix: singular values above ``rtol * s_max``."""
    if V.size == 0:
        return 0
    s = np.linalg.svd(V, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def coverage_report(grid, samples):
    """Per-cell sample counts and velocity ranks for a trajectory."""
    if len(samples) == 0:
        raise ValueError("no samples")
    idx, inside = cell_indices(grid, samples.r)
    flat = np.ravel_multi_index(idx[inside].T, grid.shape)
    counts = np.bincount(flat, minlength=grid.size)
    ranks = np.zeros(grid.size, dtype=np.int64)
    order = np.argsort(flat, kind="stable")
    vel = samples.v[inside][order]
    bounds = np.concatenate([[0], np.cumsum(counts)])
    for cell in np.flatnonzero(counts):
        ranks[cell] = numerical_rank(vel[bounds[cell]:bounds[cell + 1]].T)
    return CoverageReport(counts, ranks, grid.n)
