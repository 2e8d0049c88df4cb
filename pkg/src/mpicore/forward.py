"""
Discrete forward model.

The core operator ``A_h[rho](r)`` is the matrix-valued convolution of the
density with :func:`~mpicore.kernels.matrix_kernel`, discretised by the
summed midpoint rule over the cell centres.  The time signal at a sample is
``s_k = A_h[rho](r_k) v_k``.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .kernels import _radial_parts
from .trajectory import Samples

__all__ = [
    "SignalSeries",
    "core_operator_at",
    "core_operators",
    "synthesize_signal",
    "add_noise",
    "noise_level",
    "write_signal",
    "read_signal",
]


@dataclass(frozen=True, eq=False)
class SignalSeries:
    """Trajectory samples with the signal vector ``s`` (K, n) for each one."""

    samples: Samples
    s: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.s, float))
        if s.shape != self.samples.r.shape:
            raise ValueError("signal must have one n-vector per sample")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    def __len__(self):
        return len(self.samples)

    @property
    def n(self):
        return self.samples.n


@njit(parallel=True, cache=True)
def _core_operators(points, centers, weights, h, cutoff, coeffs):
    # weights = rho_j * cell volume over the support of rho only
    m, n = points.shape
    out = np.zeros((m, n, n))
    for k in prange(m):
        acc = np.zeros((n, n))
        y = np.empty(n)
        for j in range(centers.shape[0]):
            d2 = 0.0
            for a in range(n):
                y[a] = points[k, a] - centers[j, a]
                d2 += y[a] * y[a]
            d = np.sqrt(d2)
            w = weights[j]
            if d == 0.0:
                for a in range(n):
                    acc[a, a] += w / (3.0 * h)
                continue
            radial, tangential = _radial_parts(d, h, cutoff, coeffs)
            c = w * (radial - tangential) / d2
            for a in range(n):
                acc[a, a] += w * tangential
                for b in range(a, n):
                    acc[a, b] += c * y[a] * y[b]
        for a in range(n):
            for b in range(a, n):
                out[k, a, b] = acc[a, b]
                out[k, b, a] = acc[a, b]
    return out


def _support(rho):
    values = rho.values
    nz = np.flatnonzero(values)
    centers = np.ascontiguousarray(rho.grid.centers()[nz])
    return centers, values[nz] * rho.grid.cell_volume


def core_operators(rho, spec, points):
    """``A_h[rho]`` at each of ``points`` (m, n); returns shape (m, n, n)."""
    if rho.grid.n != spec.n:
        raise ValueError(f"density is {rho.grid.n}-D but kernel spec is {spec.n}-D")
    points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, float)))
    if points.shape[1] != spec.n:
        raise ValueError("points do not match the kernel dimension")
    centers, weights = _support(rho)
    return _core_operators(points, centers, weights, float(spec.h), float(spec.series_cutoff), spec.coeffs)


def core_operator_at(rho, spec, r):
    """Midpoint-rule value of the MPI core operator at one point ``r``."""
    return core_operators(rho, spec, np.asarray(r, float).reshape(1, -1))[0]


def synthesize_signal(rho, spec, samples):
    """Noise-free signal ``s_k = A_h[rho](r_k) v_k`` along the samples."""
    if not np.all(np.isfinite(samples.v)):
        raise ValueError("sample velocities must be finite")
    A = core_operators(rho, spec, samples.r)
    return SignalSeries(samples, np.einsum("kab,kb->ka", A, samples.v))


def noise_level(signal, level):
    """Noise amplitude ``level * max_k |s_k|`` (Euclidean norm per sample)."""
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if len(signal) == 0:
        return 0.0
    return float(level * np.max(np.linalg.norm(signal.s, axis=1)))


def add_noise(signal, level, seed):
    """Add i.i.d. Gaussian noise to every signal component.

    Returns the noisy series and the amplitude ``eps`` used.  The normal
    draws come from one generator seeded by ``seed`` and consumed in sample
    order, so the result depends only on ``(signal, level, seed)``.
    """
    eps = noise_level(signal, level)
    if eps == 0.0:
        return signal, 0.0
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(signal.s.shape)
    return SignalSeries(signal.samples, signal.s + eps * noise), eps


def write_signal(path, signal):
    """CSV with columns ``t, r1..rn, v1..vn, s1..sn``."""
    n = signal.n
    cols = ["t"] + [f"{p}{j + 1}" for p in "rvs" for j in range(n)]
    data = np.column_stack([signal.samples.t, signal.samples.r, signal.samples.v, signal.s])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(cols), comments="")


def read_signal(path):
    with open(path) as fh:
        cols = fh.readline().strip().split(",")
    n = (len(cols) - 1) // 3
    expected = ["t"] + [f"{p}{j + 1}" for p in "rvs" for j in range(n)]
    if cols != expected:
        raise ValueError(f"{path}: unexpected signal columns {cols}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.zeros((0, 1 + 3 * n))
    samples = Samples(data[:, 0], data[:, 1:1 + n], data[:, 1 + n:1 + 2 * n])
    return SignalSeries(samples, data[:, 1 + 2 * n:])
