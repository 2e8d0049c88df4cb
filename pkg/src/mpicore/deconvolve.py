"""
Regularized deconvolution of trace data.

Solves the Tikhonov problem ``min mu ||D rho||^2 + ||K_h rho - u||^2`` through
its Euler-Lagrange system ``(-mu L + K_h^2) rho = K_h u`` with conjugate
gradients.  ``K_h`` is the midpoint-rule discretisation of the convolution
with the trace kernel; ``D`` are forward differences and ``L = -D^T D`` the
five-point (seven-point in 3D) Laplacian, both with zero Dirichlet ghosts.
Everything is matrix-free.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np
from scipy import fft
from scipy.linalg import eigh_tridiagonal

from .grid import DensityField
from .kernels import KernelSpec, scalar_kernel

__all__ = [
    "ReconConfig",
    "KhOperator",
    "apply_kh",
    "apply_kh_direct",
    "kh_matrix",
    "apply_laplacian",
    "apply_gradient",
    "apply_gradient_adjoint",
    "el_operator",
    "CGResult",
    "MaxIterExceeded",
    "NonFiniteBreakdown",
    "cg_solve",
    "objective",
    "objective_gradient",
    "reconstruct",
    "power_iteration",
    "write_diagnostics",
]


@dataclass(frozen=True)
class ReconConfig:
    mu: float = 3e-4
    tau: float = 2e-3
    max_iter: int = 500
    spec: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def _check(grid, spec):
    if grid.n != spec.n:
        raise ValueError(f"grid is {grid.n}-D but kernel spec is {spec.n}-D")


# ---------------------------------------------------------------------------
# convolution K_h

def kh_matrix(grid, spec):
    """Dense ``K_h`` (size x size); only sensible for small grids."""
    _check(grid, spec)
    x = grid.centers()
    dist = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    return scalar_kernel(dist, spec) * grid.cell_volume


def apply_kh_direct(values, grid, spec):
    """``K_h`` applied by explicit summation over cell pairs."""
    _check(grid, spec)
    x = grid.centers()
    values = np.asarray(values, float).ravel()
    out = np.empty(grid.size)
    for i in range(grid.size):
        dist = np.sqrt(((x[i] - x) ** 2).sum(-1))
        out[i] = np.dot(scalar_kernel(dist, spec), values)
    return out * grid.cell_volume


class KhOperator:
    """Fast ``K_h``: the kernel depends only on index offsets, so the
    Toeplitz structure is embedded in a circulant of twice the size and
    applied with real FFTs."""

    def __init__(self, grid, spec):
        _check(grid, spec)
        self.grid = grid
        self.spec = spec
        self.padded = tuple(2 * s for s in grid.shape)
        offsets = []
        for s, dx in zip(grid.shape, grid.spacing):
            k = np.arange(2 * s)
            k = np.where(k < s, k, k - 2 * s)     # wrap-around offsets; k = -s is never used
            offsets.append(k * dx)
        mesh = np.meshgrid(*offsets, indexing="ij")
        dist = np.sqrt(sum(m**2 for m in mesh))
        stamp = scalar_kernel(dist, spec) * grid.cell_volume
        self._spectrum = fft.rfftn(stamp)

    def __call__(self, values):
        arr = np.asarray(values, float).reshape(self.grid.shape)
        conv = fft.irfftn(fft.rfftn(arr, s=self.padded) * self._spectrum, s=self.padded)
        return conv[tuple(slice(0, s) for s in self.grid.shape)].ravel()


def apply_kh(values, grid, spec):
    """``K_h`` applied to a flat field (or DensityField) via FFT."""
    if isinstance(values, DensityField):
        values = values.values
    return KhOperator(grid, spec)(values)


# ---------------------------------------------------------------------------
# differences and Laplacian

def apply_gradient(values, grid):
    """Forward differences ``D`` with zero ghosts on both ends of each axis.

    Returns one array per axis with ``N_j + 1`` entries along that axis, so
    that ``D^T D = -L`` exactly.
    """
    arr = np.asarray(values, float).reshape(grid.shape)
    out = []
    for axis, dx in enumerate(grid.spacing):
        pad = [(0, 0)] * grid.n
        pad[axis] = (1, 1)
        padded = np.pad(arr, pad)
        out.append(np.diff(padded, axis=axis) / dx)
    return out


def apply_gradient_adjoint(parts, grid):
    out = np.zeros(grid.shape)
    for axis, (g, dx) in enumerate(zip(parts, grid.spacing)):
        out -= np.diff(g, axis=axis) / dx
    return out.ravel()


def apply_laplacian(values, grid):
    """Five-point (2D) / seven-point (3D) Laplacian, zero Dirichlet ghosts."""
    arr = np.asarray(values, float).reshape(grid.shape)
    padded = np.pad(arr, 1)
    core = tuple(slice(1, -1) for _ in range(grid.n))
    out = np.zeros(grid.shape)
    for axis, dx in enumerate(grid.spacing):
        lo = list(core)
        hi = list(core)
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        out += (padded[tuple(lo)] + padded[tuple(hi)] - 2.0 * arr) / dx**2
    return out.ravel()


def el_operator(values, grid, cfg, kh=None):
    """Euler-Lagrange map ``rho -> (-mu L + K_h^2) rho``."""
    kh = kh or KhOperator(grid, cfg.spec)
    values = np.asarray(values, float).ravel()
    return -cfg.mu * apply_laplacian(values, grid) + kh(kh(values))


# ---------------------------------------------------------------------------
# conjugate gradients

class MaxIterExceeded(RuntimeWarning):
    """CG hit its iteration cap before reaching the tolerance."""


class NonFiniteBreakdown(ArithmeticError):
    """CG produced a non-finite or non-positive curvature value."""


@dataclass(eq=False)
class CGResult:
    x: np.ndarray
    iterations: int
    relative_residual: float
    converged: bool
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)

    def ritz_values(self):
        """Eigenvalues of the Lanczos matrix implied by the CG coefficients."""
        a, b = self.alphas, self.betas
        if not a:
            return np.zeros(0)
        diag = np.array([1.0 / a[0]] + [1.0 / a[j] + b[j - 1] / a[j - 1] for j in range(1, len(a))])
        off = np.array([np.sqrt(b[j]) / a[j] for j in range(len(a) - 1)])
        return eigh_tridiagonal(diag, off, eigvals_only=True)


def cg_solve(operator, rhs, tau, max_iter):
    """Conjugate gradients from a zero start for a symmetric PSD operator.

    Stops once ``||b - A x|| <= tau ||b||`` (checked on the true residual)
    or after ``max_iter`` steps.  On the cap a :class:`MaxIterExceeded`
    warning is issued and the iterate with the smallest residual is
    returned with ``converged=False``.
    """
    b = np.asarray(rhs, float).ravel()
    if not np.all(np.isfinite(b)):
        raise NonFiniteBreakdown("right-hand side is not finite")
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return CGResult(x, 0, 0.0, True)

    r = b.copy()
    p = r.copy()
    rr = r @ r
    best_x, best_res = x.copy(), 1.0
    alphas, betas = [], []
    lanczos_open = True
    for it in range(1, max_iter + 1):
        Ap = operator(p)
        pAp = p @ Ap
        if not np.isfinite(pAp) or pAp <= 0.0:
            raise NonFiniteBreakdown(f"curvature p^T A p = {pAp} at iteration {it}")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        if not np.isfinite(rr_new):
            raise NonFiniteBreakdown(f"non-finite residual at iteration {it}")
        res = np.sqrt(rr_new) / bnorm
        if lanczos_open:
            alphas.append(alpha)
        if res <= tau:
            # guard against drift of the recursively updated residual
            r = b - operator(x)
            rr_new = r @ r
            res = np.sqrt(rr_new) / bnorm
            if res <= tau:
                return CGResult(x, it, float(res), True, alphas, betas)
            p = r.copy()
            rr = rr_new
            lanczos_open = False
            continue
        if res < best_res:
            best_x, best_res = x.copy(), res
        beta = rr_new / rr
        if lanczos_open:
            betas.append(beta)
        p = r + beta * p
        rr = rr_new

    warnings.warn(f"CG did not reach tau={tau} in {max_iter} iterations", MaxIterExceeded, stacklevel=2)
    true_res = np.linalg.norm(b - operator(best_x)) / bnorm
    return CGResult(best_x, max_iter, float(true_res), False, alphas, betas[: len(alphas) - 1])


# ---------------------------------------------------------------------------
# Tikhonov problem

def objective(rho, u, grid, cfg, kh=None):
    """``mu ||D rho||^2 + ||K_h rho - u||^2``."""
    kh = kh or KhOperator(grid, cfg.spec)
    rho = np.asarray(getattr(rho, "values", rho), float).ravel()
    u = np.asarray(getattr(u, "values", u), float).ravel()
    reg = sum(float(np.sum(g * g)) for g in apply_gradient(rho, grid))
    fit = kh(rho) - u
    return cfg.mu * reg + float(fit @ fit)


def objective_gradient(rho, u, grid, cfg, kh=None):
    """Analytic gradient ``2(-mu L + K_h^2) rho - 2 K_h u``."""
    kh = kh or KhOperator(grid, cfg.spec)
    rho = np.asarray(getattr(rho, "values", rho), float).ravel()
    u = np.asarray(getattr(u, "values", u), float).ravel()
    return 2.0 * el_operator(rho, grid, cfg, kh) - 2.0 * kh(u)


def reconstruct(u, grid, cfg):
    """Deconvolve trace data ``u`` into a density estimate.

    Masked (unfitted) cells of a TraceField already hold 0 and enter as
    such.  Returns ``(DensityField, diagnostics)``; ``diagnostics`` holds
    ``iterations``, ``relative_residual``, ``objective``, ``masked_cells``
    and ``converged``.
    """
    if u.grid != grid:
        raise ValueError("trace field lives on a different grid")
    kh = KhOperator(grid, cfg.spec)
    data = np.asarray(u.values, float)
    mask = getattr(u, "mask", None)
    masked = 0 if mask is None else int(np.count_nonzero(~mask))
    result = cg_solve(lambda x: el_operator(x, grid, cfg, kh), kh(data), cfg.tau, cfg.max_iter)
    rho = DensityField(grid, result.x)
    diagnostics = {
        "iterations": result.iterations,
        "relative_residual": result.relative_residual,
        "objective": objective(result.x, data, grid, cfg, kh),
        "masked_cells": masked,
        "converged": result.converged,
    }
    return rho, diagnostics


def power_iteration(operator, size, steps=50, seed=0):
    """Largest-eigenvalue estimate of a symmetric operator."""
    x = np.random.default_rng(seed).standard_normal(size)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(steps):
        y = operator(x)
        lam = float(x @ y)
        x = y / np.linalg.norm(y)
    return lam


def write_diagnostics(path, diagnostics):
    with open(path, "w") as fh:
        for key in ("iterations", "relative_residual", "objective", "masked_cells"):
            value = diagnostics[key]
            fh.write(f"{key}={value:.17g}\n" if isinstance(value, float) else f"{key}={value}\n")
