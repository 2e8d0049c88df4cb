"""
Langevin function and the convolution kernels of the MPI core operator.

All kernels act on nondimensional offsets ``y = r - x`` inside the field of
view ``[-1, 1]^n`` and depend on the resolution parameter ``h``:

* ``langevin(z)``            L(z) = coth(z) - 1/z
* ``langevin_deriv(z)``      L'(z) = 1/z^2 - 1/sinh^2(z)
* ``f_profile(z, n)``        f(z) = L'(z) + (n - 1) L(z) / z
* ``scalar_kernel(|y|)``     kappa_h(y) = f(|y|/h) / h, the trace kernel
* ``vector_kernel(y)``       L(|y|/h) y/|y|, the flux integrand
* ``matrix_kernel(y)``       gradient of the flux integrand
* ``ideal_kernel(|y|, n)``   (n - 1)/|y|, the h -> 0 limit for n > 1

Near the origin the closed forms cancel catastrophically, so below
``series_cutoff`` the odd Bernoulli series of L is used instead.
"""
from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np
from numba import njit

__all__ = [
    "KernelSpec",
    "BernoulliTable",
    "bernoulli_numbers",
    "langevin",
    "langevin_deriv",
    "langevin_over_z",
    "f_profile",
    "scalar_kernel",
    "ideal_kernel",
    "vector_kernel",
    "matrix_kernel",
]

DEFAULT_SERIES_TERMS = 40
DEFAULT_SERIES_CUTOFF = 0.5


def bernoulli_numbers(m):
    """Exact Bernoulli numbers ``B_0..B_m`` (convention ``B_1 = -1/2``).

    Uses the Akiyama-Tanigawa algorithm in rational arithmetic, so there is
    no round-off at all.
    """
    a = [Fraction(0)] * (m + 1)
    out = []
    for i in range(m + 1):
        a[i] = Fraction(1, i + 1)
        for j in range(i, 0, -1):
            a[j - 1] = j * (a[j - 1] - a[j])
        out.append(a[0])
    # Akiyama-Tanigawa yields B_1 = +1/2
    if m >= 1:
        out[1] = -out[1]
    return out


@dataclass(frozen=True)
class BernoulliTable:
    """Bernoulli numbers ``B_0..B_{2K}`` as exact rationals and floats."""

    exact: tuple

    @classmethod
    def build(cls, terms=DEFAULT_SERIES_TERMS):
        return cls(tuple(bernoulli_numbers(2 * terms)))

    @property
    def values(self):
        return np.array([float(b) for b in self.exact])

    def langevin_coefficients(self):
        """``a_k = 2^(2k) B_(2k) / (2k)!`` for ``k = 1..K`` as floats.

        L(z) = sum_k a_k z^(2k-1).
        """
        terms = (len(self.exact) - 1) // 2
        return np.array(
            [float(Fraction(4**k) * self.exact[2 * k] / factorial(2 * k)) for k in range(1, terms + 1)]
        )


_TABLE = BernoulliTable.build(DEFAULT_SERIES_TERMS)
_COEFFS = _TABLE.langevin_coefficients()


@dataclass(frozen=True)
class KernelSpec:
    """Dimension, resolution and evaluation policy for the kernels."""

    n: int = 2
    h: float = 0.01
    series_cutoff: float = DEFAULT_SERIES_CUTOFF
    series_terms: int = DEFAULT_SERIES_TERMS

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension n must be 1, 2 or 3, got {self.n}")
        if not self.h > 0:
            raise ValueError(f"resolution parameter h must be positive, got {self.h}")
        if not 0 < self.series_cutoff < np.pi:
            raise ValueError("series_cutoff must lie in (0, pi)")
        if self.series_terms < 1:
            raise ValueError("series_terms must be >= 1")

    @property
    def coeffs(self):
        return _coefficients(self.series_terms)


_COEFF_CACHE = {DEFAULT_SERIES_TERMS: _COEFFS}


def _coefficients(terms):
    if terms not in _COEFF_CACHE:
        _COEFF_CACHE[terms] = BernoulliTable.build(terms).langevin_coefficients()
    return _COEFF_CACHE[terms]


# ---------------------------------------------------------------------------
# scalar jitted primitives, also used inside the forward-model loops

@njit(cache=True)
def _series_langevin_over_z(z, coeffs):
    # L(z)/z = sum_k a_k z^(2k-2), Horner in z^2
    z2 = z * z
    acc = 0.0
    for k in range(coeffs.shape[0] - 1, -1, -1):
        acc = acc * z2 + coeffs[k]
    return acc


@njit(cache=True)
def _series_langevin_deriv(z, coeffs):
    # L'(z) = sum_k a_k (2k-1) z^(2k-2)
    z2 = z * z
    acc = 0.0
    for k in range(coeffs.shape[0] - 1, -1, -1):
        acc = acc * z2 + coeffs[k] * (2 * k + 1)
    return acc


@njit(cache=True)
def _series_f(z, n, coeffs):
    # f(z) = sum_k a_k (2k - 2 + n) z^(2k-2)
    z2 = z * z
    acc = 0.0
    for k in range(coeffs.shape[0] - 1, -1, -1):
        acc = acc * z2 + coeffs[k] * (2 * k + n)
    return acc


@njit(cache=True)
def _closed_pair(z):
    """Return (L(z), L'(z)) for z > 0 from a single exponential."""
    e = np.exp(-2.0 * z)
    one_m = 1.0 - e
    coth = (1.0 + e) / one_m
    inv_sinh2 = 4.0 * e / (one_m * one_m)
    inv_z = 1.0 / z
    return coth - inv_z, inv_z * inv_z - inv_sinh2


@njit(cache=True)
def _langevin_scalar(z, cutoff, coeffs):
    az = abs(z)
    if az < cutoff:
        return z * _series_langevin_over_z(az, coeffs)
    lz, _ = _closed_pair(az)
    return lz if z > 0 else -lz


@njit(cache=True)
def _langevin_deriv_scalar(z, cutoff, coeffs):
    az = abs(z)
    if az < cutoff:
        return _series_langevin_deriv(az, coeffs)
    _, dl = _closed_pair(az)
    return dl


@njit(cache=True)
def _langevin_over_z_scalar(z, cutoff, coeffs):
    az = abs(z)
    if az < cutoff:
        return _series_langevin_over_z(az, coeffs)
    lz, _ = _closed_pair(az)
    return lz / az


@njit(cache=True)
def _f_scalar(z, n, cutoff, coeffs):
    az = abs(z)
    if az < cutoff:
        return _series_f(az, n, coeffs)
    lz, dl = _closed_pair(az)
    return dl + (n - 1) * lz / az


@njit(cache=True)
def _radial_parts(d, h, cutoff, coeffs):
    """Radial and tangential eigenvalues of the matrix kernel at distance d.

    The matrix kernel is ``radial * yy^T/|y|^2 + tangential * (I - yy^T/|y|^2)``
    with ``radial = L'(z)/h`` and ``tangential = L(z)/|y|``, z = d/h.
    """
    z = d / h
    if z < cutoff:
        return _series_langevin_deriv(z, coeffs) / h, _series_langevin_over_z(z, coeffs) / h
    lz, dl = _closed_pair(z)
    return dl / h, lz / d


# ---------------------------------------------------------------------------
# public array API

@njit(cache=True)
def _map_langevin(z, cutoff, coeffs, out, which):
    for i in range(z.shape[0]):
        if which == 0:
            out[i] = _langevin_scalar(z[i], cutoff, coeffs)
        elif which == 1:
            out[i] = _langevin_deriv_scalar(z[i], cutoff, coeffs)
        else:
            out[i] = _langevin_over_z_scalar(z[i], cutoff, coeffs)


@njit(cache=True)
def _map_f(z, n, cutoff, coeffs, out):
    for i in range(z.shape[0]):
        out[i] = _f_scalar(z[i], n, cutoff, coeffs)


def _map(which, z, cutoff, terms):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("Langevin kernels need finite input")
    flat = np.ascontiguousarray(z.ravel())
    out = np.empty_like(flat)
    _map_langevin(flat, float(cutoff), _coefficients(terms), out, which)
    return out.reshape(z.shape) if z.ndim else float(out[0])


def langevin(z, series_cutoff=DEFAULT_SERIES_CUTOFF, series_terms=DEFAULT_SERIES_TERMS):
    """Langevin function ``coth(z) - 1/z`` (0 at z = 0)."""
    return _map(0, z, series_cutoff, series_terms)


def langevin_deriv(z, series_cutoff=DEFAULT_SERIES_CUTOFF, series_terms=DEFAULT_SERIES_TERMS):
    """Derivative ``1/z^2 - 1/sinh^2(z)`` of the Langevin function (1/3 at 0)."""
    return _map(1, z, series_cutoff, series_terms)


def langevin_over_z(z, series_cutoff=DEFAULT_SERIES_CUTOFF, series_terms=DEFAULT_SERIES_TERMS):
    """``L(z)/z`` evaluated without cancellation (1/3 at 0)."""
    return _map(2, z, series_cutoff, series_terms)


def f_profile(z, n, spec=None, method="auto"):
    """Radial profile ``f(z) = L'(z) + (n-1) L(z)/z`` of the trace kernel.

    Parameters
    ----------
    z : float or array_like
    n : int
        Spatial dimension.
    spec : KernelSpec, optional
        Supplies the series cutoff and number of terms.
    method : {"auto", "series", "closed"}
        ``"series"`` forces the Bernoulli series and raises ``ValueError``
        for ``|z| >= pi`` (outside its radius of convergence).
        ``"closed"`` forces the hyperbolic closed form, which loses accuracy
        for tiny ``|z|`` and is undefined at 0.
    """
    spec = spec or KernelSpec(n=n)
    z = np.asarray(z, dtype=float)
    if method == "series":
        if np.any(np.abs(z) >= np.pi):
            raise ValueError("series evaluation of f requires |z| < pi; use the closed form")
        cutoff = np.inf
    elif method == "closed":
        cutoff = 0.0
    elif method == "auto":
        cutoff = spec.series_cutoff
    else:
        raise ValueError(f"unknown method {method!r}")
    flat = np.ascontiguousarray(np.abs(z).ravel())
    out = np.empty_like(flat)
    _map_f(flat, int(n), float(cutoff), spec.coeffs, out)
    return out.reshape(z.shape) if z.ndim else float(out[0])


def scalar_kernel(y_norm, spec):
    """Trace kernel ``kappa_h(y) = f(|y|/h)/h``; finite at the origin."""
    y_norm = np.asarray(y_norm, dtype=float)
    if np.any(y_norm < 0):
        raise ValueError("y_norm must be non-negative")
    return f_profile(y_norm / spec.h, spec.n, spec) / spec.h


def ideal_kernel(y_norm, n):
    """Idealized (h -> 0) trace kernel ``(n-1)/|y|`` for n in {2, 3}.

    The one-dimensional limit is the distribution ``2 delta`` and has no
    pointwise values, so n = 1 is rejected.
    """
    if n not in (2, 3):
        raise ValueError("ideal_kernel is a pointwise function only for n = 2 or 3")
    y_norm = np.asarray(y_norm, dtype=float)
    if np.any(y_norm <= 0):
        raise ValueError("ideal_kernel is singular at y = 0")
    out = (n - 1) / y_norm
    return out if out.ndim else float(out)


def vector_kernel(y, spec):
    """Flux integrand ``L(|y|/h) y/|y|`` (zero vector at y = 0).

    ``y`` has shape ``(..., n)``.
    """
    y = np.asarray(y, dtype=float)
    d = np.linalg.norm(y, axis=-1)
    # L(z) y/|y| = (L(z)/z) y/h, which is regular at 0
    scale = langevin_over_z(d / spec.h, spec.series_cutoff, spec.series_terms) / spec.h
    return np.asarray(scale)[..., None] * y


def matrix_kernel(y, spec):
    """Matrix-valued kernel of the MPI core operator at offset(s) ``y``.

    With ``z = |y|/h`` and ``P = yy^T/|y|^2`` this is
    ``L'(z)/h * P + L(z)/|y| * (I - P)``, and ``I/(3h)`` at ``y = 0``.
    Returns an array of shape ``(..., n, n)``.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    d = np.linalg.norm(y, axis=-1)
    z = d / spec.h
    radial = langevin_deriv(z, spec.series_cutoff, spec.series_terms) / spec.h
    tangential = langevin_over_z(z, spec.series_cutoff, spec.series_terms) / spec.h
    radial = np.asarray(radial)
    tangential = np.asarray(tangential)
    with np.errstate(invalid="ignore", divide="ignore"):
        yhat = np.where(d[..., None] > 0, y / d[..., None], 0.0)
    proj = yhat[..., :, None] * yhat[..., None, :]
    eye = np.eye(n)
    out = tangential[..., None, None] * eye + (radial - tangential)[..., None, None] * proj
    return out
