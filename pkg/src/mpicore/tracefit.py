"""
Per-cell matrix fitting: recover the trace field from time samples.

Samples are binned into grid cells.  In each cell the signals ``S_i`` and
velocities ``V_i`` satisfy ``A_i V_i = S_i`` for the (cell-constant) core
operator ``A_i``, which is fitted by least squares and reduced to its trace.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .grid import TraceField, cell_indices
from .trajectory import RANK_RTOL, numerical_rank

__all__ = [
    "CellBatch",
    "Binning",
    "RankDeficient",
    "bin_samples",
    "fit_cell",
    "fit_cells",
    "trace_field",
    "FitResult",
    "fit_trace",
    "write_cell_diagnostics",
]


class RankDeficient(ValueError):
    """The velocities collected in a cell do not span R^n."""


@dataclass(frozen=True, eq=False)
class CellBatch:
    cell: int               # flat row-major cell index
    V: np.ndarray           # n x m velocities, columns in time order
    S: np.ndarray           # n x m signals aligned with V

    def __post_init__(self):
        if self.V.shape != self.S.shape:
            raise ValueError("V and S must have identical shapes")

    @property
    def m(self):
        return self.V.shape[1]


@dataclass(frozen=True, eq=False)
class Binning:
    batches: dict           # flat cell index -> CellBatch (non-empty cells only)
    dropped: int            # samples outside the field of view


def bin_samples(grid, signal):
    """Group the samples of ``signal`` by grid cell, keeping time order."""
    if signal.n != grid.n:
        raise ValueError("signal and grid dimensions differ")
    r = signal.samples.r
    idx, inside = cell_indices(grid, r)
    flat = np.ravel_multi_index(idx[inside].T, grid.shape) if inside.any() else np.zeros(0, np.int64)
    V = signal.samples.v[inside]
    S = signal.s[inside]
    order = np.argsort(flat, kind="stable")
    flat, V, S = flat[order], V[order], S[order]
    cells, starts = np.unique(flat, return_index=True)
    stops = np.append(starts[1:], flat.size)
    batches = {
        int(c): CellBatch(int(c), V[a:b].T.copy(), S[a:b].T.copy())
        for c, a, b in zip(cells, starts, stops)
    }
    return Binning(batches, int(np.count_nonzero(~inside)))


def fit_cell(batch, rtol=RANK_RTOL):
    """Least-squares ``A`` minimising ``||A V - S||_F``.

    With the reduced factorisation ``V^T = Q R`` the minimiser is
    ``A = S Q R^{-T}``.  Raises :class:`RankDeficient` when ``V`` has
    numerical rank below ``n``.
    """
    V, S = batch.V, batch.S
    n = V.shape[0]
    if batch.m < n or numerical_rank(V, rtol) < n:
        raise RankDeficient(f"cell {batch.cell}: velocities do not span R^{n}")
    Q, R = np.linalg.qr(V.T, mode="reduced")
    # A R^T = S Q  <=>  R A^T = (S Q)^T
    return solve_triangular(R, (S @ Q).T, lower=False).T


@dataclass(frozen=True, eq=False)
class FitResult:
    trace: TraceField
    counts: np.ndarray      # samples per cell
    ranks: np.ndarray       # velocity rank per cell
    dropped: int

    @property
    def masked_cells(self):
        return int(np.count_nonzero(~self.trace.mask))


def fit_cells(binning, rtol=RANK_RTOL):
    """Fit every batch; returns ``{cell: A_i}`` for the cells that could be fitted."""
    fits = {}
    for cell, batch in binning.batches.items():
        try:
            fits[cell] = fit_cell(batch, rtol)
        except RankDeficient:
            continue
    return fits


def trace_field(fits, grid):
    """Trace of each fitted matrix; unfitted cells are masked with value 0."""
    values = np.zeros(grid.size)
    mask = np.zeros(grid.size, bool)
    for cell, A in fits.items():
        values[cell] = np.trace(A)
        mask[cell] = True
    return TraceField(grid, values, mask)


def fit_trace(grid, signal, rtol=RANK_RTOL):
    """Bin, fit and take traces in one go, keeping per-cell diagnostics."""
    binning = bin_samples(grid, signal)
    counts = np.zeros(grid.size, np.int64)
    ranks = np.zeros(grid.size, np.int64)
    for cell, batch in binning.batches.items():
        counts[cell] = batch.m
        ranks[cell] = numerical_rank(batch.V, rtol)
    fits = fit_cells(binning, rtol)
    return FitResult(trace_field(fits, grid), counts, ranks, binning.dropped)


def write_cell_diagnostics(path, result):
    with open(path, "w") as fh:
        fh.write("cell_index,sample_count,rank,fitted\n")
        for i, (c, r, f) in enumerate(zip(result.counts, result.ranks, result.trace.mask)):
            fh.write(f"{i},{c},{r},{int(f)}\n")
