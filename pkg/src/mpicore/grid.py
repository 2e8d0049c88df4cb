"""
Regular grids over the nondimensional field of view, fields living on them,
phantoms, and the physical parameters that collapse into ``h``.
"""
from dataclasses import dataclass
from math import pi
import re

import numpy as np

__all__ = [
    "GridSpec",
    "DensityField",
    "TraceField",
    "PhysicalParams",
    "Ball",
    "Box",
    "resolution_param",
    "cell_center",
    "locate_cell",
    "phantom",
    "default_phantom",
    "relative_error",
    "write_field",
    "read_field",
]

BOLTZMANN = 1.38e-23          # N m / K
MU_0 = 4e-7 * pi              # N / A^2


@dataclass(frozen=True)
class GridSpec:
    """Cell-centred grid on ``[-1, 1]^n``; ``shape[j]`` cells along axis j."""

    shape: tuple

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) not in (1, 2, 3):
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {len(shape)}")
        if any(s < 1 for s in shape):
            raise ValueError(f"cell counts must be positive, got {shape}")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def square(cls, n_cells, n=2):
        return cls((n_cells,) * n)

    @property
    def n(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def spacing(self):
        return np.array([2.0 / s for s in self.shape])

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        """Cell-centre coordinates along each axis."""
        return [-1.0 + (np.arange(s) + 0.5) * (2.0 / s) for s in self.shape]

    def centers(self):
        """All cell centres, shape ``(size, n)``, in row-major (C) order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def header(self):
        return f"# grid: n={self.n} shape={'x'.join(str(s) for s in self.shape)}"


def cell_center(grid, index):
    index = tuple(int(i) for i in index)
    if len(index) != grid.n:
        raise ValueError(f"expected a {grid.n}-index, got {index}")
    for i, s in zip(index, grid.shape):
        if not 0 <= i < s:
            raise IndexError(f"cell index {index} out of range for shape {grid.shape}")
    return np.array([-1.0 + (i + 0.5) * (2.0 / s) for i, s in zip(index, grid.shape)])


def cell_indices(grid, points):
    """Vectorised binning: multi-indices of shape ``(m, n)`` plus an inside mask.

    Cells are half-open ``[lo, hi)`` except that the top edge ``+1`` belongs to
    the last cell.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    shape = np.array(grid.shape)
    inside = np.all((points >= -1.0) & (points <= 1.0), axis=1)
    idx = np.floor((points + 1.0) * (shape / 2.0)).astype(np.int64)
    idx = np.minimum(np.maximum(idx, 0), shape - 1)
    return idx, inside


def locate_cell(grid, point):
    """Multi-index of the cell holding ``point``, or ``None`` outside the FOV."""
    point = np.asarray(point, dtype=float).reshape(1, -1)
    if point.shape[1] != grid.n:
        raise ValueError("point dimension does not match grid")
    idx, inside = cell_indices(grid, point)
    if not inside[0]:
        return None
    return tuple(int(i) for i in idx[0])


@dataclass(frozen=True, eq=False)
class DensityField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.grid.size:
            raise ValueError(f"field has {values.size} values, grid needs {self.grid.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(points) -> values`` at the cell centres."""
        return cls(grid, func(grid.centers()))

    def as_array(self):
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True, eq=False)
class TraceField(DensityField):
    mask: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        mask = np.ones(self.grid.size, bool) if self.mask is None else np.asarray(self.mask, bool).ravel()
        if mask.size != self.grid.size:
            raise ValueError("mask length does not match grid")
        if np.any(self.values[~mask] != 0):
            raise ValueError("masked-out cells must carry the value 0")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)


@dataclass(frozen=True)
class PhysicalParams:
    """Physical scanner and particle parameters, SI units.

    ``M_sat`` is in A/m and ``g`` in A/m^2; use :meth:`standard` for the
    literature values quoted in tesla-per-mu_0 units.
    """

    T: float
    M_sat: float
    d: float
    g: float
    L_fov: float
    k_b: float = BOLTZMANN
    mu_0: float = MU_0

    def __post_init__(self):
        for name in ("T", "M_sat", "d", "g", "L_fov", "k_b", "mu_0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 1e-9 <= self.d <= 1e-6:
            raise ValueError(f"particle diameter {self.d} m outside [1 nm, 1 um]")

    @classmethod
    def standard(cls, d=30e-9, **overrides):
        """Body temperature, 0.6 T saturation, 5.5 T/m gradient, 2 cm field of view."""
        params = dict(T=310.0, M_sat=0.6 / MU_0, d=d, g=5.5 / MU_0, L_fov=20e-3)
        params.update(overrides)
        return cls(**params)

    @property
    def H_sat(self):
        volume = pi / 6.0 * self.d**3
        return self.k_b * self.T / (self.mu_0 * self.M_sat * volume)


def resolution_param(p):
    """Dimensionless resolution ``h = H_sat / (g L)``."""
    return p.H_sat / (p.g * p.L_fov)


@dataclass(frozen=True)
class Ball:
    """Disk (2D), ball (3D) or interval (1D); contains points with ``|x - c| < r``."""

    center: tuple
    radius: float
    amplitude: float = 1.0

    def contains(self, points):
        return np.linalg.norm(points - np.asarray(self.center, float), axis=1) < self.radius


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle/box ``lo <= x < hi``."""

    lo: tuple
    hi: tuple
    amplitude: float = 1.0

    def contains(self, points):
        return np.all((points >= np.asarray(self.lo, float)) & (points < np.asarray(self.hi, float)), axis=1)


def phantom(grid, shapes):
    """Sum of shape amplitudes over the shapes containing each cell centre."""
    centers = grid.centers()
    values = np.zeros(grid.size)
    for shape in shapes:
        dim = len(shape.center) if isinstance(shape, Ball) else len(shape.lo)
        if dim != grid.n:
            raise ValueError(f"{shape} does not match grid dimension {grid.n}")
        if shape.amplitude < 0:
            raise ValueError("phantom amplitudes must be non-negative")
        values += np.where(shape.contains(centers), float(shape.amplitude), 0.0)
    return DensityField(grid, values)


def default_phantom(n=2):
    """The built-in test object: a few disks and bars inside the FOV."""
    if n == 1:
        return [Box((-0.7,), (-0.2,), 1.0), Box((0.1,), (0.5,), 0.6), Ball((0.75,), 0.1, 0.8)]
    if n == 2:
        return [
            Ball((-0.35, 0.3), 0.35, 1.0),
            Ball((0.45, 0.45), 0.2, 0.7),
            Box((-0.6, -0.75), (0.6, -0.45), 0.8),
            Box((0.2, -0.3), (0.5, 0.2), 0.5),
        ]
    return [
        Ball((-0.3, 0.2, 0.0), 0.35, 1.0),
        Ball((0.45, -0.3, 0.2), 0.25, 0.7),
        Box((-0.5, -0.7, -0.5), (0.5, -0.45, 0.5), 0.6),
    ]


def relative_error(a, b):
    """``||a - b|| / ||b||`` (or ``||a||`` when ``b`` vanishes)."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    nb = np.linalg.norm(b.values)
    diff = np.linalg.norm(a.values - b.values)
    return float(diff / nb) if nb > 0 else float(np.linalg.norm(a.values))


# ---------------------------------------------------------------------------
# CSV I/O

_HEADER = re.compile(r"#\s*grid:\s*n=(\d)\s+shape=(\d+(?:x\d+)*)\s*$")


def write_field(path, fld):
    with open(path, "w") as fh:
        fh.write(fld.grid.header() + "\n")
        fh.writelines(f"{v:.17g}\n" for v in fld.values)


def read_field(path):
    """Read a field CSV written by :func:`write_field` as a DensityField."""
    with open(path) as fh:
        first = fh.readline().strip()
        m = _HEADER.match(first)
        if not m:
            raise ValueError(f"{path}: bad field header {first!r}")
        shape = tuple(int(s) for s in m.group(2).split("x"))
        if len(shape) != int(m.group(1)):
            raise ValueError(f"{path}: header dimension disagrees with shape")
        values = np.array([float(line) for line in fh if line.strip()])
    return DensityField(GridSpec(shape), values)
