"""Simulation and trace-based reconstruction for multivariate magnetic particle imaging.

The pipeline is

    density --(forward)--> time signal --(tracefit)--> trace field --(deconvolve)--> density

with the kernels of the MPI core operator in :mod:`mpicore.kernels`.
"""
import os

# numba's TBB layer refuses older TBB builds and warns on every import
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .kernels import (  # noqa: E402
    KernelSpec,
    f_profile,
    ideal_kernel,
    langevin,
    langevin_deriv,
    matrix_kernel,
    scalar_kernel,
    vector_kernel,
)
from .grid import (  # noqa: E402
    DensityField,
    GridSpec,
    PhysicalParams,
    TraceField,
    default_phantom,
    phantom,
    relative_error,
    resolution_param,
)
from .trajectory import TrajectoryConfig, coverage_report, sample_trajectory  # noqa: E402
from .forward import add_noise, core_operator_at, synthesize_signal  # noqa: E402
from .tracefit import fit_cell, fit_trace  # noqa: E402
from .deconvolve import ReconConfig, apply_kh, cg_solve, reconstruct  # noqa: E402

__version__ = "0.1.0"
