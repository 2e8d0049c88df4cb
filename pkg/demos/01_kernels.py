"""
Kernel shapes
=============

The trace kernel kappa_h is what the per-cell fit hands to the deconvolution.
This walk-through tabulates it for a few resolution parameters and compares
it with the h -> 0 limit (n - 1)/|y|.
"""
import numpy as np

from mpicore import KernelSpec, PhysicalParams, ideal_kernel, matrix_kernel, resolution_param, scalar_kernel

# Physical particles map to a dimensionless h.
for d in (20e-9, 30e-9):
    print(f"d = {d * 1e9:.0f} nm  ->  h = {resolution_param(PhysicalParams.standard(d=d)):.5f}")

# kappa_h peaks at n/(3h) on the origin and approaches (n-1)/|y| away from it.
y = np.array([0.0, 0.01, 0.05, 0.25, 0.5, 1.0])
print("\n|y|      " + "  ".join(f"{v:>9.2f}" for v in y))
for h in (0.1, 0.01, 0.001):
    row = scalar_kernel(y, KernelSpec(2, h))
    print(f"h={h:<6} " + "  ".join(f"{v:9.3f}" for v in row))
print("ideal    " + "-".rjust(9) + "  " + "  ".join(f"{ideal_kernel(v, 2):9.3f}" for v in y[1:]))

# In 3D the gap to the ideal kernel only shrinks like h/|y|^2.
for h in (1e-2, 1e-3, 1e-4):
    gap = ideal_kernel(0.5, 3) - scalar_kernel(0.5, KernelSpec(3, h))
    print(f"n=3, |y|=0.5, h={h:g}: gap {gap:.2e}  (h/|y|^2 = {h / 0.25:.2e})")

# The matrix kernel splits into a radial and a tangential part; its trace is kappa_h.
spec = KernelSpec(2, 0.05)
M = matrix_kernel(np.array([0.3, 0.4]), spec)
print("\nmatrix kernel at (0.3, 0.4):\n", M)
print("trace", np.trace(M), "vs kappa_h", scalar_kernel(0.5, spec))
