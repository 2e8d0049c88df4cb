"""
Simulating a scan
=================

A Lissajous field-free point sweeps the field of view; at every sample the
signal is the core operator (a matrix convolution of the density) applied to
the trajectory velocity.  Noise is scaled by the largest signal norm.
"""
import numpy as np

from mpicore import (GridSpec, KernelSpec, TrajectoryConfig, add_noise, coverage_report, default_phantom,
                     phantom, sample_trajectory, synthesize_signal)

N = 40
grid = GridSpec.square(N)
spec = KernelSpec(2, 0.01)
rho = phantom(grid, default_phantom(2))
traj = TrajectoryConfig((N + 1, N + 2), 20 * N**2)

samples = sample_trajectory(traj)
cov = coverage_report(grid, samples)
print(f"{len(samples)} samples, samples per cell {cov.counts.min()}..{cov.counts.max()}, "
      f"rank-deficient cells: {len(cov.deficient)}")

clean = synthesize_signal(rho, spec, samples)
noisy, eps = add_noise(clean, 0.1, seed=7)
print(f"max |s| = {np.linalg.norm(clean.s, axis=1).max():.3f}, noise std eps = {eps:.3f}")

# The signal is largest where the trajectory crosses particles at speed.
k = np.argmax(np.linalg.norm(clean.s, axis=1))
print(f"peak at t={samples.t[k]:.5f}, r={samples.r[k]}, v={samples.v[k]}")
