"""
Command-line front end.

    mpi-core phantom      --config run.cfg [--shape disk:0,0,0.5,1 ...]
    mpi-core simulate     --config run.cfg [--seed 7]
    mpi-core reconstruct  --config run.cfg [--ground-truth density.csv]
    mpi-core pipeline     --config run.cfg [--dry-run]
    mpi-core kernel-table [--n 2] [--h 0.01] [--range -3.4 3.4] [--count 201]

Configs are flat ``key = value`` files with ``#`` comments.  Exit codes:
0 success, 1 usage or I/O error, 2 CG did not converge.
"""
import argparse
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import forward, tracefit
from .deconvolve import MaxIterExceeded, ReconConfig, reconstruct, write_diagnostics
from .grid import Ball, Box, GridSpec, default_phantom, phantom, read_field, relative_error, write_field
from .kernels import KernelSpec, f_profile, langevin, langevin_deriv, scalar_kernel
from .trajectory import TrajectoryConfig, sample_trajectory

EXIT_OK, EXIT_USAGE, EXIT_NO_CONVERGENCE = 0, 1, 2

DEFAULTS = {
    "n": 2,
    "N": 100,
    "m1": 101,
    "m2": 102,
    "m3": 103,
    "K": "auto",
    "h": 0.01,
    "series_cutoff": 0.5,
    "series_terms": 40,
    "noise": 0.1,
    "seed": 0,
    "mu": 3e-4,
    "tau": 2e-3,
    "max_iter": 500,
    "phantom": "default",
    "threads": 0,
    "outdir": ".",
    "density": "density.csv",
    "signal": "signal.csv",
    "trace": "trace.csv",
    "reconstruction": "reconstruction.csv",
    "diagnostics": "diagnostics.txt",
    "cells": "cells.csv",
    "image": "reconstruction.pgm",
    "summary": "summary.txt",
}
_INT_KEYS = {"n", "N", "m1", "m2", "m3", "series_terms", "seed", "max_iter", "threads"}
_FLOAT_KEYS = {"h", "series_cutoff", "noise", "mu", "tau"}


class UsageError(Exception):
    pass


def _convert(key, raw):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key == "K":
            return "auto" if raw == "auto" else int(raw)
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None
    return raw


@dataclass(frozen=True)
class RunConfig:
    values: dict

    @classmethod
    def parse(cls, text):
        values = dict(DEFAULTS)
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line {lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in DEFAULTS:
                raise UsageError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _convert(key, raw)
        return cls(values).resolved()

    @classmethod
    def load(cls, path=None):
        if path is None:
            return cls.parse("")
        try:
            return cls.parse(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None

    def resolved(self):
        v = dict(self.values)
        if v["n"] not in (1, 2, 3):
            raise UsageError("n must be 1, 2 or 3")
        if v["K"] == "auto":
            v["K"] = 20 * v["N"] ** v["n"]
        return RunConfig(v)

    def dump(self):
        lines = []
        for key in DEFAULTS:
            value = self.values[key]
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, **kw):
        v = dict(self.values)
        v.update({k: val for k, val in kw.items() if val is not None})
        return RunConfig(v)

    def __getitem__(self, key):
        return self.values[key]

    def path(self, key):
        return Path(self.values["outdir"]) / self.values[key]

    @property
    def grid(self):
        return GridSpec.square(self["N"], self["n"])

    @property
    def kernel(self):
        return KernelSpec(self["n"], self["h"], self["series_cutoff"], self["series_terms"])

    @property
    def trajectory(self):
        freqs = tuple(self[f"m{j + 1}"] for j in range(self["n"]))
        return TrajectoryConfig(freqs, self["K"])

    @property
    def recon(self):
        return ReconConfig(self["mu"], self["tau"], self["max_iter"], self.kernel)


# ---------------------------------------------------------------------------
# shapes

def parse_shape(text, n):
    """``disk:cx,cy,r,amp`` / ``ball:...`` or ``rect:lo..,hi..,amp`` / ``box:...``."""
    try:
        kind, args = text.split(":", 1)
        nums = [float(a) for a in args.split(",")]
    except ValueError:
        raise UsageError(f"malformed shape {text!r}") from None
    kind = kind.strip().lower()
    if kind in ("disk", "ball", "interval"):
        if len(nums) != n + 2:
            raise UsageError(f"{kind} needs {n} centre coordinates, radius and amplitude")
        return Ball(tuple(nums[:n]), nums[n], nums[n + 1])
    if kind in ("rect", "box"):
        if len(nums) != 2 * n + 1:
            raise UsageError(f"{kind} needs {n} lower, {n} upper corner coordinates and amplitude")
        return Box(tuple(nums[:n]), tuple(nums[n:2 * n]), nums[2 * n])
    raise UsageError(f"unknown shape kind {kind!r}")


def parse_shapes(items, n):
    shapes = []
    for item in items:
        for part in item.split(";"):
            part = part.strip()
            if not part or part == "none":
                continue
            if part == "default":
                shapes.extend(default_phantom(n))
            else:
                shapes.append(parse_shape(part, n))
    return shapes


# ---------------------------------------------------------------------------
# outputs

def write_pgm(path, fld):
    """8-bit ASCII graymap of a 2D field; min/max kept in a comment line."""
    arr = fld.as_array()
    lo, hi = float(arr.min()), float(arr.max())
    scaled = np.zeros_like(arr) if hi == lo else (arr - lo) / (hi - lo) * 255.0
    # image rows run from +y down to -y, columns along x
    img = np.rint(scaled).astype(int).T[::-1]
    rows, cols = img.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n# min={lo:.17g} max={hi:.17g}\n{cols} {rows}\n255\n")
        for row in img:
            fh.write(" ".join(str(v) for v in row) + "\n")


def read_pgm(path):
    """Invert :func:`write_pgm` up to 8-bit quantisation; returns (image, lo, hi)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines[0] != "P2":
        raise ValueError("not an ASCII PGM")
    meta = dict(item.split("=") for item in lines[1].lstrip("# ").split())
    cols, rows = (int(s) for s in lines[2].split())
    data = np.array(" ".join(lines[4:]).split(), dtype=int).reshape(rows, cols)
    return data, float(meta["min"]), float(meta["max"])


def _fmt(value):
    return f"{value:.17g}" if isinstance(value, float) else str(value)


# ---------------------------------------------------------------------------
# commands

def cmd_phantom(cfg, shapes=None):
    n = cfg["n"]
    shapes = parse_shapes([cfg["phantom"]] if shapes is None else shapes, n)
    rho = phantom(cfg.grid, shapes)
    cfg.path("density").parent.mkdir(parents=True, exist_ok=True)
    write_field(cfg.path("density"), rho)
    print(f"wrote {cfg.path('density')}")
    return rho


def cmd_simulate(cfg):
    try:
        rho = read_field(cfg.path("density"))
    except OSError as exc:
        raise UsageError(f"cannot read density: {exc}") from None
    if rho.grid.n != cfg["n"]:
        raise UsageError("density dimension does not match config n")
    samples = sample_trajectory(cfg.trajectory)
    signal = forward.synthesize_signal(rho, cfg.kernel, samples)
    signal, eps = forward.add_noise(signal, cfg["noise"], cfg["seed"])
    forward.write_signal(cfg.path("signal"), signal)
    print(f"eps={eps:.17g}")
    print(f"wrote {cfg.path('signal')} ({len(signal)} samples)")
    return eps


def cmd_reconstruct(cfg, ground_truth=None):
    try:
        signal = forward.read_signal(cfg.path("signal"))
    except OSError as exc:
        raise UsageError(f"cannot read signal: {exc}") from None
    grid = cfg.grid
    fit = tracefit.fit_trace(grid, signal)
    write_field(cfg.path("trace"), fit.trace)
    tracefit.write_cell_diagnostics(cfg.path("cells"), fit)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MaxIterExceeded)
        rho, diag = reconstruct(fit.trace, grid, cfg.recon)
    write_field(cfg.path("reconstruction"), rho)
    write_diagnostics(cfg.path("diagnostics"), diag)
    if cfg["image"] and grid.n == 2:
        write_pgm(cfg.path("image"), rho)
    for key in ("iterations", "relative_residual", "objective", "masked_cells"):
        print(f"{key}={_fmt(diag[key])}")
    if ground_truth is not None:
        try:
            truth = read_field(ground_truth)
        except OSError as exc:
            raise UsageError(f"cannot read ground truth: {exc}") from None
        diag["relative_error"] = relative_error(rho, truth)
        print(f"relative_error={diag['relative_error']:.17g}")
    if not diag["converged"]:
        print("CG did not converge within max_iter", file=sys.stderr)
    return diag


def cmd_kernel_table(spec, lo=-2 * np.sqrt(3), hi=2 * np.sqrt(3), count=201, out=None):
    """Rows ``z, L(z/h), L'(z/h), f(|z|/h), kappa_h(|z|)`` on an equispaced grid."""
    if count < 2:
        raise UsageError("count must be >= 2")
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise UsageError("range must satisfy lo < hi")
    z = np.linspace(lo, hi, count)
    s = z / spec.h
    cols = [
        z,
        langevin(s, spec.series_cutoff, spec.series_terms),
        langevin_deriv(s, spec.series_cutoff, spec.series_terms),
        f_profile(np.abs(s), spec.n, spec),
        scalar_kernel(np.abs(z), spec),
    ]
    lines = ["z,L,dL,f,kappa_h"] + [",".join(f"{c[i]:.17g}" for c in cols) for i in range(count)]
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return np.column_stack(cols)


def cmd_pipeline(cfg):
    Path(cfg["outdir"]).mkdir(parents=True, exist_ok=True)
    cmd_phantom(cfg)
    eps = cmd_simulate(cfg)
    diag = cmd_reconstruct(cfg, ground_truth=cfg.path("density"))
    summary = {
        "eps": eps,
        "iterations": diag["iterations"],
        "relative_residual": diag["relative_residual"],
        "relative_error": diag["relative_error"],
        "masked_cells": diag["masked_cells"],
        "converged": int(diag["converged"]),
    }
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in summary.items())
    cfg.path("summary").write_text(text)
    print("summary:")
    sys.stdout.write(text)
    return summary


# ---------------------------------------------------------------------------
# entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _set_threads(flag, cfg_threads):
    threads = flag
    if threads is None and os.environ.get("MPI_CORE_THREADS"):
        threads = int(os.environ["MPI_CORE_THREADS"])
    if threads is None:
        threads = cfg_threads
    if threads and threads > 0:
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value run configuration")
    common.add_argument("--seed", type=int, help="noise seed (overrides config)")
    common.add_argument("--threads", type=int, help="worker threads (fallback: $MPI_CORE_THREADS)")
    common.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")

    parser = _Parser(prog="mpi-core", description="MPI simulation and trace-based reconstruction")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("phantom", parents=[common], help="write a phantom density CSV")
    p.add_argument("--shape", action="append", metavar="KIND:ARGS",
                   help="disk:cx,cy,r,amp or rect:x0,y0,x1,y1,amp (repeatable; 'none' for empty)")
    sub.add_parser("simulate", parents=[common], help="simulate the (noisy) time signal")
    p = sub.add_parser("reconstruct", parents=[common], help="fit traces and deconvolve")
    p.add_argument("--ground-truth", metavar="PATH", help="density CSV to compare against")
    sub.add_parser("pipeline", parents=[common], help="phantom, simulate and reconstruct in one go")
    p = sub.add_parser("kernel-table", parents=[common], help="tabulate the Langevin kernels as CSV")
    p.add_argument("--n", type=int)
    p.add_argument("--h", type=float)
    p.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"),
                   default=(-2 * np.sqrt(3), 2 * np.sqrt(3)))
    p.add_argument("--count", type=int, default=201)
    p.add_argument("-o", "--output", metavar="PATH", help="CSV path (default: stdout)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config).with_overrides(seed=args.seed)
        if args.command == "kernel-table":
            cfg = cfg.with_overrides(n=args.n, h=args.h).resolved()
        if args.dry_run:
            sys.stdout.write(cfg.dump())
            return EXIT_OK
        _set_threads(args.threads, cfg["threads"])
        if args.command == "phantom":
            cmd_phantom(cfg, args.shape)
        elif args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "reconstruct":
            diag = cmd_reconstruct(cfg, args.ground_truth)
            return EXIT_OK if diag["converged"] else EXIT_NO_CONVERGENCE
        elif args.command == "pipeline":
            summary = cmd_pipeline(cfg)
            return EXIT_OK if summary["converged"] else EXIT_NO_CONVERGENCE
        elif args.command == "kernel-table":
            lo, hi = args.range
            cmd_kernel_table(cfg.kernel, lo, hi, args.count, args.output)
    except (UsageError, ValueError, OSError) as exc:
        print(f"mpi-core: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
