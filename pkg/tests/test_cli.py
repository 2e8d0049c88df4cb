import numpy as np
import pytest

from mpicore.cli import DEFAULTS, RunConfig, UsageError, main, read_pgm, write_pgm
from mpicore.forward import read_signal
from mpicore.grid import Ball, DensityField, GridSpec, phantom, read_field
from mpicore.kernels import KernelSpec, scalar_kernel


@pytest.fixture
def config(tmp_path):
    def make(**extra):
        values = {"N": 8, "m1": 9, "m2": 10, "h": 0.05, "outdir": str(tmp_path / "out"), **extra}
        path = tmp_path / "run.cfg"
        path.write_text("# small run\n" + "".join(f"{k} = {v}\n" for k, v in values.items()))
        return str(path)
    return make


def test_defaults_follow_experiment():
    cfg = RunConfig.load()
    assert (cfg["N"], cfg["m1"], cfg["m2"], cfg["K"]) == (100, 101, 102, 200_000)
    assert (cfg["h"], cfg["noise"], cfg["mu"], cfg["tau"]) == (0.01, 0.1, 3e-4, 2e-3)


def test_dry_run_round_trip(config, capsys):
    path = config(mu=1.5e-5)
    assert main(["pipeline", "--config", path, "--dry-run"]) == 0
    echoed = capsys.readouterr().out
    cfg = RunConfig.parse(echoed)
    assert cfg == RunConfig.load(path)
    assert cfg["K"] == 20 * 8**2 and cfg["mu"] == 1.5e-5
    assert RunConfig.parse(cfg.dump()) == cfg
    assert set(cfg.values) == set(DEFAULTS)


def test_unknown_key(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("N = 8\nlamda = 3\n")
    assert main(["pipeline", "--config", str(path), "--dry-run"]) == 1
    assert "unknown key" in capsys.readouterr().err
    with pytest.raises(UsageError):
        RunConfig.parse("N = eight")


def test_phantom_empty(config):
    path = config()
    assert main(["phantom", "--config", path, "--shape", "none"]) == 0
    rho = read_field(RunConfig.load(path).path("density"))
    assert rho.grid == GridSpec.square(8) and not rho.values.any()


def test_phantom_disk_reloads_exactly(config):
    path = config()
    assert main(["phantom", "--config", path, "--shape", "disk:0.1,-0.2,0.45,0.7"]) == 0
    rho = read_field(RunConfig.load(path).path("density"))
    expected = phantom(GridSpec.square(8), [Ball((0.1, -0.2), 0.45, 0.7)])
    np.testing.assert_array_equal(rho.values, expected.values)


@pytest.mark.parametrize("shape", ["disk:0,0", "blob:0,0,1,1", "rect:a,b,c,d,e", "disk"])
def test_phantom_malformed_shape(config, capsys, shape):
    assert main(["phantom", "--config", config(), "--shape", shape]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_input_is_usage_error(config):
    assert main(["simulate", "--config", config()]) == 1
    assert main(["reconstruct", "--config", config()]) == 1


def test_simulate_deterministic(config, capsys):
    path = config(noise=0.1, seed=3)
    cfg = RunConfig.load(path)
    main(["phantom", "--config", path])
    main(["simulate", "--config", path])
    first = cfg.path("signal").read_bytes()
    main(["simulate", "--config", path])
    assert cfg.path("signal").read_bytes() == first
    assert main(["simulate", "--config", path, "--seed", "4"]) == 0
    assert cfg.path("signal").read_bytes() != first
    assert "eps=" in capsys.readouterr().out
    assert len(read_signal(cfg.path("signal"))) == 20 * 8**2


def test_simulate_noise_free(config):
    path = config(noise=0.0)
    cfg = RunConfig.load(path)
    main(["phantom", "--config", path])
    main(["simulate", "--config", path, "--seed", "1"])
    first = cfg.path("signal").read_bytes()
    main(["simulate", "--config", path, "--seed", "2"])
    assert cfg.path("signal").read_bytes() == first


def test_reconstruct_zero_signal(config):
    path = config(noise=0.0)
    cfg = RunConfig.load(path)
    main(["phantom", "--config", path, "--shape", "none"])
    main(["simulate", "--config", path])
    assert main(["reconstruct", "--config", path]) == 0
    assert not read_field(cfg.path("reconstruction")).values.any()
    diag = dict(line.split("=") for line in cfg.path("diagnostics").read_text().splitlines())
    assert list(diag) == ["iterations", "relative_residual", "objective", "masked_cells"]


def test_reconstruct_ground_truth_and_exit_codes(config, capsys):
    path = config()
    cfg = RunConfig.load(path)
    main(["phantom", "--config", path])
    main(["simulate", "--config", path])
    capsys.readouterr()
    assert main(["reconstruct", "--config", path, "--ground-truth", str(cfg.path("density"))]) == 0
    out = capsys.readouterr().out
    assert "relative_error=" in out
    capped = config(max_iter=1, tau=1e-12)
    assert main(["reconstruct", "--config", capped]) == 2
    assert cfg.path("image").read_text().startswith("P2\n")


def test_kernel_table_endpoints(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["kernel-table", "--n", "2", "--h", "0.1", "--count", "2", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "z,L,dL,f,kappa_h"
    z = [float(row.split(",")[0]) for row in lines[1:]]
    assert z == pytest.approx([-2 * np.sqrt(3), 2 * np.sqrt(3)], rel=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_kernel_table_origin_row(tmp_path, n):
    out = tmp_path / "k.csv"
    assert main(["kernel-table", "--n", str(n), "--h", "0.05", "--range", "-1", "1", "--count", "3",
                 "-o", str(out)]) == 0
    z, L, dL, f, kappa = np.loadtxt(out, delimiter=",", skiprows=1).T
    assert z[1] == 0.0 and L[1] == 0.0
    assert f[1] == pytest.approx(n / 3, rel=1e-12)
    assert dL[1] == pytest.approx(1 / 3, rel=1e-12)
    assert kappa[2] == pytest.approx(scalar_kernel(1.0, KernelSpec(n, 0.05)), rel=1e-14)


@pytest.mark.parametrize("args", [["--count", "1"], ["--range", "1", "-1"]])
def test_kernel_table_bad_arguments(args):
    assert main(["kernel-table", *args]) == 1


def test_pgm_invertible(tmp_path):
    g = GridSpec((5, 3))
    rho = phantom(g, [Ball((0.3, 0.0), 0.6, 2.0)])
    values = rho.values + np.linspace(-1, 1, g.size)
    fld = DensityField(g, values)
    write_pgm(tmp_path / "x.pgm", fld)
    img, lo, hi = read_pgm(tmp_path / "x.pgm")
    assert img.shape == (3, 5) and img.min() == 0 and img.max() == 255
    assert (lo, hi) == (values.min(), values.max())
    back = (img[::-1].T / 255.0 * (hi - lo) + lo).ravel()
    assert np.max(np.abs(back - values)) <= (hi - lo) / 255 / 2 + 1e-12


def test_pipeline_byte_identical(tmp_path, capsys):
    outputs = []
    for run in ("a", "b"):
        cfg_path = tmp_path / f"{run}.cfg"
        cfg_path.write_text(f"N = 10\nm1 = 11\nm2 = 12\nh = 0.05\nseed = 9\noutdir = {tmp_path / run}\n")
        assert main(["pipeline", "--config", str(cfg_path), "--threads", "1"]) == 0
        cfg = RunConfig.load(cfg_path)
        outputs.append({k: cfg.path(k).read_bytes()
                        for k in ("density", "signal", "trace", "reconstruction", "diagnostics", "cells",
                                  "image", "summary")})
    assert outputs[0] == outputs[1]
    summary = outputs[0]["summary"].decode()
    for key in ("eps", "iterations", "relative_residual", "relative_error", "masked_cells", "converged"):
        assert f"{key}=" in summary


def test_threads_env_fallback(config, monkeypatch):
    import numba

    monkeypatch.setenv("MPI_CORE_THREADS", "1")
    assert main(["phantom", "--config", config(), "--shape", "none"]) == 0
    assert numba.get_num_threads() == 1
