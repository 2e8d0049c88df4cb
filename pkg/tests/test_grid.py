import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpicore.grid import (
    Ball,
    Box,
    DensityField,
    GridSpec,
    PhysicalParams,
    TraceField,
    cell_center,
    default_phantom,
    locate_cell,
    phantom,
    read_field,
    relative_error,
    resolution_param,
    write_field,
)


def test_resolution_param_table_values():
    h30 = resolution_param(PhysicalParams.standard(d=30e-9))
    h20 = resolution_param(PhysicalParams.standard(d=20e-9))
    assert 0.0055 <= h30 <= 0.0062
    assert 0.018 <= h20 <= 0.020


def test_resolution_param_hand_computed():
    # k_b T / (0.6 T * pi/6 * d^3) / (5.5/mu_0 * 0.02), d = 30 nm
    h_sat = 1.38e-23 * 310 / (0.6 * np.pi / 6 * (30e-9) ** 3)
    expected = h_sat / (5.5 / (4e-7 * np.pi) * 20e-3)
    assert resolution_param(PhysicalParams.standard()) == pytest.approx(expected, rel=1e-13)


def test_resolution_param_scaling():
    base = PhysicalParams.standard()
    doubled = PhysicalParams.standard(L_fov=2 * base.L_fov)
    assert resolution_param(doubled) == pytest.approx(resolution_param(base) / 2, rel=1e-15)


@pytest.mark.parametrize("name, increasing", [("d", False), ("g", False), ("L_fov", False), ("T", True)])
def test_resolution_param_monotone(name, increasing):
    base = PhysicalParams.standard()
    values = getattr(base, name) * np.linspace(0.8, 1.25, 12)
    hs = [resolution_param(PhysicalParams.standard(**{name: v})) for v in values]
    diffs = np.diff(hs)
    assert np.all(diffs > 0) if increasing else np.all(diffs < 0)


def test_physical_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams.standard(T=0.0)
    with pytest.raises(ValueError):
        PhysicalParams.standard(d=1e-3)


def test_cell_center_examples():
    g = GridSpec.square(2)
    np.testing.assert_array_equal(cell_center(g, (0, 0)), [-0.5, -0.5])
    np.testing.assert_array_equal(cell_center(g, (1, 1)), [0.5, 0.5])
    np.testing.assert_array_equal(cell_center(GridSpec.square(4), (0, 3)), [-0.75, 0.75])
    with pytest.raises(IndexError):
        cell_center(g, (2, 0))


def test_locate_cell_examples():
    g = GridSpec.square(2)
    assert locate_cell(g, (-0.5, -0.5)) == (0, 0)
    assert locate_cell(g, (1.5, 0.0)) is None
    assert locate_cell(g, (1.0, 1.0)) == (1, 1)
    assert locate_cell(g, (-1.0, 0.0)) == (0, 1)


@pytest.mark.parametrize("shape", [(5,), (3, 4), (2, 3, 4)])
def test_locate_center_round_trip(shape):
    g = GridSpec(shape)
    for idx in itertools.product(*(range(s) for s in shape)):
        assert locate_cell(g, cell_center(g, idx)) == idx


def test_centers_are_row_major():
    g = GridSpec((3, 4))
    centers = g.centers()
    flat = np.ravel_multi_index((2, 1), g.shape)
    np.testing.assert_array_equal(centers[flat], cell_center(g, (2, 1)))


def test_phantom_examples():
    g = GridSpec.square(8)
    assert np.all(phantom(g, [Ball((0.0, 0.0), 0.0, 1.0)]).values == 0)
    assert np.all(phantom(g, [Ball((0.0, 0.0), 2.0, 1.0)]).values == 1)
    two = phantom(g, [Box((-1, -1), (-0.2, -0.2), 0.3), Box((0.2, 0.2), (1, 1), 0.7)])
    assert set(np.unique(two.values)) == {0.0, 0.3, 0.7}
    assert np.all(phantom(g, []).values == 0)
    with pytest.raises(ValueError):
        phantom(g, [Ball((0.0,), 0.5)])


@settings(max_examples=30, deadline=None)
@given(st.permutations(default_phantom(2) + [Ball((0.1, 0.1), 0.5, 0.25)]))
def test_phantom_permutation_invariant(shapes):
    g = GridSpec.square(16)
    ref = phantom(g, default_phantom(2) + [Ball((0.1, 0.1), 0.5, 0.25)])
    np.testing.assert_allclose(phantom(g, shapes).values, ref.values, rtol=0, atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_default_phantom_nonnegative_and_nonempty(n):
    rho = phantom(GridSpec.square(12, n), default_phantom(n))
    assert rho.values.min() >= 0 and rho.values.max() > 0


def test_relative_error():
    g = GridSpec.square(4)
    x = DensityField(g, np.arange(16.0) + 1)
    assert relative_error(x, x) == 0
    assert relative_error(DensityField(g, 2 * x.values), x) == pytest.approx(1.0)
    assert relative_error(DensityField.zeros(g), x) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        relative_error(DensityField.zeros(GridSpec.square(3)), x)


def test_field_validation():
    g = GridSpec.square(3)
    with pytest.raises(ValueError):
        DensityField(g, np.zeros(8))
    with pytest.raises(ValueError):
        DensityField(g, np.full(9, np.nan))
    with pytest.raises(ValueError):
        TraceField(g, np.ones(9), np.zeros(9, bool))


def test_field_csv_round_trip(tmp_path):
    g = GridSpec((3, 5, 2))
    rng = np.random.default_rng(0)
    fld = DensityField(g, rng.normal(size=g.size) * 10.0 ** rng.integers(-300, 300, g.size))
    path = tmp_path / "f.csv"
    write_field(path, fld)
    assert path.read_text().splitlines()[0] == "# grid: n=3 shape=3x5x2"
    back = read_field(path)
    assert back.grid == g
    np.testing.assert_array_equal(back.values, fld.values)


def test_read_field_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# grid: n=2 shape=3\n1\n2\n3\n")
    with pytest.raises(ValueError):
        read_field(path)
