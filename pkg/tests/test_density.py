"""Residual-density stage tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resdens.data import Dataset, trim_region
from resdens.density import (
    DensityCurve,
    default_grid,
    kde,
    mise,
    read_density_csv,
    residual_density,
    write_density_csv,
)
from resdens.errors import GridError, InvalidBandwidth
from resdens.kernels import univariate_kernel
from resdens.smoothing import fit_residuals


def test_single_value_kde_frozen_peak():
    curve = kde(np.array([0.0]), 1.0, grid=np.array([0.0]))
    assert curve.values[0] == 1.23046875  # kernel peak 315/256
    assert curve.n_kept == 1 and curve.b1 == 1.0


def test_kde_is_average_of_bumps():
    values = np.array([-0.3, 0.5])
    b1 = 0.4
    q = univariate_kernel()
    e = 0.1
    expected = (q.eval(0, (-0.3 - e) / b1) + q.eval(0, (0.5 - e) / b1)) / (2 * b1)
    curve = kde(values, b1, grid=np.array([e]))
    assert curve.values[0] == pytest.approx(expected, rel=1e-15)


@settings(deadline=None, max_examples=20)
@given(
    st.lists(st.floats(-3.0, 3.0), min_size=2, max_size=40),
    st.floats(0.05, 1.0),
)
def test_default_grid_mass_is_one(values, b1):
    curve = kde(np.asarray(values), b1)
    assert curve.mass() == pytest.approx(1.0, abs=1e-6)
    step = curve.grid[1] - curve.grid[0]
    assert step <= b1 / 20.0 + 1e-12


def test_default_grid_covers_support():
    vals = np.array([-1.0, 2.0])
    grid = default_grid(vals, 0.5, univariate_kernel())
    assert grid[0] == pytest.approx(-1.5)
    assert grid[-1] == pytest.approx(2.5)
    assert grid.size >= 512


def test_kde_validation():
    with pytest.raises(InvalidBandwidth):
        kde(np.array([0.0, 1.0]), 0.0)
    with pytest.raises(GridError):
        kde(np.array([]), 0.5)
    with pytest.raises(GridError):
        kde(np.zeros((2, 2)), 0.5)


def fitted(seed=13, n=60):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 1))
    eps = rng.normal(0.0, 0.5, size=n)
    data = Dataset(X=X, Y=(X[:, 0] ** 2) + eps, true_m=X[:, 0] ** 2, true_eps=eps)
    return data, fit_residuals(data, 0.45, trim_region([-0.75], [0.75]))


def test_residual_density_uses_only_kept_residuals():
    _, fit = fitted()
    assert 0 < fit.n_kept < fit.kept.size
    curve = residual_density(fit, 0.3)
    oracle = kde(fit.residual[fit.kept], 0.3, grid=curve.grid)
    assert np.array_equal(curve.values, oracle.values)
    assert curve.n_kept == fit.n_kept
    assert curve.mass() == pytest.approx(1.0, abs=1e-6)


def test_mise_against_known_truth_is_small():
    _, fit = fitted(seed=29, n=400)
    curve = residual_density(fit, 0.25)

    def truth(e):
        return np.exp(-(e**2) / (2 * 0.25)) / np.sqrt(2 * np.pi * 0.25)

    # the grid spans the residual range; widen via an explicit grid so the
    # coverage guard sees essentially all the true mass
    wide = np.linspace(-3.0, 3.0, 601)
    curve = residual_density(fit, 0.25, grid=wide)
    value = mise(curve, truth)
    assert 0.0 < value < 0.05


def test_mise_guards_against_bad_grids():
    curve = DensityCurve(
        grid=np.linspace(-0.1, 0.1, 8),
        values=np.zeros(8),
        b1=0.1,
        n_kept=10,
        kernel_name="quadweight",
    )

    def truth(e):
        return np.where(np.abs(e) <= 0.5, 1.0, 0.0)

    with pytest.raises(GridError, match=">= 16"):
        mise(curve, truth)
    narrow = DensityCurve(
        grid=np.linspace(-0.1, 0.1, 64),
        values=np.zeros(64),
        b1=0.1,
        n_kept=10,
        kernel_name="quadweight",
    )
    with pytest.raises(GridError, match="covers only"):
        mise(narrow, truth)


def test_density_csv_roundtrip_exact(tmp_path):
    _, fit = fitted(seed=37)
    curve = residual_density(fit, 0.3)
    path = tmp_path / "curve.csv"
    write_density_csv(path, curve)
    back = read_density_csv(path)
    assert np.array_equal(back.grid, curve.grid)
    assert np.array_equal(back.values, curve.values)
    assert back.b1 == curve.b1
    assert back.n_kept == curve.n_kept
    assert back.kernel_name == curve.kernel_name
