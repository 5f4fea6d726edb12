import numpy as np
import pytest

from smoothpaths.errors import GridMismatch, StencilTooShort
from smoothpaths.grid import (Field, Grid1D, fd_weights, finite_difference_time, integrate,
                              spectral_derivative, spectral_power, spectral_shift, tail_mass)


def test_grid_geometry(grid):
    assert grid.dx == 1 / 32
    assert grid.x[0] == -16.0 and grid.x[-1] == 16.0 - 1 / 32
    assert np.isclose(grid.k_max, 32 * np.pi)


@pytest.mark.parametrize("n", [100, 0, 1, 3])
def test_grid_rejects_non_power_of_two(n):
    with pytest.raises(ValueError):
        Grid1D(n, -1.0, 1.0)


def test_grid_rejects_empty_domain():
    with pytest.raises(ValueError):
        Grid1D(8, 1.0, 1.0)


def test_integrate_gaussian(grid):
    f = np.exp(-grid.x**2 / 2)
    assert abs(integrate(f, grid) - np.sqrt(2 * np.pi)) < 1e-14


def test_integrate_requires_grid_for_arrays(grid):
    with pytest.raises(GridMismatch):
        integrate(np.ones(grid.n_points))
    with pytest.raises(GridMismatch):
        integrate(np.ones(7), grid)


def test_spectral_derivative_of_periodic_mode(grid):
    k = 2 * np.pi * 3 / grid.length
    f = np.sin(k * grid.x)
    assert np.max(np.abs(spectral_derivative(f, 1, grid) - k * np.cos(k * grid.x))) < 1e-11
    assert np.max(np.abs(spectral_derivative(f, 2, grid) + k**2 * f)) < 1e-11


def test_spectral_derivative_of_gaussian(grid):
    f = np.exp(-grid.x**2 / 2)
    assert np.max(np.abs(spectral_derivative(f, 1, grid) + grid.x * f)) < 1e-12


def test_spectral_derivative_keeps_field_type(grid):
    fld = Field(grid, np.exp(-grid.x**2), 0.5)
    out = spectral_derivative(fld, 1)
    assert isinstance(out, Field) and out.time_stamp == 0.5


def test_spectral_shift_matches_translation(grid):
    f = np.exp(-grid.x**2)
    shifted = spectral_shift(f, 0.3, grid)
    assert np.max(np.abs(shifted - np.exp(-(grid.x + 0.3) ** 2))) < 1e-12


def test_parseval(grid, rng):
    f = np.exp(-grid.x**2) * (1 + 0.1 * rng.standard_normal(grid.n_points))
    assert np.isclose(spectral_power(f, grid), integrate(np.abs(f) ** 2, grid), rtol=1e-13)


def test_tail_mass_sees_seam():
    values = np.zeros(16)
    values[-1] = 1e-3
    assert tail_mass(values) == pytest.approx(1e-6)


def test_fd_weights_central_second_derivative():
    assert np.allclose(fd_weights([-1, 0, 1], 2), [1, -2, 1])


def test_finite_difference_time_exact_for_quadratics():
    dt = 0.1
    samples = [(j * dt) ** 2 for j in range(3)]
    assert finite_difference_time(samples, dt, 1) == pytest.approx(2 * dt)
    assert finite_difference_time(samples, dt, 2) == pytest.approx(2.0)


def test_finite_difference_time_needs_enough_samples():
    with pytest.raises(StencilTooShort):
        finite_difference_time([1.0, 2.0], 0.1, 2)
