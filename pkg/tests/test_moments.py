import numpy as np
import pytest

from smoothpaths.errors import AliasError, OrderError
from smoothpaths.evolution import evolve
from smoothpaths.hamiltonian import HamiltonianSpec, uniform_vector_potential
from smoothpaths.moments import (continuity_residuals, full_moments_trace, generating_function,
                                 kramers_moyal_extract, local_moments, polynomial_extrapolate,
                                 relative_bulk_error)
from smoothpaths.states import density_from_mixture, gaussian


def test_zeroth_moment_is_density(grid, free_ham):
    psi = gaussian(grid, sigma=0.8, k0=1.0)
    mf = local_moments(psi, free_ham, 2)
    assert np.abs(mf.densities[0] - psi.density).max() < 1e-15


def test_gaussian_moments(grid, free_ham, stationary):
    full = local_moments(stationary, free_ham, 4).full
    assert full[1] == pytest.approx(0.0, abs=1e-15)
    assert full[2] == pytest.approx(0.25, abs=1e-12)
    assert full[4] == pytest.approx(0.1875, abs=1e-12)


def test_local_second_moment_turns_negative(grid, free_ham, stationary):
    mu2 = local_moments(stationary, free_ham, 2).densities[2]
    j = np.argmin(mu2)
    assert mu2[j] == pytest.approx(-0.0270, abs=5e-5)
    assert abs(abs(grid.x[j]) - 2.0) < 2 * grid.dx


def test_drift_of_boosted_gaussian(grid, free_ham):
    psi = gaussian(grid, sigma=1.0, k0=0.7)
    mf = local_moments(psi, free_ham, 1)
    v = mf.conditional(1)
    ok = np.isfinite(v)
    assert np.allclose(v[ok], 0.7, atol=1e-10)


def test_three_routes_agree_for_mixture(small_grid, free_ham):
    rho = density_from_mixture([(0.3, gaussian(small_grid, x0=-2, k0=0.5)),
                                (0.7, gaussian(small_grid, x0=2, sigma=0.8, k0=-0.25))])
    local = local_moments(rho, free_ham, 4).full
    trace = full_moments_trace(rho, free_ham, 4)
    gf = generating_function(rho, free_ham)
    assert np.allclose(local, trace, atol=1e-10)
    assert np.allclose(gf.moments(4), trace, atol=1e-8)


def test_routes_agree_with_vector_potential(grid):
    ham = uniform_vector_potential(0.3)
    psi = gaussian(grid, k0=1.0)
    local = local_moments(psi, ham, 3).full
    trace = full_moments_trace(psi, ham, 3)
    assert local[1] == pytest.approx(0.7, abs=1e-12)
    assert np.allclose(local, trace, atol=1e-11)


def test_weyl_and_standard_agree_on_integrals(grid, free_ham):
    psi = gaussian(grid, sigma=0.9, k0=0.4)
    a = local_moments(psi, free_ham, 4, "standard").full
    b = local_moments(psi, free_ham, 4, "weyl").full
    assert np.allclose(a, b, atol=1e-12)


def test_order_cap(grid, free_ham):
    with pytest.raises(OrderError):
        local_moments(gaussian(grid), free_ham, 9)


def test_generating_function_alias_guard(grid):
    ham = HamiltonianSpec(hbar=1.0, m=0.01)
    with pytest.raises(AliasError):
        generating_function(gaussian(grid), ham, alpha_max=1.0)


def test_continuity_first_order(grid, free_ham):
    psi = gaussian(grid, x0=-1, sigma=1.0, k0=1.0)
    dt = 1e-3
    series = [evolve(psi, free_ham, dt, j, method="exact") if j else psi for j in range(5)]
    res = continuity_residuals(series, free_ham, 1)
    # fourth-order centred stencil on exact snapshots
    assert res.l1 < 1e-10
    three = continuity_residuals(series[:3], free_ham, 1)
    assert 1e-8 < three.l1 < 1e-6


def test_continuity_second_order_free(grid, free_ham):
    psi = gaussian(grid, sigma=1.0, k0=0.5)
    dt = 1e-2
    series = [evolve(psi, free_ham, dt, j, method="exact") if j else psi for j in range(3)]
    weyl = continuity_residuals(series, free_ham, 2)
    std = continuity_residuals(series, free_ham, 2, ordering="standard")
    assert weyl.l1 < 1e-3
    # standard ordering leaves the hbar^2 P''''/4m^2 term behind
    assert std.l1 > 10 * weyl.l1


def test_continuity_requires_equal_spacing(grid, free_ham):
    psi = gaussian(grid)
    series = [psi, psi.with_values(psi.values, 0.1), psi.with_values(psi.values, 0.3)]
    with pytest.raises(ValueError):
        continuity_residuals(series, free_ham, 1)


def test_kramers_moyal_drift(grid, free_ham):
    psi = gaussian(grid, sigma=1.0, k0=0.5)
    km = kramers_moyal_extract(free_ham, psi, n=1, stride=16)
    assert np.abs(km.values - 0.5).max() < 1e-6


def test_kramers_moyal_second_moment(grid, free_ham, stationary):
    km = kramers_moyal_extract(free_ham, stationary, n=2, stride=16)
    target = local_moments(stationary, free_ham, 2).conditional(2)[km.centres]
    assert relative_bulk_error(km.values, target) < 1e-3


def test_kramers_moyal_rejects_order(grid, free_ham):
    with pytest.raises(OrderError):
        kramers_moyal_extract(free_ham, gaussian(grid), n=3)


def test_polynomial_extrapolate_exact_for_quadratics():
    h = np.array([0.4, 0.2, 0.1])
    assert polynomial_extrapolate(h, 3 + 2 * h - h**2) == pytest.approx(3.0)


def test_relative_error_scale_floor():
    assert relative_bulk_error(np.full(3, 1e-3), np.zeros(3), scale=0.5) == pytest.approx(2e-3)


def test_generating_function_rejects_unresolved_state(grid, free_ham):
    psi = gaussian(grid, sigma=1.0, k0=0.95 * grid.k_max)
    with pytest.raises(AliasError):
        generating_function(psi, free_ham, alpha_max=0.1)
