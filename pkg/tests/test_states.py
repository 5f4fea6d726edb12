import numpy as np
import pytest

from smoothpaths import oracles
from smoothpaths.errors import DegenerateState, HermiticityError, NormalizationError, WeightError
from smoothpaths.evolution import evolve
from smoothpaths.hamiltonian import HamiltonianSpec, free
from smoothpaths.states import (DensityMatrix, WaveFunction, coherent, density_from_mixture,
                                density_from_pure, gauge_transform, gaussian, harmonic_eigenstate,
                                polar_decompose, reconstruct_density, spectral_decompose)


def test_gaussian_is_normalized_with_right_width(grid):
    psi = gaussian(grid, x0=1.0, sigma=0.7)
    assert psi.is_normalized(1e-12)
    var = np.sum((grid.x - 1.0) ** 2 * psi.density) * grid.dx
    assert np.isclose(var, 0.49, rtol=1e-10)


def test_wavefunction_rejects_bad_values(grid):
    with pytest.raises(ValueError):
        WaveFunction(grid, np.zeros(10))
    bad = np.ones(grid.n_points, dtype=complex)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        WaveFunction(grid, bad)


def test_pure_density_axioms(small_grid):
    rho = density_from_pure(gaussian(small_grid, sigma=0.8, k0=0.5))
    ax = rho.check_axioms()
    assert ax["ok"]
    assert abs(ax["trace"] - 1) < 1e-12
    # rank one: the second eigenvalue is round-off
    assert abs(rho.eigenvalues()[1]) < 1e-12


def test_unnormalized_state_is_rejected(small_grid):
    psi = WaveFunction(small_grid, 2 * gaussian(small_grid).values)
    with pytest.raises(NormalizationError):
        density_from_pure(psi)


def test_mixture_weights(small_grid):
    a, b = gaussian(small_grid, x0=-2), gaussian(small_grid, x0=2)
    with pytest.raises(WeightError):
        density_from_mixture([(0.5, a), (0.6, b)])
    with pytest.raises(WeightError):
        density_from_mixture([(1.2, a), (-0.2, b)])
    with pytest.raises(WeightError):
        density_from_mixture([])


def test_spectral_round_trip(small_grid):
    a, b = gaussian(small_grid, x0=-3, sigma=0.6), gaussian(small_grid, x0=3, k0=1)
    rho = density_from_mixture([(0.3, a), (0.7, b)])
    pairs = spectral_decompose(rho)
    weights = [c for c, _ in pairs[:2]]
    # well-separated components are nearly orthogonal
    assert np.allclose(weights, [0.7, 0.3], atol=1e-8)
    kernel = reconstruct_density(pairs, small_grid)
    assert np.abs(kernel - rho.kernel).max() < 1e-12
    for _, psi in pairs[:2]:
        assert psi.is_normalized(1e-10)


def test_spectral_rejects_non_hermitian(small_grid):
    rng = np.random.default_rng(0)
    k = rng.standard_normal((small_grid.n_points,) * 2)
    with pytest.raises(HermiticityError):
        spectral_decompose(DensityMatrix(small_grid, k))


def test_polar_round_trip_and_phase(grid):
    psi = gaussian(grid, sigma=1.0, k0=2.0)
    polar = polar_decompose(psi)
    # the phase is held across unresolved cells, so only resolved cells round-trip
    res = polar.resolved
    assert np.abs(polar.reconstruct() - psi.values)[res].max() < 1e-14
    bulk = polar.resolved & (np.abs(grid.x) < 4)
    slope = np.gradient(polar.phase, grid.dx)[bulk]
    assert np.allclose(slope, 2.0, atol=1e-8)


def test_polar_of_zero_state(grid):
    with pytest.raises(DegenerateState):
        polar_decompose(WaveFunction(grid, np.zeros(grid.n_points)))


def test_polar_unwraps_fast_phase(grid):
    psi = gaussian(grid, sigma=1.5, k0=40.0)
    polar = polar_decompose(psi)
    assert np.all(np.abs(np.diff(polar.phase[polar.resolved])) < np.pi)


def test_harmonic_eigenstates_are_orthonormal(grid):
    states = [harmonic_eigenstate(grid, n) for n in range(4)]
    gram = np.array([[np.sum(a.values.conj() * b.values) * grid.dx for b in states]
                     for a in states])
    assert np.abs(gram - np.eye(4)).max() < 1e-12


def test_coherent_state_matches_oracle(grid):
    psi = coherent(grid, x0=1.5, p0=-0.5)
    ref = oracles.coherent_state(grid.x, 0.0, 1.5, -0.5)
    overlap = abs(np.sum(ref.conj() * psi.values) * grid.dx) / np.sqrt(
        np.sum(np.abs(ref) ** 2) * grid.dx)
    assert overlap == pytest.approx(1.0, abs=1e-12)


def test_gauge_transform_preserves_density(grid):
    ham = HamiltonianSpec(e=1.0)
    psi = gaussian(grid)
    chi = lambda x, t: 0.3 * np.sin(2 * np.pi * x / grid.length)
    new_psi, new_ham = gauge_transform(psi, ham, chi, time_independent=True)
    assert np.abs(new_psi.density - psi.density).max() < 1e-15
    assert new_ham.has_vector_potential and not new_ham.uniform_A


def test_gauge_transform_commutes_with_evolution(grid):
    # a uniform shift of A by a snapped wave number is a pure Fourier relabelling
    ham = HamiltonianSpec(e=1.0)
    k = 2 * np.pi / grid.length
    psi = gaussian(grid, sigma=1.0, k0=0.5)
    new_psi, new_ham = gauge_transform(psi, ham, lambda x, t: k * x,
                                       dchi_dx=lambda x, t: k + 0 * x, time_independent=True)
    assert new_ham.uniform_A and new_ham.static
    a = evolve(psi, ham, 0.5, 1, method="exact")
    b = evolve(new_psi, new_ham, 0.5, 1, method="exact")
    assert np.abs(b.density - a.density).max() < 1e-12


def test_gauge_needs_charge(grid):
    with pytest.raises(ValueError):
        gauge_transform(gaussian(grid), free(), lambda x, t: x)
