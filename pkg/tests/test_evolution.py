import numpy as np
import pytest

from smoothpaths import oracles
from smoothpaths.errors import BadTimeStep, UnsupportedProcess
from smoothpaths.evolution import (ExactPropagator, crank_nicolson_kernel, evolve,
                                   evolve_crank_nicolson, evolve_density, evolve_split_step,
                                   exact_propagator, free_propagator, unitarity_check)
from smoothpaths.hamiltonian import HamiltonianSpec, free, harmonic
from smoothpaths.states import coherent, density_from_mixture, gaussian, harmonic_eigenstate


def _overlap_error(a, b, grid):
    return np.abs(a - b).max()


def test_free_gaussian_against_closed_form(grid, free_ham):
    psi = gaussian(grid, x0=-1.0, sigma=1.0, k0=1.0)
    out = evolve(psi, free_ham, 0.5, 2, method="exact")
    ref = oracles.spreading_gaussian(grid.x, 1.0, 1.0, -1.0, 1.0)
    ref = ref / np.sqrt(np.sum(np.abs(ref) ** 2) * grid.dx)
    assert np.abs(out.values - ref).max() < 1e-12
    assert out.time == 1.0


@pytest.mark.parametrize("method", ["split-step", "crank-nicolson"])
def test_integrators_converge_to_exact(grid, free_ham, method):
    psi = gaussian(grid, sigma=1.0, k0=0.5)
    ref = evolve(psi, free_ham, 0.2, 1, method="exact").values
    out = evolve(psi, free_ham, 0.01, 20, method=method).values
    # the free kinetic step is exact in both integrators up to the Cayley phase error
    tol = 1e-12 if method == "split-step" else 1e-3
    assert np.abs(out - ref).max() < tol


def test_harmonic_coherent_state_tracks_classical_centre(grid, osc):
    psi = coherent(grid, x0=2.0)
    out = evolve(psi, osc, 1e-3, 1000, method="split-step")
    mean = np.sum(grid.x * out.density) * grid.dx
    assert mean == pytest.approx(oracles.coherent_center(1.0, 2.0)[0], abs=1e-6)


def test_split_step_is_second_order(grid, osc):
    psi = coherent(grid, x0=1.0)
    ref = evolve(psi, osc, 0.5, 1, method="exact").values
    errs = [np.abs(evolve_split_step(psi, osc, 0.5 / n, n).values - ref).max()
            for n in (10, 20, 40)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2) < 0.1)


def test_eigenstate_only_rotates(grid, osc):
    psi = harmonic_eigenstate(grid, 1)
    out = evolve(psi, osc, 0.7, 1, method="exact")
    phase = np.exp(-1j * 1.5 * 0.7)
    assert np.abs(out.values - phase * psi.values).max() < 1e-10


def test_free_propagator_is_unitary(small_grid):
    U = free_propagator(small_grid, 1.0, 1.0, 0.3)
    assert unitarity_check(U) < 1e-12


def test_exact_and_crank_nicolson_kernels(small_grid, osc):
    U = exact_propagator(small_grid, osc, 0.1)
    C = crank_nicolson_kernel(small_grid, osc, 0.1)
    assert unitarity_check(U) < 1e-12
    assert unitarity_check(C) < 1e-12
    assert U.method == "eigen" and C.method == "crank-nicolson"


def test_kernel_composition(small_grid, osc):
    prop = ExactPropagator(small_grid, osc)
    a = prop.kernel(0.2).operator @ prop.kernel(0.3).operator
    assert np.abs(a - prop.kernel(0.5).operator).max() < 1e-12


def test_backward_evolution_undoes_forward(grid, osc):
    psi = coherent(grid, x0=1.0, p0=0.5)
    prop = ExactPropagator(grid, osc)
    back = prop.apply(prop.apply(psi.values, 0.8), -0.8)
    assert np.abs(back - psi.values).max() < 1e-12


@pytest.mark.parametrize("dt", [0.0, -0.1, np.nan])
def test_bad_time_step(grid, free_ham, dt):
    with pytest.raises(BadTimeStep):
        evolve_split_step(gaussian(grid), free_ham, dt)


def test_split_step_rejects_varying_vector_potential(grid):
    ham = HamiltonianSpec(e=1.0, A=lambda x, t: 0.1 * np.sin(x), uniform_A=False)
    with pytest.raises(UnsupportedProcess):
        evolve_split_step(gaussian(grid), ham, 0.01)
    # the covariant Crank-Nicolson engine accepts it and conserves the norm
    out = evolve_crank_nicolson(gaussian(grid), ham, 0.01, 5)
    assert out.norm() == pytest.approx(1.0, abs=1e-10)


def test_uniform_vector_potential_shifts_momentum(grid):
    from smoothpaths.hamiltonian import uniform_vector_potential
    ham = uniform_vector_potential(0.5)
    psi = gaussian(grid, sigma=1.0, k0=0.5)
    out = evolve(psi, ham, 1.0, 1, method="exact")
    # canonical k0 = 0.5 with eA = 0.5 leaves zero kinetic momentum
    mean = np.sum(grid.x * out.density) * grid.dx
    assert abs(mean) < 1e-10


def test_cubic_process_is_rejected(grid):
    ham = free().with_(higher_coefficients=(0.1,))
    with pytest.raises(UnsupportedProcess):
        evolve(gaussian(grid), ham, 0.01)


def test_unknown_method(grid, free_ham):
    with pytest.raises(ValueError):
        evolve(gaussian(grid), free_ham, 0.01, method="leapfrog")


@pytest.mark.parametrize("method", ["split-step", "exact", "crank-nicolson"])
def test_density_evolution_matches_components(small_grid, osc, method):
    a, b = coherent(small_grid, x0=-1.0), gaussian(small_grid, x0=1.0, sigma=0.8)
    rho = density_from_mixture([(0.4, a), (0.6, b)])
    out = evolve_density(rho, osc, 0.05, 4, method=method)
    pa = evolve(a, osc, 0.05, 4, method=method if method != "crank-nicolson" else "exact")
    pb = evolve(b, osc, 0.05, 4, method=method if method != "crank-nicolson" else "exact")
    ref = 0.4 * pa.density + 0.6 * pb.density
    tol = 1e-10 if method != "crank-nicolson" else 1e-3
    assert np.abs(out.density - ref).max() < tol
    assert out.trace() == pytest.approx(1.0, abs=1e-10)
