import numpy as np
import pytest

from smoothpaths.retarded import (action_identity_residual, build_slab, first_order_phase_lagrangian,
                                  flagged_cells, lagrangian_limit, lagrangian_target,
                                  retarded_advanced_split, split_fields)
from smoothpaths.states import coherent, gaussian


@pytest.fixture
def slab(grid, free_ham):
    psi = gaussian(grid, sigma=1.0, k0=0.5)
    centres = np.flatnonzero(psi.density > 1e-6)[::32]
    return build_slab(psi, free_ham, centres, 0.1, 0.002)


def test_slab_marginal_is_density(slab):
    assert np.allclose(slab.marginal(), slab.base_density, rtol=1e-12)


def test_split_sums_to_density(slab):
    P_ret, P_adv, f_a = retarded_advanced_split(slab)
    assert np.abs(P_ret + P_adv - slab.P).max() < 1e-15
    assert np.all(P_ret >= -1e-15) and np.all(P_adv >= -1e-15)


def test_action_identity(slab):
    assert action_identity_residual(slab) < 1e-14


def test_split_fields_matches_slab(slab):
    a = split_fields(slab.r, slab.s)
    b = retarded_advanced_split(slab)
    for u, v in zip(a, b):
        assert np.abs(u - v).max() < 1e-14


def test_flagged_cells_need_large_phase():
    from smoothpaths.grid import Grid1D
    from smoothpaths.retarded import TransitionSlab
    g = Grid1D(8, -1, 1)
    w = np.exp(1j * np.linspace(-1.5, 1.5, 8))[None, :]
    slab = TransitionSlab(g, np.array([0]), 0.1, w, np.zeros((1, 8)), np.ones(1))
    assert flagged_cells(slab).sum() == np.sum(np.abs(np.linspace(-1.5, 1.5, 8)) > np.pi / 4)


def test_lagrangian_target_of_plane_drift(grid, free_ham):
    psi = gaussian(grid, sigma=1.0, k0=0.5)
    target = lagrangian_target(psi, free_ham)
    assert np.sum(target) * grid.dx == pytest.approx(0.5 * (0.25 + 0.25), abs=1e-12)


def test_targets_differ_by_quantum_potential(grid, free_ham, stationary):
    from smoothpaths.hamilton_jacobi import quantum_potential
    gap = lagrangian_target(stationary, free_ham) - first_order_phase_lagrangian(stationary,
                                                                                 free_ham)
    vq = quantum_potential(stationary, free_ham)
    m = vq.mask & (stationary.density > 1e-6)
    expected = 2 * vq.amplitude[m] * stationary.density[m] / free_ham.hbar
    assert np.abs(gap[m] - expected).max() < 1e-10


def test_extraction_converges_to_first_order_lagrangian(grid, free_ham, stationary):
    res = lagrangian_limit(free_ham, stationary, stride=32)
    ref = first_order_phase_lagrangian(stationary, free_ham)[res.centres]
    assert np.abs(res.values - ref).max() < 1e-5
    # the phase-weighted density grows linearly with dt
    assert res.fa_slope == pytest.approx(1.0, abs=0.05)


def test_extraction_with_potential(grid, osc):
    psi = coherent(grid, x0=1.0)
    res = lagrangian_limit(osc, psi, stride=32)
    ref = first_order_phase_lagrangian(psi, osc)[res.centres]
    scale = np.abs(ref).max()
    assert np.abs(res.values - ref).max() < 1e-4 * scale
