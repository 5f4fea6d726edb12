import numpy as np
import pytest

from smoothpaths.bell import (Observable, SeparabilityViolation, TwoParticleState,
                             bell_naive_correlation, conditional_drifts, epr_gaussian, gap_report,
                             position, product_state, quantum_correlation, velocity)
from smoothpaths.errors import HermiticityError, NormalizationError, OrderError
from smoothpaths.grid import Grid1D
from smoothpaths.states import gaussian


@pytest.fixture
def pgrid():
    return Grid1D(128, -12.0, 12.0)


@pytest.fixture
def epr(pgrid):
    return epr_gaussian(pgrid, s=0.5, S=2.0)


def test_epr_is_entangled_and_normalized(epr):
    sv = epr.schmidt_coefficients()
    assert np.sum(sv**2) == pytest.approx(1.0, abs=1e-12)
    assert not epr.is_product()


def test_epr_correlations(epr):
    x = position("x")
    v = velocity("v")
    assert quantum_correlation(epr, x, x) == pytest.approx(0.9375, abs=1e-8)
    assert quantum_correlation(epr, v, v) == pytest.approx(-0.9375, abs=1e-8)
    # a real wave function carries no drift, so the naive value vanishes
    assert bell_naive_correlation(epr, v, v) == pytest.approx(0.0, abs=1e-14)
    assert bell_naive_correlation(epr, x, x) == pytest.approx(0.9375, abs=1e-8)


def test_epr_gap_report(epr):
    x, v = position("x"), velocity("v")
    rows = {(r.A, r.B): r for r in gap_report(epr, [(x, x), (x, v), (v, v)])}
    assert rows[("x", "x")].classification == "agree"
    assert rows[("x", "v")].classification == "agree"
    assert rows[("v", "v")].classification == "gap"
    assert rows[("v", "v")].gap == pytest.approx(-0.9375, abs=1e-8)
    assert set(rows[("v", "v")].to_dict()) >= {"quantum", "naive", "gap", "classification"}


def _product(pgrid):
    a = gaussian(pgrid, x0=-1.0, sigma=0.8, k0=0.7)
    b = gaussian(pgrid, x0=1.5, sigma=1.2, k0=-0.4)
    return product_state(a, b)


def test_product_state_agrees_for_linear_velocity(pgrid):
    state = _product(pgrid)
    assert state.is_product()
    obs = [position("x"), velocity("v"),
           Observable("xv", ((lambda lam: lam, 1), (0.5, 0)))]
    rows = gap_report(state, [(a, b) for a in obs for b in obs])
    assert all(r.classification == "agree" for r in rows)


def test_product_state_quadratic_velocity_gap(pgrid):
    # v^2 carries the single-particle velocity spread, which the drift omits
    state = _product(pgrid)
    rows = gap_report(state, [(velocity("v2", 2), position("x"))])
    spread = 0.25 / 0.8**2
    assert rows[0].gap == pytest.approx(spread * 1.5, rel=1e-6)


def test_separability_violation_raised(pgrid, monkeypatch):
    import smoothpaths.bell as bell
    state = _product(pgrid)
    monkeypatch.setattr(bell, "bell_naive_correlation", lambda *a: 123.0)
    with pytest.raises(SeparabilityViolation):
        gap_report(state, [(position("x"), position("x"))])


def test_conditional_drifts_of_product(pgrid):
    va, vb = conditional_drifts(_product(pgrid))
    P = _product(pgrid).density
    # away from the tails, where periodic images of the packet stop mattering
    bulk = P > 1e-6 * P.max()
    assert np.allclose(va[bulk], 0.7, atol=1e-8)
    assert np.allclose(vb[bulk], -0.4, atol=1e-8)


def test_degree_cap():
    with pytest.raises(OrderError):
        velocity("v5", 5)


def test_observable_validation():
    with pytest.raises(ValueError):
        Observable("empty", ())
    with pytest.raises(ValueError):
        Observable("neg", ((1.0, -1),))


def test_two_particle_limits(pgrid):
    big = Grid1D(512, -10, 10)
    with pytest.raises(ValueError):
        TwoParticleState(big, pgrid, np.zeros((512, 128)))
    with pytest.raises(NormalizationError):
        TwoParticleState(pgrid, pgrid, np.ones((128, 128)))


def test_imaginary_expectation_is_rejected(pgrid, monkeypatch):
    import smoothpaths.bell as bell
    state = _product(pgrid)
    monkeypatch.setattr(bell, "_apply", lambda obs, values, axis, *a: (1j if axis == 0 else 1) * values)
    with pytest.raises(HermiticityError):
        quantum_correlation(state, position("x"), position("x"))
