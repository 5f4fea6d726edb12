"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Scenario-level criteria reuse the registered checks on the bundled scenarios;
the others call the library directly. Tolerances are the acceptance ones.
"""

import numpy as np
import pytest

from smoothpaths import bell
from smoothpaths.checks import CHECKS, Context
from smoothpaths.cli import bundled_scenarios, convergence_study
from smoothpaths.config import load_config, validate
from smoothpaths.evolution import evolve
from smoothpaths.hamilton_jacobi import quantum_potential
from smoothpaths.moments import (full_moments_trace, generating_function, local_moments,
                                 relative_bulk_error)
from smoothpaths.retarded import lagrangian_limit, lagrangian_target
from smoothpaths.states import DensityMatrix, coherent, gaussian, harmonic_eigenstate

PURE_TIME_DEPENDENT = ("free_gaussian", "boosted_gaussian", "coherent_state")


@pytest.fixture(scope="module")
def contexts(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(name):
        if name not in cache:
            config = load_config(bundled_scenarios()[name])
            ham, state = validate(config)
            cache[name] = Context(config, ham, state, root / name, timestamp=False)
        return cache[name]

    get.root = root
    return get


def run_check(ctx, name):
    return CHECKS[name].func(ctx)


def _reduced(state):
    psi = state.values
    return [DensityMatrix(state.grid_a, psi @ psi.conj().T * state.grid_b.dx, 0.0,
                          state.m_a, state.hbar),
            DensityMatrix(state.grid_b, psi.T @ psi.conj() * state.grid_a.dx, 0.0,
                          state.m_b, state.hbar)]


def test_criterion_01_density_axioms(contexts, acceptance):
    rows = {name: run_check(contexts(name), "density_axioms").measured
            for name in bundled_scenarios()}
    herm = max(r["hermiticity"] for r in rows.values())
    trace = max(r["trace_error"] for r in rows.values())
    eig = min(r["min_eigenvalue"] for r in rows.values())
    ok = herm < 1e-10 and trace <= 1e-9 and eig >= -1e-9
    acceptance.record(1, "density-matrix axioms", ok,
                      f"scenarios={len(rows)} hermiticity={herm:.2e} trace_err={trace:.2e} "
                      f"min_eig={eig:.2e}")
    assert ok


def test_criterion_02_continuity(contexts, acceptance, tmp_path):
    res = run_check(contexts("free_gaussian"), "continuity_n1")
    study, _ = convergence_study(bundled_scenarios()["free_gaussian"], "continuity_n1", 3,
                                 root=tmp_path, timestamp=False)
    order = study["order"]
    ok = res.measured["l1"] < 1e-5 and order is not None and order >= 1.8
    acceptance.record(2, "continuity n=1", ok,
                      f"l1={res.measured['l1']:.2e} order={order}")
    assert ok


def test_criterion_03_quantum_potential(grid, free_ham, osc, acceptance):
    spreading = evolve(gaussian(grid), free_ham, 1.0, 1, method="exact")
    cases = {
        "stationary": (gaussian(grid), free_ham),
        "spreading": (spreading, free_ham),
        "harmonic_ground": (harmonic_eigenstate(grid, 0), osc),
        "coherent": (coherent(grid, x0=2.0), osc),
    }
    diffs = {k: quantum_potential(psi, ham, floor=1e-8).relative_difference()
             for k, (psi, ham) in cases.items()}
    vq = quantum_potential(gaussian(grid), free_ham).amplitude
    v0 = vq[np.argmin(np.abs(grid.x))]
    v2 = vq[np.argmin(np.abs(grid.x - 2.0))]
    ok = max(diffs.values()) < 1e-7 and abs(v0 - 0.25) < 1e-6 and abs(v2 + 0.25) < 1e-6
    acceptance.record(3, "quantum potential identity", ok,
                      f"max_rel={max(diffs.values()):.2e} V_Q(0)={v0:.8f} V_Q(2)={v2:.8f}")
    assert ok


def test_criterion_04_negative_local_kinetic(grid, free_ham, acceptance):
    mf = local_moments(gaussian(grid), free_ham, 2)
    mu2_min = float(mf.densities[2].min())
    total = float(mf.full[2])
    ok = mu2_min < -0.01 and abs(total - 0.25) <= 1e-6
    acceptance.record(4, "negative local kinetic energy", ok,
                      f"min_mu2={mu2_min:.4f} v2_total={total:.10f}")
    assert ok


def test_criterion_05_moment_triangle(contexts, acceptance):
    worst = {}
    for name in bundled_scenarios():
        ctx = contexts(name)
        if ctx.kind == "two_particle":
            # each particle's reduced density matrix
            gap = 0.0
            for rho in _reduced(ctx.state):
                a = local_moments(rho, ctx.ham, 4).full
                b = full_moments_trace(rho, ctx.ham, 4)
                c = generating_function(rho, ctx.ham).moments(4)
                gap = max(gap, np.max(np.abs(a - b)), np.max(np.abs(a - c)),
                          np.max(np.abs(b - c)))
            worst[name] = float(gap)
        else:
            worst[name] = run_check(ctx, "moment_triangle").measured["max_pairwise"]
    ok = max(worst.values()) < 1e-8
    acceptance.record(5, "moment consistency triangle", ok,
                      f"max_pairwise={max(worst.values()):.2e} over {len(worst)} scenarios")
    assert ok


def test_criterion_06_kramers_moyal(contexts, acceptance):
    errs = {}
    for name in ("free_gaussian", "harmonic_ground", "coherent_state"):
        m = run_check(contexts(name), "kramers_moyal").measured
        errs[name] = max(m["relative_error_n1"], m["relative_error_n2"])
    ok = max(errs.values()) < 1e-3
    acceptance.record(6, "Kramers-Moyal reconstruction", ok,
                      " ".join(f"{k}={v:.2e}" for k, v in errs.items()))
    assert ok


def test_criterion_07_hj_residual(contexts, acceptance, tmp_path):
    linf = {name: run_check(contexts(name), "hj_residual").measured["linf"]
            for name in PURE_TIME_DEPENDENT}
    orders = {}
    for name in ("free_gaussian", "coherent_state"):
        study, _ = convergence_study(bundled_scenarios()[name], "hj_residual", 3,
                                     root=tmp_path, timestamp=False)
        orders[name] = study["order"]
    ok = (max(linf.values()) < 1e-5
          and all(o is not None and abs(o - 2.0) < 0.2 for o in orders.values()))
    acceptance.record(7, "quantum HJ residual", ok,
                      f"max_linf={max(linf.values()):.2e} orders={orders}")
    assert ok


def test_criterion_08_classical_limit(contexts, acceptance):
    m = run_check(contexts("free_gaussian"), "classical_limit").measured
    p1, p2 = m["phase_gradient_deviation"], m["max_abs_quantum_potential"]
    ok = 0.8 <= p1 <= 1.2 and 1.8 <= p2 <= 2.2
    acceptance.record(8, "classical limit powers", ok, f"phase={p1:.4f} V_Q={p2:.4f}")
    assert ok


def test_criterion_09a_action_identity(contexts, acceptance):
    worst = max(run_check(contexts(name), "action_identity").measured["identity_residual"]
                for name in ("retarded_action", "free_gaussian", "coherent_state"))
    ok = worst < 1e-12
    acceptance.record(9, "retarded action identity", ok, f"residual={worst:.2e}")
    assert ok


def test_criterion_09b_lagrangian_limit(grid, free_ham, osc, acceptance):
    errs = {}
    point = None
    for label, psi, ham in (("free", gaussian(grid), free_ham),
                            ("harmonic", harmonic_eigenstate(grid, 0), osc)):
        # every bulk point for the free packet so that x = 0 is a centre
        res = lagrangian_limit(ham, psi, stride=1 if label == "free" else 4)
        target = lagrangian_target(psi, ham)[res.centres]
        errs[label] = relative_bulk_error(res.values, target)
        if label == "free":
            j = int(np.argmin(np.abs(res.x)))
            point = (float(res.x[j]), float(res.values[j]))
    x0, value = point
    ok = max(errs.values()) < 1e-3 and abs(x0) < 1e-12 and abs(value - 0.0997) < 1e-4
    acceptance.record(9, "Lagrangian limit", ok,
                      f"rel_err free={errs['free']:.3g} harmonic={errs['harmonic']:.3g} "
                      f"value(x={x0:g})={value:.4f} target=0.0997")
    assert ok


def test_criterion_10_bell_gap(contexts, acceptance):
    m = run_check(contexts("epr_gaussian"), "bell_gap").measured
    ok = (m["product_max_gap"] < 1e-8 and abs(m["velocity_gap"]) > 0
          and m["relative_to_oracle"] < 1e-5)
    acceptance.record(10, "Bell gap", ok,
                      f"product_max_gap={m['product_max_gap']:.2e} "
                      f"vv_gap={m['velocity_gap']:.6f} oracle={m['oracle_gap']:.6f} "
                      f"rel={m['relative_to_oracle']:.2e}")
    assert ok


def test_criterion_11_unitarity(contexts, acceptance):
    ctx = contexts("mixture")
    drift = run_check(ctx, "eigenvalue_drift").measured["max_drift"]
    lin = max(run_check(contexts(name), "linearity").measured["max_error"]
              for name in ("free_gaussian", "mixture"))
    ok = ctx.run.n_steps == 100 and drift < 1e-8 and lin < 1e-10
    acceptance.record(11, "unitarity and linearity", ok,
                      f"eigenvalue_drift={drift:.2e} linearity={lin:.2e}")
    assert ok


def test_criterion_12_gauge_covariance(contexts, acceptance):
    rows = []
    for name in PURE_TIME_DEPENDENT:
        rows += run_check(contexts(name), "gauge_covariance").measured["rows"]
    worst = max(max(r["max_density_change"], r["max_drift_change"]) for r in rows)
    ok = len({r["chi"] for r in rows}) == 3 and worst < 1e-7
    acceptance.record(12, "gauge covariance", ok, f"max_change={worst:.2e}")
    assert ok
