"""Polar (Madelung) fields, quantum and classical Hamilton-Jacobi equations.

The real part of the Schrodinger equation in polar form reads

    -dS/dt = (dS/dx - eA)^2 / 2m + V_Q + e*phi + V,    V_Q = -hbar^2 r'' / (2 m r),

and ``V_Q`` equals the kinetic energy of the stochastic velocity fluctuations,
``m (<v^2> - <v>^2) / 2``. This module evaluates both sides of these
relations, integrates the classical equation (``V_Q`` dropped) by
characteristics, and transports samples along the drift field.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import CausticError, PhaseContinuityError
from .evolution import ExactPropagator
from .grid import Grid1D, apply_fourier_multiplier, finite_difference_time
from .hamiltonian import HamiltonianSpec
from .moments import local_moments
from .states import WaveFunction, gaussian

logger = logging.getLogger(__name__)

MASK_FLOOR = 1e-8


def bulk_mask(P, floor: float = MASK_FLOOR) -> np.ndarray:
    return P > floor * np.max(P)


def phase_gradient(psi: WaveFunction) -> np.ndarray:
    """``dS/dx = hbar Im(psi'/psi)``, independent of any phase unwrapping."""
    dpsi = apply_fourier_multiplier(psi.values, 1j * psi.grid.k)
    with np.errstate(divide="ignore", invalid="ignore"):
        return psi.hbar * np.imag(dpsi / psi.values)


def drift_velocity(psi: WaveFunction, ham: HamiltonianSpec) -> np.ndarray:
    """``<v> = (dS/dx - eA) / m``."""
    return (phase_gradient(psi) - ham.eA(psi.grid.x, psi.time)) / ham.m


@dataclass(frozen=True)
class QuantumPotential:
    """Both evaluations of ``V_Q``; NaN outside ``mask``."""

    amplitude: np.ndarray
    fluctuation: np.ndarray
    mask: np.ndarray

    def relative_difference(self) -> float:
        a, f = self.amplitude[self.mask], self.fluctuation[self.mask]
        return float(np.max(np.abs(a - f)) / max(np.max(np.abs(a)), 1e-300))


def quantum_potential(state, ham: HamiltonianSpec, floor: float = MASK_FLOOR) -> QuantumPotential:
    """``V_Q`` from the amplitude and from the velocity fluctuations.

    The amplitude route differentiates ``r = sqrt(P)`` spectrally; the
    fluctuation route uses the standard-ordered local moments,
    ``m (mu_2/mu_0 - (mu_1/mu_0)^2) / 2``. For mixed states the two differ by
    the spread of drift velocities between components.
    """
    grid = state.grid
    mf = local_moments(state, ham, 2, "standard")
    P = mf.densities[0]
    mask = bulk_mask(P, floor)
    r = np.sqrt(np.clip(P, 0.0, None))
    r2 = np.real(apply_fourier_multiplier(r, -(grid.k**2)))
    amp = np.full_like(P, np.nan)
    fluc = np.full_like(P, np.nan)
    amp[mask] = -(ham.hbar**2) * r2[mask] / (2.0 * ham.m * r[mask])
    v1 = mf.densities[1][mask] / P[mask]
    v2 = mf.densities[2][mask] / P[mask]
    fluc[mask] = 0.5 * ham.m * (v2 - v1**2)
    return QuantumPotential(amp, fluc, mask)


def energy_bookkeeping(psi: WaveFunction, ham: HamiltonianSpec) -> tuple[float, float]:
    """``(int (m<v>^2/2 + V_Q + V_tot) P, <psi|H|psi>)`` for a pure state.

    The second value is computed in the plane-wave basis for the kinetic term.
    The first needs a node-free state: at a simple zero ``r = |psi|`` has a
    kink that the spectral second derivative cannot resolve.
    """
    grid, t = psi.grid, psi.time
    P = psi.density
    mask = bulk_mask(P)
    v = drift_velocity(psi, ham)
    vq = quantum_potential(psi, ham).amplitude
    Vt = ham.total_potential(grid.x, t)
    local = np.zeros_like(P)
    local[mask] = (0.5 * ham.m * v[mask] ** 2 + vq[mask]) * P[mask]
    lhs = float(np.sum(local + Vt * P) * grid.dx)
    eA = float(ham.eA(np.zeros(1), t)[0]) if ham.has_vector_potential else 0.0
    spec = np.abs(np.fft.fft(psi.values)) ** 2 * grid.dx / grid.n_points
    kinetic = np.sum((ham.hbar * grid.k - eA) ** 2 / (2.0 * ham.m) * spec)
    return lhs, float(kinetic + np.sum(Vt * P) * grid.dx)


# quantum HJ residual --------------------------------------------------------

def phase_time_derivative(series, max_step: float = np.pi / 2) -> np.ndarray:
    """``dS/dt`` at the stencil centre from snapshots at equal spacing.

    Phases are tracked pointwise in time through ``angle(psi_j conj(psi_{j-1}))``,
    so no global phase is removed and ``-dS/dt = E`` holds for eigenstates.

    Raises
    ------
    PhaseContinuityError
        If the phase moves by more than ``max_step`` between neighbouring
        snapshots at the amplitude maximum, where the branch would be ambiguous.
    """
    series = list(series)
    dt = series[1].time - series[0].time
    ref = series[len(series) // 2] if len(series) % 2 else series[0]
    peak = int(np.argmax(np.abs(ref.values)))
    steps = []
    for a, b in zip(series, series[1:]):
        step = np.angle(b.values * a.values.conj())
        if abs(step[peak]) > max_step:
            raise PhaseContinuityError(
                f"phase jumps by {step[peak]:.3f} rad between snapshots at t={a.time:.6g}; "
                "reduce the time step"
            )
        steps.append(step)
    theta = np.concatenate([np.zeros((1, ref.grid.n_points)), np.cumsum(steps, axis=0)])
    return ref.hbar * finite_difference_time(list(theta), dt, 1)


@dataclass(frozen=True)
class HJResidual:
    residual: np.ndarray
    mask: np.ndarray
    l1: float
    linf: float
    dt: float


def quantum_hj_residual(series, ham: HamiltonianSpec, threshold: float = 1e-6) -> HJResidual:
    """Residual of the quantum HJ equation on ``P > threshold`` at the centre snapshot."""
    series = list(series)
    if len(series) < 2:
        raise ValueError("need at least two snapshots")
    ref = series[len(series) // 2] if len(series) % 2 else series[0]
    grid, t = ref.grid, ref.time
    dSdt = phase_time_derivative(series)
    kin = phase_gradient(ref) - ham.eA(grid.x, t)
    vq = quantum_potential(ref, ham).amplitude
    P = ref.density
    mask = (P > threshold) & np.isfinite(vq)
    res = np.zeros_like(P)
    res[mask] = (-dSdt[mask] - kin[mask] ** 2 / (2.0 * ham.m) - vq[mask]
                 - ham.total_potential(grid.x, t)[mask])
    dt = series[1].time - series[0].time
    return HJResidual(res, mask, float(np.sum(np.abs(res)) * grid.dx),
                      float(np.max(np.abs(res))), dt)


def de_broglie_check(series, ham: HamiltonianSpec, threshold: float = 1e-6) -> dict:
    """Residual fields of ``hbar<k> = m<v>`` and ``hbar<Omega> = m<v^2>/2 + e phi + V``.

    ``<k> = ds/dx - eA/hbar`` and ``<Omega> = -ds/dt`` come from the phase
    ``s = S/hbar`` of the snapshots; the velocity moments come from the
    operator route. For a free particle the second relation reduces to
    ``hbar<Omega> = m<v^2>/2``.
    """
    series = list(series)
    ref = series[len(series) // 2] if len(series) % 2 else series[0]
    mf = local_moments(ref, ham, 2)
    P = mf.densities[0]
    mask = P > threshold
    v1 = mf.densities[1][mask] / P[mask]
    v2 = mf.densities[2][mask] / P[mask]
    hk = phase_gradient(ref)[mask] - ham.eA(ref.grid.x, ref.time)[mask]
    h_omega = -phase_time_derivative(series)[mask]
    k_res = hk - ham.m * v1
    Vt = ham.total_potential(ref.grid.x, ref.time)[mask]
    w_res = h_omega - 0.5 * ham.m * v2 - Vt
    return {
        "x": ref.grid.x[mask],
        "k_residual": k_res,
        "omega_residual": w_res,
        "k_linf": float(np.max(np.abs(k_res))),
        "omega_linf": float(np.max(np.abs(w_res))),
        "omega_scale": float(np.max(np.abs(0.5 * ham.m * v2 + Vt))),
    }


# classical HJ by characteristics --------------------------------------------

@dataclass
class ClassicalHJSolution:
    """Rays ``(x, p, S)`` on a time grid and ``S_cl`` resampled at ``t_final``."""

    grid: Grid1D
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    S: np.ndarray
    t_caustic: float | None = None

    def spline(self, j: int = -1) -> CubicSpline:
        return CubicSpline(self.x[j], self.S[j])

    def action_on_grid(self, j: int = -1) -> np.ndarray:
        """``S_cl`` on grid points covered by the rays (NaN elsewhere)."""
        xs = self.grid.x
        out = np.full(xs.shape, np.nan)
        inside = (xs >= self.x[j].min()) & (xs <= self.x[j].max())
        out[inside] = self.spline(j)(xs[inside])
        return out

    def momentum_on_grid(self, j: int = -1) -> np.ndarray:
        xs = self.grid.x
        out = np.full(xs.shape, np.nan)
        inside = (xs >= self.x[j].min()) & (xs <= self.x[j].max())
        out[inside] = CubicSpline(self.x[j], self.p[j])(xs[inside])
        return out

    def gradient_consistency(self, j: int = -1) -> float:
        """``max |p - dS_cl/dx|`` along the rays."""
        return float(np.max(np.abs(self.spline(j)(self.x[j], 1) - self.p[j])))


def classical_hj_solve(ham: HamiltonianSpec, S0, t_final: float, grid: Grid1D,
                       x_range=None, n_rays: int = 257, n_steps: int = 1000,
                       t0: float = 0.0, dS0=None) -> ClassicalHJSolution:
    """Integrate the classical HJ equation by characteristics.

    Rays start at ``n_rays`` points of ``x_range`` with canonical momentum
    ``p = dS0/dx`` and obey ``x' = (p - eA)/m``, ``p' = -dH/dx``,
    ``S' = p x' - H`` (RK4).

    Parameters
    ----------
    S0 : callable
        Initial action ``S0(x)``.
    dS0 : callable, optional
        Its derivative; a fourth-order central difference is used if omitted.

    Raises
    ------
    CausticError
        When neighbouring rays cross before ``t_final``; the crossing time is
        linearly interpolated between steps.
    """
    if x_range is None:
        x_range = (grid.x_min + 0.1 * grid.length, grid.x_max - 0.1 * grid.length)
    x = np.linspace(x_range[0], x_range[1], n_rays)
    if dS0 is None:
        h = 1e-4
        dS0 = lambda y: (-S0(y + 2 * h) + 8 * S0(y + h) - 8 * S0(y - h) + S0(y - 2 * h)) / (12 * h)
    p = np.asarray(dS0(x), dtype=float) * np.ones_like(x)
    S = np.asarray(S0(x), dtype=float) * np.ones_like(x)
    m = ham.m

    def rhs(state, t):
        xx, pp = state[0], state[1]
        eA = ham.eA(xx, t)
        kin = pp - eA
        xdot = kin / m
        pdot = kin * ham.eA_gradient(xx, t) / m + ham.force(xx, t)
        H = kin**2 / (2 * m) + ham.total_potential(xx, t)
        return np.stack([xdot, pdot, pp * xdot - H])

    dt = (t_final - t0) / n_steps
    times = t0 + dt * np.arange(n_steps + 1)
    state = np.stack([x, p, S])
    hist = [state]
    gaps_prev = np.diff(x)
    for j in range(n_steps):
        t = times[j]
        k1 = rhs(state, t)
        k2 = rhs(state + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(state + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rhs(state + dt * k3, t + dt)
        state = state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        gaps = np.diff(state[0])
        if np.any(gaps <= 0):
            i = int(np.argmin(gaps))
            frac = gaps_prev[i] / (gaps_prev[i] - gaps[i])
            t_c = float(t + frac * dt)
            raise CausticError(f"rays cross at t = {t_c:.6g}", t_c)
        gaps_prev = gaps
        hist.append(state)
    hist = np.array(hist)
    return ClassicalHJSolution(grid, times, hist[:, 0], hist[:, 1], hist[:, 2])


# classical limit ------------------------------------------------------------

@dataclass
class ScalingStudy:
    hbar: np.ndarray
    phase_gradient_deviation: np.ndarray
    action_gradient_deviation: np.ndarray
    max_quantum_potential: np.ndarray
    centre_deviation: np.ndarray
    powers: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [
            {"hbar": h, "phase_gradient_deviation": a, "action_gradient_deviation": b,
             "max_abs_quantum_potential": c, "centre_deviation": d}
            for h, a, b, c, d in zip(self.hbar, self.phase_gradient_deviation,
                                     self.action_gradient_deviation,
                                     self.max_quantum_potential, self.centre_deviation)
        ]

    def monotone(self) -> bool:
        cols = (self.phase_gradient_deviation, self.action_gradient_deviation,
                self.max_quantum_potential)
        return all(np.all(np.diff(c) > 0) for c in cols)


def fit_power(x, y) -> float:
    """Slope of ``log y`` against ``log x`` by least squares."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def hbar_scaling_study(grid: Grid1D, hbar_list, sigma0: float = 1.0, p0: float = 0.5,
                       t_final: float = 1.0, m: float = 1.0, potential: str = "free",
                       omega: float = 1.0, x0: float = 0.0, bulk_sigmas: float = 3.0,
                       n_steps: int = 400) -> ScalingStudy:
    """Quantum versus classical phase fields as ``hbar`` shrinks.

    Each member of the family is a Gaussian (free case: position width
    ``sigma0`` held fixed; harmonic case: the coherent state, width
    ``sqrt(hbar/m omega)``) with mean momentum ``p0``. It is evolved exactly
    to ``t_final``; the classical solution starts from the same initial
    action ``S0 = p0 x``. Deviations are measured where the quantum packet
    lies within ``bulk_sigmas`` standard deviations of its centre.

    Columns: ``max|dS_q/dx - dS_cl/dx| / hbar`` (phase-gradient deviation),
    the same without the ``1/hbar`` (action-gradient deviation), ``max|V_Q|``
    and the gradient deviation at the packet centre.
    """
    from .hamiltonian import free, harmonic
    from .states import coherent

    hbar_list = np.sort(np.asarray(hbar_list, dtype=float))
    if hbar_list.size < 3:
        raise ValueError("need at least three hbar values")
    dev_phase, dev_action, vq_max, centre = [], [], [], []
    for hb in hbar_list:
        if potential == "free":
            ham = free(m, hb)
            psi = gaussian(grid, x0, sigma0, p0 / hb, m, hb)
        elif potential == "harmonic":
            ham = harmonic(omega, m, hb)
            psi = coherent(grid, x0, p0, omega, m, hb)
        else:
            raise ValueError(f"unknown potential {potential!r}")
        out = psi.with_values(ExactPropagator(grid, ham).apply(psi.values, t_final),
                              time=t_final)
        P = out.density
        xs = grid.x
        mean = np.sum(xs * P) * grid.dx
        sd = np.sqrt(np.sum((xs - mean) ** 2 * P) * grid.dx)
        S0 = lambda y, p0=p0, x0=x0: p0 * (y - x0)
        reach = 2.0 * (bulk_sigmas * sd + abs(mean - x0)) + 1.0
        sol = classical_hj_solve(ham, S0, t_final, grid, x_range=(x0 - reach, x0 + reach),
                                 n_steps=n_steps, dS0=lambda y, p0=p0: p0 + 0 * y)
        p_cl = sol.momentum_on_grid()
        region = (np.abs(xs - mean) <= bulk_sigmas * sd) & np.isfinite(p_cl)
        grad_q = phase_gradient(out)
        diff = np.abs(grad_q[region] - p_cl[region])
        dev_action.append(float(diff.max()))
        dev_phase.append(float(diff.max() / hb))
        # both fields interpolated to the packet mean, not the nearest grid point
        centre_q = CubicSpline(xs[region], grad_q[region])(mean)
        centre_cl = CubicSpline(sol.x[-1], sol.p[-1])(mean)
        centre.append(float(abs(centre_q - centre_cl)))
        vq = quantum_potential(out, ham).amplitude
        vq_max.append(float(np.nanmax(np.abs(vq[region]))))
    study = ScalingStudy(hbar_list, np.array(dev_phase), np.array(dev_action),
                         np.array(vq_max), np.array(centre))
    study.powers = {
        "phase_gradient_deviation": fit_power(hbar_list, study.phase_gradient_deviation),
        "max_abs_quantum_potential": fit_power(hbar_list, study.max_quantum_potential),
    }
    if np.all(study.action_gradient_deviation > 0):
        study.powers["action_gradient_deviation"] = fit_power(
            hbar_list, study.action_gradient_deviation)
    return study


# transport along the drift --------------------------------------------------

@dataclass
class TransportResult:
    samples_initial: np.ndarray
    samples_final: np.ndarray
    wasserstein: float
    flagged: np.ndarray
    mean_shift: float


def sample_density(P, grid: Grid1D, n_samples: int, rng) -> np.ndarray:
    """Stratified inverse-CDF samples of a gridded density (linear CDF interpolation)."""
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (P[1:] + P[:-1]) * grid.dx)])
    cdf /= cdf[-1]
    u = (np.arange(n_samples) + rng.random(n_samples)) / n_samples
    return np.interp(u, cdf, grid.x)


def wasserstein_to_density(samples, P, grid: Grid1D) -> float:
    """W1 distance ``int |F_samples - F_P| dx`` with ``F_P`` piecewise linear."""
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (P[1:] + P[:-1]) * grid.dx)])
    cdf /= cdf[-1]
    s = np.sort(samples)
    lo, hi = min(grid.x[0], s[0]), max(grid.x[-1], s[-1])
    mesh = np.union1d(np.linspace(lo, hi, 16 * grid.n_points), s)
    F_emp = np.searchsorted(s, mesh, side="right") / s.size
    F = np.interp(mesh, grid.x, cdf)
    gap = np.abs(F_emp - F)
    return float(np.sum(0.5 * (gap[1:] + gap[:-1]) * np.diff(mesh)))


def drift_transport(series, ham: HamiltonianSpec, n_samples: int = 100_000,
                    seed: int = 0, floor: float = MASK_FLOOR) -> TransportResult:
    """Carry samples of ``P(., t0)`` along ``x' = <v>(x, t)`` and compare with ``P(., t1)``.

    ``series`` holds an odd number of snapshots; RK4 steps span two snapshot
    intervals and use the middle snapshot for the midpoint stages. The drift
    is interpolated in space with cubic splines. Samples that land where
    ``P < floor * max P`` are flagged.
    """
    series = list(series)
    if len(series) < 3 or len(series) % 2 == 0:
        raise ValueError("need an odd number (>= 3) of snapshots")
    grid = series[0].grid
    rng = np.random.default_rng(seed)

    def drift_spline(psi):
        v = drift_velocity(psi, ham)
        ok = bulk_mask(psi.density, floor) & np.isfinite(v)
        idx = np.flatnonzero(ok)
        # constant extension beyond the resolved region
        v = np.interp(np.arange(v.size), idx, v[idx])
        return CubicSpline(grid.x, v)

    splines = [drift_spline(s) for s in series]
    x = sample_density(series[0].density, grid, n_samples, rng)
    x_start = x.copy()
    for j in range(0, len(series) - 1, 2):
        h = series[j + 2].time - series[j].time
        f0, fm, f1 = splines[j], splines[j + 1], splines[j + 2]
        k1 = f0(x)
        k2 = fm(x + 0.5 * h * k1)
        k3 = fm(x + 0.5 * h * k2)
        k4 = f1(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    P1 = series[-1].density
    dens_at = np.interp(x, grid.x, P1)
    flagged = dens_at < floor * P1.max()
    if flagged.any():
        logger.warning("%d transported samples left the resolved region", int(flagged.sum()))
    return TransportResult(x_start, x, wasserstein_to_density(x, P1, grid), flagged,
                           float(x.mean() - x_start.mean()))
