"""Retarded/advanced split of finite-time transition densities and the action.

A transition slab is the amplitude ``w(x', t + dt; x, t)`` obtained by
evolving the regularized equal-time slice of :func:`moments.transition_slices`
and rescaling it so that ``int |w|^2 dx' = P(x)``. With ``w = r exp(i s)``,

    w_s = r cos s,   w_a = r sin s,   f_a = w_s w_a,
    P_ret = P/2 + f_a,   P_adv = P/2 - f_a,

so that ``P_ret + P_adv = P`` and ``P sin 2s = P_ret - P_adv``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .evolution import ExactPropagator
from .grid import Grid1D
from .hamiltonian import HamiltonianSpec
from .moments import (local_moments, observed_order, polynomial_extrapolate,
                      transition_slices)
from .states import WaveFunction, polar_decompose

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransitionSlab:
    """Rows of ``w(x', t + dt; x_i, t)`` for slice centres ``x_i``."""

    grid: Grid1D
    centres: np.ndarray
    dt: float
    w: np.ndarray
    displacement: np.ndarray
    base_density: np.ndarray

    @property
    def P(self) -> np.ndarray:
        return np.abs(self.w) ** 2

    @property
    def r(self) -> np.ndarray:
        return np.abs(self.w)

    @property
    def s(self) -> np.ndarray:
        return np.angle(self.w)

    def marginal(self) -> np.ndarray:
        """``int P dx'`` per centre; equals ``P(x_i)`` by construction."""
        return np.sum(self.P, axis=-1) * self.grid.dx


def build_slab(psi: WaveFunction, ham: HamiltonianSpec, centres, sigma: float, dt: float,
               propagator: ExactPropagator | None = None, phase=None) -> TransitionSlab:
    """Evolve regularized slices by ``dt`` (either sign) and normalize to ``P(x_i)``."""
    centres = np.atleast_1d(np.asarray(centres, dtype=int))
    prop = propagator or ExactPropagator(psi.grid, ham, psi.time)
    if phase is None:
        phase = polar_decompose(psi).phase
    slices, disp = transition_slices(psi, centres, sigma, phase)
    norm = np.sum(np.abs(slices) ** 2, axis=-1) * psi.grid.dx
    P0 = psi.density[centres]
    evolved = slices if dt == 0 else prop.apply(slices, dt)
    w = evolved * np.sqrt(P0 / norm)[:, None]
    return TransitionSlab(psi.grid, centres, dt, w, disp, P0)


def split_fields(r, s):
    """``(P_ret, P_adv, f_a)`` from amplitude and phase fields."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    P = r**2
    f_a = (r * np.cos(s)) * (r * np.sin(s))
    return 0.5 * P + f_a, 0.5 * P - f_a, f_a


def retarded_advanced_split(slab: TransitionSlab):
    """``(P_ret, P_adv, f_a)`` from the real and imaginary parts of ``w``.

    ``P_ret = P (1 + sin 2s) / 2`` is never negative; cells with ``|s| > pi/4``
    are the ones where ``s`` cannot be recovered from the split by the
    principal branch of ``arcsin`` (see :func:`flagged_cells`).
    """
    w_s = slab.w.real
    w_a = slab.w.imag
    P = w_s**2 + w_a**2
    f_a = w_s * w_a
    return 0.5 * P + f_a, 0.5 * P - f_a, f_a


def flagged_cells(slab: TransitionSlab, floor: float = 1e-12) -> np.ndarray:
    """Mask of cells with ``|s| > pi/4`` and non-negligible density."""
    P = slab.P
    return (np.abs(slab.s) > np.pi / 4) & (P > floor * P.max())


def action_identity_residual(slab: TransitionSlab) -> float:
    """``max |P sin 2s - (P_ret - P_adv)|``.

    The left side uses modulus and argument of ``w``; the right side uses the
    real/imaginary split, so the two are computed independently.
    """
    lhs = np.abs(slab.w) ** 2 * np.sin(2.0 * np.angle(slab.w))
    P_ret, P_adv, _ = retarded_advanced_split(slab)
    return float(np.max(np.abs(lhs - (P_ret - P_adv))))


# Lagrangian limit -----------------------------------------------------------

def lagrangian_target(psi: WaveFunction, ham: HamiltonianSpec) -> np.ndarray:
    """``(l0 + l1 <v> + l2 <v^2> / 2) P`` from the operator moments."""
    mf = local_moments(psi, ham, 2)
    x, t = psi.grid.x, psi.time
    return (ham.l0(x, t) * mf.densities[0] + ham.l1(x, t) * mf.densities[1]
            + 0.5 * ham.l2 * mf.densities[2])


def first_order_phase_lagrangian(psi: WaveFunction, ham: HamiltonianSpec) -> np.ndarray:
    """``(<v> ds/dx + ds/dt) P`` with the phase derivatives written as moments.

    Using ``ds/dx = l1 + l2 <v>`` and ``-ds/dt = -l0 + l2 <v^2>/2`` this is
    ``(l0 + l1 <v> + l2 <v>^2 - l2 <v^2>/2) P``. It differs from
    :func:`lagrangian_target` by ``l2 (<v^2> - <v>^2) P = 2 V_Q P / hbar``.
    """
    mf = local_moments(psi, ham, 2)
    x, t = psi.grid.x, psi.time
    P, mu1, mu2 = mf.densities
    drift_sq = np.zeros_like(P)
    ok = P > 0
    drift_sq[ok] = mu1[ok] ** 2 / P[ok]
    return (ham.l0(x, t) * P + ham.l1(x, t) * mu1 + ham.l2 * drift_sq - 0.5 * ham.l2 * mu2)


@dataclass
class LagrangianResult:
    x: np.ndarray
    centres: np.ndarray
    values: np.ndarray
    sigma_reg: tuple
    per_sigma: np.ndarray
    order_dt: list = field(default_factory=list)
    order_sigma: float = float("nan")
    fa_slope: float = float("nan")
    flagged: int = 0
    table: list = field(default_factory=list)


def _phase_integral(w, dx, route):
    if route == "arcsin":
        w_s, w_a = w.real, w.imag
        P = w_s**2 + w_a**2
        ratio = np.divide(2.0 * w_s * w_a, P, out=np.zeros_like(P), where=P > 0)
        s = 0.5 * np.arcsin(np.clip(ratio, -1.0, 1.0))
        return np.sum(P * s, axis=-1) * dx
    if route == "sin":
        return np.sum(w.real * w.imag, axis=-1) * dx
    raise ValueError(f"unknown route {route!r}")


def lagrangian_limit(ham: HamiltonianSpec, psi: WaveFunction, dt_list=None,
                     sigma_reg=(0.15, 0.1, 0.075), dt_fractions=(0.2, 0.1, 0.05),
                     bulk_threshold: float = 1e-6, stride: int = 1, route: str = "arcsin",
                     noise_floor: float = 1e-9) -> LagrangianResult:
    """``<l> P`` from the growth rate of the slab's phase-weighted density.

    For each width the quantity ``L(dt) = int P(x') s(x') dx'`` is formed from
    the retarded/advanced split, with ``s = arcsin((P_ret - P_adv)/P)/2``
    (``route="arcsin"``) or ``L = int (P_ret - P_adv)/2`` (``route="sin"``).
    Its ``dt``-derivative at 0 comes from the ``+-dt`` central difference and a
    polynomial in ``dt^2``; the slice self-kinetic term
    ``(hbar/2m) int K'^2 P`` (scaled to the slab normalization) is added back
    before extrapolating ``sigma -> 0``.

    Raises
    ------
    ConvergenceError
        If either extrapolation sequence is non-monotone.
    """
    sigmas = tuple(sorted(sigma_reg, reverse=True))
    if len(sigmas) < 3:
        raise ValueError("need at least three regularization widths")
    grid = psi.grid
    P = psi.density
    centres = np.flatnonzero(P > bulk_threshold)[::stride]
    prop = ExactPropagator(grid, ham, psi.time)
    phase = polar_decompose(psi).phase
    per_sigma, order_dt, table = [], [], []
    flagged = 0
    fa_rows = []
    for sigma in sigmas:
        slices, disp = transition_slices(psi, centres, sigma, phase)
        norm = np.sum(np.abs(slices) ** 2, axis=-1) * grid.dx
        scale2 = P[centres] / norm
        counter = (0.5 * ham.hbar / ham.m * scale2
                   * np.sum(disp**2 / (4.0 * sigma**4) * np.abs(slices) ** 2, axis=-1) * grid.dx)
        tau = ham.m * sigma**2 / ham.hbar
        dts = list(dt_list) if dt_list is not None else [f * tau for f in dt_fractions]
        ests = []
        for dt in dts:
            fwd, back = prop.apply_many(slices, (dt, -dt))
            w_f = fwd * np.sqrt(scale2)[:, None]
            w_b = back * np.sqrt(scale2)[:, None]
            ests.append((_phase_integral(w_f, grid.dx, route)
                         - _phase_integral(w_b, grid.dx, route)) / (2.0 * dt) + counter)
            fa_rows.append((sigma, dt, float(np.max(np.abs(np.sum(w_f.real * w_f.imag, axis=-1)
                                                    - np.sum(w_b.real * w_b.imag, axis=-1))
                                             * grid.dx / 2.0))))
            flagged += int(np.sum((np.abs(np.angle(w_f)) > np.pi / 4)
                                  & (np.abs(w_f) ** 2 > 1e-12 * np.max(np.abs(w_f) ** 2))))
        limit = polynomial_extrapolate(np.square(dts[-3:]), ests[-3:])
        scale = max(float(np.max(np.abs(limit))), 1.0)
        order, monotone = observed_order(dts, ests, noise_floor * scale)
        for dt, e in zip(dts, ests):
            table.append({"sigma_reg": sigma, "dt": dt,
                          "max_abs_change": float(np.max(np.abs(e - limit)))})
        if not monotone:
            raise ConvergenceError(f"dt sequence not converging at sigma_reg={sigma}", table)
        order_dt.append(order)
        per_sigma.append(limit)
    per_sigma = np.array(per_sigma)
    values = polynomial_extrapolate(np.square(sigmas[-3:]), per_sigma[-3:])
    scale = max(float(np.max(np.abs(values))), 1.0)
    order_sigma, monotone = observed_order(sigmas, list(per_sigma), noise_floor * scale,
                                           limit=values)
    for sigma, est in zip(sigmas, per_sigma):
        table.append({"sigma_reg": sigma, "dt": 0.0,
                      "max_abs_change": float(np.max(np.abs(est - values)))})
    if not monotone:
        raise ConvergenceError("sigma_reg sequence not converging", table)
    # growth of int f_a with dt at fixed width; the Lagrangian enters at first order
    fa = np.array(fa_rows)
    fa_slope = float(np.mean([
        np.polyfit(np.log(fa[fa[:, 0] == sg, 1]), np.log(fa[fa[:, 0] == sg, 2]), 1)[0]
        for sg in sigmas
    ]))
    return LagrangianResult(grid.x[centres], centres, values, sigmas, per_sigma, order_dt,
                            order_sigma, fa_slope, flagged, table)
