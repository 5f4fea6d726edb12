"""Local and full stochastic velocity moments.

For a pure state the local moment densities are

    mu_n(x) = m**-n * Re[psi*(x) D**n psi(x)],    D = -i hbar d/dx - eA(x),

so that ``mu_0 = P``, ``mu_1 / P`` is the drift velocity and ``mu_2 / P`` can
be negative where the amplitude is convex. Mixtures are handled through their
spectral decomposition. Three independent routes to the full expectations
``<<v^n>>`` are provided (local sum, trace in momentum space, generating
function) together with a finite-time Kramers-Moyal extraction from evolved
transition slices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from numpy.polynomial import chebyshev

from .errors import AliasError, ConvergenceError, OrderError
from .evolution import ExactPropagator
from .grid import Grid1D, apply_fourier_multiplier, finite_difference_time, spectral_shift
from .hamiltonian import HamiltonianSpec
from .states import DensityMatrix, WaveFunction, polar_decompose, spectral_decompose

logger = logging.getLogger(__name__)

N_MAX_CAP = 8
EIGEN_CUTOFF = 1e-14


@dataclass(frozen=True)
class MomentField:
    """Local moment densities ``mu_n(x)`` for ``n = 0..n_max`` and their integrals."""

    grid: Grid1D
    densities: np.ndarray
    time_stamp: float = 0.0
    ordering: str = "standard"

    @property
    def n_max(self) -> int:
        return self.densities.shape[0] - 1

    @property
    def full(self) -> np.ndarray:
        """``<<v^n>> = integral of mu_n``."""
        return self.densities.sum(axis=-1) * self.grid.dx

    def conditional(self, n: int, floor: float = 1e-8) -> np.ndarray:
        """``<v^n>(x) = mu_n / P``, NaN where ``P <= floor * max P``."""
        P = self.densities[0]
        out = np.full_like(P, np.nan)
        mask = P > floor * P.max()
        out[mask] = self.densities[n][mask] / P[mask]
        return out


def state_components(state):
    """``[(weight, values)]`` for a WaveFunction or the eigen-expansion of a DensityMatrix."""
    if isinstance(state, WaveFunction):
        return [(1.0, np.asarray(state.values))]
    if isinstance(state, DensityMatrix):
        pairs = spectral_decompose(state)
        top = max(abs(pairs[0][0]), 1e-300)
        return [(c, psi.values) for c, psi in pairs if c > EIGEN_CUTOFF * top]
    raise TypeError(f"expected WaveFunction or DensityMatrix, got {type(state).__name__}")


def covariant_derivative(values, grid: Grid1D, ham: HamiltonianSpec, t: float = 0.0):
    """``(-i hbar d/dx - eA) f`` along the last axis, derivative spectral."""
    out = -1j * ham.hbar * apply_fourier_multiplier(values, 1j * grid.k)
    if ham.has_vector_potential:
        out = out - ham.eA(grid.x, t) * values
    return out


def _check_order(n_max):
    if n_max < 0 or n_max > N_MAX_CAP:
        raise OrderError(f"n_max must lie in [0, {N_MAX_CAP}], got {n_max}")


def local_moments(state, ham: HamiltonianSpec, n_max: int = 2,
                  ordering: str = "standard") -> MomentField:
    """Local moment densities of a pure or mixed state.

    Parameters
    ----------
    state : WaveFunction or DensityMatrix
    ham : HamiltonianSpec
        Supplies ``m``, ``hbar`` and ``eA``.
    n_max : int
        Highest order, at most 8 (spectral round-off grows like ``k_max**n``).
    ordering : {"standard", "weyl"}
        ``"standard"`` is ``Re[psi* D^n psi]``. ``"weyl"`` symmetrizes the
        position dependence, ``2**-n sum_k C(n,k) Re[(D^k psi)* D^(n-k) psi]``,
        which equals the velocity moment of the Wigner function.
    """
    _check_order(n_max)
    if ordering not in ("standard", "weyl"):
        raise ValueError(f"unknown ordering {ordering!r}")
    grid, t = state.grid, state.time
    dens = np.zeros((n_max + 1, grid.n_points))
    for w, values in state_components(state):
        powers = [np.asarray(values, dtype=complex)]
        for _ in range(n_max):
            powers.append(covariant_derivative(powers[-1], grid, ham, t))
        for n in range(n_max + 1):
            if ordering == "standard":
                term = np.real(powers[0].conj() * powers[n])
            else:
                term = sum(comb(n, k) * np.real(powers[k].conj() * powers[n - k])
                           for k in range(n + 1)) / 2.0**n
            dens[n] += w * term / ham.m**n
    return MomentField(grid, dens, t, ordering)


def full_moments_trace(state, ham: HamiltonianSpec, n_max: int = 2) -> np.ndarray:
    """``<<v^n>> = m**-n tr(D^n rho)`` evaluated independently of ``local_moments``.

    With a spatially uniform vector potential the trace is taken in the
    plane-wave basis, ``sum_k ((hbar k - eA)/m)**n rho_kk``; otherwise ``D`` is
    applied to the kernel in position space.
    """
    _check_order(n_max)
    grid, t = state.grid, state.time
    kernel = (np.outer(state.values, state.values.conj())
              if isinstance(state, WaveFunction) else np.asarray(state.kernel))
    out = np.zeros(n_max + 1)
    if not ham.has_vector_potential or ham.uniform_A:
        eA = float(ham.eA(np.zeros(1), t)[0]) if ham.has_vector_potential else 0.0
        # rho_kk = sum_{j,l} e^{-ik x_j} rho_jl e^{ik x_l}; Parseval gives weights dx/N
        half = np.fft.fft(kernel, axis=0)
        diag = np.conj(np.fft.fft(np.conj(half), axis=1)).diagonal().real
        weights = diag * grid.dx / grid.n_points
        v = (ham.hbar * grid.k - eA) / ham.m
        for n in range(n_max + 1):
            out[n] = float(np.sum(v**n * weights))
        return out
    cur = kernel.astype(complex)
    for n in range(n_max + 1):
        out[n] = float(np.real(np.trace(cur)) * grid.dx / ham.m**n)
        cur = covariant_derivative(cur.T, grid, ham, t).T
    return out


# generating function --------------------------------------------------------

@dataclass(frozen=True)
class GeneratingFunction:
    """Samples of ``G(alpha) = tr(rho exp(i alpha v))`` at Chebyshev nodes.

    ``(-i d/dalpha)**n G`` at ``alpha = 0`` is ``<<v^n>>``.
    """

    alphas: np.ndarray
    values: np.ndarray
    alpha_max: float

    def chebyshev_coefficients(self) -> np.ndarray:
        u = self.alphas / self.alpha_max
        return chebyshev.chebfit(u, self.values, deg=len(u) - 1)

    def at(self, alpha) -> np.ndarray:
        return chebyshev.chebval(np.asarray(alpha) / self.alpha_max, self.chebyshev_coefficients())

    def moments(self, n_max: int = 4) -> np.ndarray:
        coeffs = self.chebyshev_coefficients()
        out = np.zeros(n_max + 1)
        for n in range(n_max + 1):
            d = chebyshev.chebval(0.0, chebyshev.chebder(coeffs, n)) / self.alpha_max**n
            out[n] = float(np.real((-1j) ** n * d))
        return out


def _periodic_antiderivative(values, grid):
    k = grid.k
    mult = np.zeros_like(k, dtype=complex)
    mult[k != 0] = 1.0 / (1j * k[k != 0])
    return apply_fourier_multiplier(values - values.mean(), mult).real


def _band_limited(components, grid, fraction=0.8, tol=1e-14) -> bool:
    """Weighted spectral power above ``fraction * k_max`` is negligible.

    ``tol`` bounds the power fraction, i.e. an amplitude fraction of 1e-7,
    which sits above the round-off left by diagonalizing a mixed kernel.

    Weighting by the eigenvalues keeps round-off eigenvectors of a mixture,
    which carry white spectra but no weight, from tripping the guard.
    """
    high = np.abs(grid.k) > fraction * grid.k_max
    total = upper = 0.0
    for w, values in components:
        spec = w * np.abs(np.fft.fft(values)) ** 2
        total += spec.sum()
        upper += spec[high].sum()
    return upper <= tol * total


def generating_function(state, ham: HamiltonianSpec, alpha_max: float = 2.0,
                        n_samples: int = 33) -> GeneratingFunction:
    """Off-diagonal integral ``G(alpha) = int rho(y + a, y - a) W(y) dy``, ``a = hbar alpha / 2m``.

    ``W`` is the Wilson-line factor ``exp(-i/hbar int_{y-a}^{y+a} eA)`` that
    makes ``G`` the expectation of ``exp(i alpha (p - eA)/m)``; it is 1 when
    ``A = 0``. Off-grid arguments are reached by band-limited Fourier shifts.

    Raises
    ------
    AliasError
        If the largest shift exceeds a quarter period or a component carries
        spectral weight near the Nyquist wave number.
    """
    grid, t = state.grid, state.time
    a_max = ham.hbar * alpha_max / (2.0 * ham.m)
    if a_max > grid.length / 4:
        raise AliasError(f"shift {a_max:.3g} exceeds a quarter of the period {grid.length:.3g}")
    j = np.arange(n_samples)
    alphas = alpha_max * np.cos(np.pi * (j + 0.5) / n_samples)
    shifts = ham.hbar * alphas / (2.0 * ham.m)
    if ham.has_vector_potential:
        eA = ham.eA(grid.x, t)
        mean = eA.mean()
        chi = _periodic_antiderivative(eA, grid) / ham.hbar
        dchi = (spectral_shift(chi, shifts, grid) - spectral_shift(chi, -shifts, grid)
                + 2.0 * shifts[:, None] * mean / ham.hbar)
        wilson = np.exp(-1j * dchi)
    else:
        wilson = 1.0
    G = np.zeros(n_samples, dtype=complex)
    components = state_components(state)
    if not _band_limited(components, grid):
        raise AliasError("state is not band-limited on this grid; shifts would alias")
    for w, values in components:
        plus = spectral_shift(values, shifts, grid)
        minus = spectral_shift(values, -shifts, grid)
        G += w * np.sum(plus * minus.conj() * wilson, axis=-1) * grid.dx
    return GeneratingFunction(alphas, G, alpha_max)


# continuity -----------------------------------------------------------------

@dataclass(frozen=True)
class ContinuityResidual:
    """``d^n P/dt^n - (-1)^n d^n mu_n/dx^n`` at the central time slice."""

    n: int
    ordering: str
    residual: np.ndarray
    l1: float
    linf: float
    dt: float


def continuity_residuals(series, ham: HamiltonianSpec, n: int = 1,
                         ordering: str | None = None) -> ContinuityResidual:
    """Residual of the n-th order continuity relation from equally spaced snapshots.

    Parameters
    ----------
    series : sequence of WaveFunction or DensityMatrix
        Snapshots at ``t0 + j*dt``; an odd count gives a centred time stencil.
    n : {1, 2}
    ordering : {"standard", "weyl"}, optional
        Moment ordering for ``mu_n``. Defaults to standard for ``n = 1`` (where
        the two coincide) and Weyl for ``n = 2``; with standard ordering the
        free-particle residual at ``n = 2`` is ``hbar^2 P''''/4m^2`` rather than 0.
    """
    if n not in (1, 2):
        raise OrderError("continuity residuals are defined for n = 1 and n = 2")
    series = list(series)
    ordering = ordering or ("standard" if n == 1 else "weyl")
    times = np.array([s.time for s in series])
    steps = np.diff(times)
    if len(series) < n + 1 or np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps.mean():
        raise ValueError("need at least n+1 snapshots at equally spaced increasing times")
    dt = float(steps.mean())
    centre = series[len(series) // 2] if len(series) % 2 else series[0]
    grid = centre.grid
    dens = [s.density for s in series]
    dnP = finite_difference_time(dens, dt, n)
    mu = local_moments(centre, ham, n, ordering).densities[n]
    rhs = (-1) ** n * np.real(apply_fourier_multiplier(mu, (1j * grid.k) ** n))
    res = dnP - rhs
    return ContinuityResidual(n, ordering, res, float(np.sum(np.abs(res)) * grid.dx),
                              float(np.abs(res).max()), dt)


# Kramers-Moyal extraction ---------------------------------------------------

def minimal_image(d, length):
    return (np.asarray(d) + 0.5 * length) % length - 0.5 * length


def transition_slices(psi: WaveFunction, centres: np.ndarray, sigma: float,
                      phase=None) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-regularized equal-time transition amplitudes.

    Row ``i`` is ``psi(y) K(y - x_i) exp(-i S(x_i)/hbar)`` where ``K**2`` is a
    normalized Gaussian of standard deviation ``sigma``; ``S`` is the unwrapped
    phase unless ``phase`` is given.

    Returns
    -------
    slices : (n_centres, N) complex array
    displacement : (n_centres, N) minimal-image ``y - x_i``
    """
    grid = psi.grid
    x = grid.x
    d = minimal_image(x[None, :] - x[centres][:, None], grid.length)
    K = (2.0 * np.pi * sigma**2) ** -0.25 * np.exp(-(d**2) / (4.0 * sigma**2))
    if phase is None:
        phase = polar_decompose(psi).phase
    carrier = np.exp(-1j * phase[centres] / psi.hbar)
    return psi.values[None, :] * K * carrier[:, None], d


def polynomial_extrapolate(h, values, degree: int = 2):
    """Value at ``h = 0`` of the polynomial through ``(h_j, values_j)``.

    ``values`` may carry trailing axes.
    """
    h = np.asarray(h, dtype=float)
    vals = np.asarray(values)
    deg = min(degree, len(h) - 1)
    V = np.vander(h, deg + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, vals.reshape(len(h), -1), rcond=None)
    return coef[0].reshape(vals.shape[1:])


def observed_order(params, estimates, noise_floor: float, limit=None):
    """Convergence order of a sequence of estimates.

    Uses errors against ``limit`` when given (suitable for non-geometric
    parameter sequences), otherwise successive differences with the ratio of
    the first two parameters. Returns ``(order, monotone)``; the order is NaN
    when the changes sit below ``noise_floor``, which counts as converged.
    """
    est = [np.asarray(e) for e in estimates]
    if limit is not None:
        errs = [float(np.max(np.abs(e - limit))) for e in est]
        p_used = list(params)
    else:
        errs = [float(np.max(np.abs(est[i] - est[i + 1]))) for i in range(len(est) - 1)]
        p_used = list(params[:-1])
    if max(errs) <= noise_floor:
        return float("nan"), True
    monotone = all(e2 <= e1 or e2 <= noise_floor for e1, e2 in zip(errs, errs[1:]))
    if len(errs) < 2 or errs[-1] <= noise_floor:
        return float("nan"), monotone
    if limit is None:
        ratio = params[0] / params[1]
    else:
        ratio = p_used[-2] / p_used[-1]
    return float(np.log(errs[-2] / errs[-1]) / np.log(ratio)), monotone


@dataclass
class KramersMoyalResult:
    """Double-extrapolated moment field and the intermediate tables."""

    n: int
    n_time: int
    x: np.ndarray
    centres: np.ndarray
    values: np.ndarray
    sigma_reg: tuple
    per_sigma: np.ndarray
    dt_table: dict = field(default_factory=dict)
    order_dt: list = field(default_factory=list)
    order_sigma: float = float("nan")
    table: list = field(default_factory=list)


def _slice_moment_derivative(prop, slices, disp, dx, n_disp, n_time, dt, m, hbar, sigma,
                             counterterm):
    """``(1/n_time!) d^n_time/ddt^n_time int disp^n_disp |U(dt) slice|^2`` at 0."""
    fwd, back = prop.apply_many(slices, (dt, -dt))
    weight = disp**n_disp
    M = [np.sum(weight * np.abs(v) ** 2, axis=-1) * dx for v in (back, slices, fwd)]
    value = finite_difference_time(M, dt, n_time) / factorial(n_time)
    if counterterm and n_disp == 2 and n_time == 2:
        # slice self-kinetic energy: int K'^2 P with K'^2 = d^2/(4 sigma^4) K^2
        C = np.sum(disp**2 / (4.0 * sigma**4) * np.abs(slices) ** 2, axis=-1) * dx
        value = value - (hbar / m) ** 2 * C
    return value


def kramers_moyal_extract(ham: HamiltonianSpec, psi: WaveFunction, dt_list=None, n: int = 1,
                          sigma_reg=(0.15, 0.1, 0.075), dt_fractions=(0.2, 0.1, 0.05),
                          bulk_threshold: float = 1e-6, stride: int = 1,
                          n_time: int | None = None, counterterm: bool = True,
                          noise_floor: float = 1e-9) -> KramersMoyalResult:
    """Reconstruct ``<v^n>(x)`` from short-time displacement moments.

    For each regularization width ``sigma`` the slices of
    :func:`transition_slices` are evolved by ``+-dt`` with the exact grid
    propagator, the ``n``-th displacement moment is differentiated in ``dt``
    by a central stencil and divided by ``n!``, and the slice norm
    ``int K^2 P`` is divided out. The ``dt -> 0`` limit is taken first
    (polynomial in ``dt^2`` through the three smallest steps), then
    ``sigma -> 0`` (polynomial in ``sigma^2`` through three widths). For
    ``n = 2`` the slice self-kinetic energy ``(hbar/m)^2 int K'^2 P``, which
    diverges like ``sigma^-2``, is subtracted before the width limit.

    Parameters
    ----------
    dt_list : sequence of float, optional
        Descending steps used for every width. Default: ``dt_fractions``
        times the slice spreading time ``m sigma^2 / hbar``.
    n : {1, 2}
        Displacement power.
    n_time : int, optional
        Order of the time derivative; defaults to ``n``. Setting it different
        from ``n`` gives the cross moments, which vanish in the limit for a
        free particle.
    stride : int
        Use every ``stride``-th bulk grid point as a slice centre.

    Raises
    ------
    OrderError
        For ``n`` outside {1, 2}.
    ConvergenceError
        If either sequence of estimates fails to converge monotonically.
    """
    if n not in (1, 2):
        raise OrderError("Kramers-Moyal extraction supports n = 1 and n = 2")
    n_time = n if n_time is None else n_time
    if n_time not in (1, 2):
        raise OrderError("time-derivative order must be 1 or 2")
    sigmas = tuple(sorted(sigma_reg, reverse=True))
    if len(sigmas) < 3:
        raise ValueError("need at least three regularization widths")
    if dt_list is not None:
        dt_list = list(dt_list)
        if len(dt_list) < 3 or any(b >= a for a, b in zip(dt_list, dt_list[1:])):
            raise ValueError("dt_list must be strictly descending with at least 3 values")
    grid = psi.grid
    P = psi.density
    centres = np.flatnonzero(P > bulk_threshold)[::stride]
    prop = ExactPropagator(grid, ham, psi.time)
    phase = polar_decompose(psi).phase

    per_sigma, table, order_dt, dt_table = [], [], [], {}
    for sigma in sigmas:
        slices, disp = transition_slices(psi, centres, sigma, phase)
        norm = np.sum(np.abs(slices) ** 2, axis=-1) * grid.dx
        tau = ham.m * sigma**2 / ham.hbar
        dts = dt_list if dt_list is not None else [f * tau for f in dt_fractions]
        ests = [
            _slice_moment_derivative(prop, slices, disp, grid.dx, n, n_time, dt, ham.m,
                                     ham.hbar, sigma, counterterm) / norm
            for dt in dts
        ]
        tail = dts[-3:]
        limit = polynomial_extrapolate(np.square(tail), ests[-3:])
        scale = max(float(np.max(np.abs(limit))), 1.0)
        order, monotone = observed_order(dts, ests, noise_floor * scale)
        for dt, e in zip(dts, ests):
            table.append({"sigma_reg": sigma, "dt": dt,
                          "max_abs_change": float(np.max(np.abs(e - limit)))})
        if not monotone:
            raise ConvergenceError(f"dt sequence not converging at sigma_reg={sigma}", table)
        order_dt.append(order)
        dt_table[sigma] = np.array(ests)
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
    logger.debug("KM n=%d: dt orders %s, sigma order %.3g", n, order_dt, order_sigma)
    return KramersMoyalResult(n, n_time, grid.x[centres], centres, values, sigmas, per_sigma,
                              dt_table, order_dt, order_sigma, table)


def relative_bulk_error(estimate, target, scale: float = 0.0) -> float:
    """``max|estimate - target| / max(max|target|, scale)``.

    ``scale`` keeps the ratio meaningful when the target vanishes identically,
    e.g. the drift of a stationary state.
    """
    target = np.asarray(target)
    denom = max(float(np.max(np.abs(target))), scale, 1e-300)
    return float(np.max(np.abs(np.asarray(estimate) - target)) / denom)
