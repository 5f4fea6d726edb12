"""Wave functions, density matrices and their polar and spectral decompositions."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import oracles
from .errors import DegenerateState, HermiticityError, NormalizationError, WeightError
from .grid import Field, Grid1D, integrate
from .hamiltonian import HamiltonianSpec

NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
PSD_TOL = -1e-9


@dataclass(frozen=True)
class WaveFunction:
    """Complex field psi(x) on a grid at ``time`` with its unit bookkeeping."""

    grid: Grid1D
    values: np.ndarray
    time: float = 0.0
    m: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.n_points,):
            raise ValueError(f"values shape {values.shape} does not match grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("wave function contains non-finite values")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def field(self) -> Field:
        return Field(self.grid, self.values, self.time)

    @property
    def density(self) -> np.ndarray:
        """Born-rule diagonal P(x) = |psi(x)|**2."""
        return np.abs(self.values) ** 2

    def norm(self) -> float:
        return float(integrate(self.density, self.grid))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def normalized(self) -> "WaveFunction":
        return self.with_values(self.values / np.sqrt(self.norm()))

    def with_values(self, values, time: float | None = None) -> "WaveFunction":
        return replace(self, values=values, time=self.time if time is None else time)


@dataclass(frozen=True)
class DensityMatrix:
    """Dense equal-time kernel rho(x'; x).

    Values are continuum kernel values; the grid measure ``dx`` enters only
    in traces and contractions, so ``rho.operator`` is ``kernel * dx``.
    """

    grid: Grid1D
    kernel: np.ndarray
    time: float = 0.0
    m: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=complex)
        n = self.grid.n_points
        if kernel.shape != (n, n):
            raise ValueError(f"kernel shape {kernel.shape} != ({n}, {n})")
        kernel = kernel.copy()
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)

    @property
    def operator(self) -> np.ndarray:
        return self.kernel * self.grid.dx

    @property
    def density(self) -> np.ndarray:
        return self.kernel.diagonal().real.copy()

    def trace(self) -> float:
        return float(self.kernel.diagonal().real.sum() * self.grid.dx)

    def hermiticity_error(self) -> float:
        scale = max(np.abs(self.kernel).max(), 1e-300)
        return float(np.abs(self.kernel - self.kernel.conj().T).max() / scale)

    def eigenvalues(self) -> np.ndarray:
        op = self.operator
        return np.linalg.eigvalsh(0.5 * (op + op.conj().T))[::-1]

    def axioms(self) -> dict:
        """Measured Hermiticity error, trace and smallest eigenvalue."""
        eig = self.eigenvalues()
        return {
            "hermiticity": self.hermiticity_error(),
            "trace": self.trace(),
            "min_eigenvalue": float(eig[-1]),
        }

    def check_axioms(self, hermitian_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL,
                     psd_tol=PSD_TOL) -> dict:
        ax = self.axioms()
        ax["ok"] = (
            ax["hermiticity"] < hermitian_tol
            and abs(ax["trace"] - 1.0) <= trace_tol
            and ax["min_eigenvalue"] >= psd_tol
        )
        return ax

    def with_kernel(self, kernel, time: float | None = None) -> "DensityMatrix":
        return replace(self, kernel=kernel, time=self.time if time is None else time)


@dataclass(frozen=True)
class PolarField:
    """Amplitude ``r`` and unwrapped phase ``S`` (action units) of a wave function."""

    grid: Grid1D
    amplitude: np.ndarray
    phase: np.ndarray
    branch_offsets: np.ndarray
    hbar: float = 1.0
    amplitude_floor: float = 0.0

    def reconstruct(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase / self.hbar)

    @property
    def resolved(self) -> np.ndarray:
        """Mask of cells where the phase is defined (amplitude above the floor)."""
        return self.amplitude > self.amplitude_floor


# constructors ---------------------------------------------------------------

def density_from_pure(psi: WaveFunction) -> DensityMatrix:
    """rho(x'; x) = psi(x') psi*(x)."""
    if not psi.is_normalized():
        raise NormalizationError(f"state norm {psi.norm():.12g} is not 1")
    v = psi.values
    return DensityMatrix(psi.grid, np.outer(v, v.conj()), psi.time, psi.m, psi.hbar)


def density_from_mixture(states) -> DensityMatrix:
    """Convex combination ``sum_i p_i psi_i psi_i*`` of normalized states.

    Parameters
    ----------
    states : sequence of (weight, WaveFunction)
    """
    states = list(states)
    if not states:
        raise WeightError("empty mixture")
    weights = np.array([p for p, _ in states], dtype=float)
    if np.any(weights <= 0):
        raise WeightError("mixture weights must be positive")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise WeightError(f"weights sum to {weights.sum():.15g}, not 1")
    first = states[0][1]
    kernel = np.zeros((first.grid.n_points,) * 2, dtype=complex)
    for p, psi in states:
        if psi.grid != first.grid:
            raise ValueError("mixture components live on different grids")
        if not psi.is_normalized():
            raise NormalizationError("mixture components must be normalized")
        kernel += p * np.outer(psi.values, psi.values.conj())
    return DensityMatrix(first.grid, kernel, first.time, first.m, first.hbar)


def polar_decompose(psi: WaveFunction, amplitude_floor: float | None = None) -> PolarField:
    """Split psi into ``r`` and an unwrapped phase ``S`` with ``psi = r exp(iS/hbar)``.

    The phase is unwrapped by the shortest-jump rule, scanning outward from the
    global amplitude maximum; across cells with ``r <= amplitude_floor`` it is
    held at its last value. The default floor is ``1e-8 * max(r)``.
    """
    r = np.abs(psi.values)
    rmax = r.max()
    if rmax == 0:
        raise DegenerateState("all-zero wave function has no phase")
    floor = 1e-8 * rmax if amplitude_floor is None else amplitude_floor
    raw = np.angle(psi.values)
    n = r.size
    start = int(np.argmax(r))
    theta = np.empty(n)
    theta[start] = raw[start]
    for direction in (1, -1):
        current = raw[start]
        for step in range(1, n // 2 + (1 if direction == 1 else 0)):
            i = (start + direction * step) % n
            if r[i] > floor:
                current += np.angle(np.exp(1j * (raw[i] - current)))
            theta[i] = current
    offsets = np.rint((theta - raw) / (2 * np.pi)).astype(int)
    return PolarField(psi.grid, r, psi.hbar * theta, offsets, psi.hbar, floor)


def spectral_decompose(rho: DensityMatrix, hermitian_tol: float = HERMITIAN_TOL):
    """Eigenpairs ``(c_n, psi_n)`` of rho, eigenvalues descending.

    Eigenfunctions are orthonormal under grid quadrature.
    """
    err = rho.hermiticity_error()
    if err > hermitian_tol:
        raise HermiticityError(f"kernel is not Hermitian (relative error {err:.3g})")
    op = rho.operator
    vals, vecs = np.linalg.eigh(0.5 * (op + op.conj().T))
    order = np.argsort(vals)[::-1]
    scale = 1.0 / np.sqrt(rho.grid.dx)
    return [
        (float(vals[i]),
         WaveFunction(rho.grid, vecs[:, i] * scale, rho.time, rho.m, rho.hbar))
        for i in order
    ]


def reconstruct_density(pairs, grid: Grid1D) -> np.ndarray:
    kernel = np.zeros((grid.n_points,) * 2, dtype=complex)
    for c, psi in pairs:
        kernel += c * np.outer(psi.values, psi.values.conj())
    return kernel


def gauge_transform(psi: WaveFunction, ham: HamiltonianSpec, chi,
                    dchi_dx=None, dchi_dt=None, time_independent: bool = False):
    """Local phase change psi -> exp(i chi) psi with compensating potentials.

    Covariance of the minimally coupled equation requires
    ``eA -> eA + hbar d_x chi`` and ``e phi -> e phi - hbar d_t chi``.

    Parameters
    ----------
    chi : callable ``chi(x, t)``, dimensionless
    dchi_dx, dchi_dt : callables, optional
        Analytic derivatives. Fourth-order central differences of ``chi`` are
        used when omitted.
    time_independent : bool
        Declares that ``chi`` does not depend on ``t``; the scalar potential is
        then left unchanged and a static Hamiltonian stays static.

    Returns
    -------
    (WaveFunction, HamiltonianSpec)
    """
    if ham.e == 0:
        raise ValueError("gauge transformations need a charged particle (e != 0)")
    h = 1e-3

    def _fd(f, wrt):
        def d(x, t):
            if wrt == "x":
                g = lambda s: np.asarray(f(x + s, t), dtype=float)
            else:
                g = lambda s: np.asarray(f(x, t + s), dtype=float)
            return (-g(2 * h) + 8 * g(h) - 8 * g(-h) + g(-2 * h)) / (12 * h)
        return d

    chi_x = dchi_dx or _fd(chi, "x")
    chi_t = (lambda x, t: 0.0) if time_independent else (dchi_dt or _fd(chi, "t"))
    x = psi.grid.x
    new_psi = psi.with_values(np.exp(1j * np.asarray(chi(x, psi.time), dtype=float))
                              * psi.values)
    A_old, phi_old = ham.A, ham.phi
    scale = ham.hbar / ham.e

    def A_new(x, t):
        base = 0.0 if A_old is None else (A_old(x, t) if callable(A_old) else A_old)
        return base + scale * chi_x(x, t)

    def phi_new(x, t):
        base = 0.0 if phi_old is None else (phi_old(x, t) if callable(phi_old) else phi_old)
        return base - scale * chi_t(x, t)

    probe = np.linspace(psi.grid.x_min, psi.grid.x_max, 7)
    grad = np.asarray(chi_x(probe, psi.time), dtype=float) * np.ones_like(probe)
    uniform = ham.uniform_A and bool(np.ptp(grad) < 1e-12)
    new_ham = replace(ham, A=A_new, phi=phi_old if time_independent else phi_new,
                      uniform_A=uniform, static=ham.static and time_independent,
                      name=f"{ham.name}+gauge")
    return new_psi, new_ham


# state families -------------------------------------------------------------

def gaussian(grid: Grid1D, x0: float = 0.0, sigma: float = 1.0, k0: float = 0.0,
             m: float = 1.0, hbar: float = 1.0, time: float = 0.0) -> WaveFunction:
    """Minimum-uncertainty Gaussian with ``|psi|^2`` standard deviation ``sigma``."""
    values = oracles.spreading_gaussian(grid.x, 0.0, sigma, x0, k0, m, hbar)
    return WaveFunction(grid, values, time, m, hbar).normalized()


def harmonic_eigenstate(grid: Grid1D, n: int, omega: float = 1.0, m: float = 1.0,
                        hbar: float = 1.0, center: float = 0.0) -> WaveFunction:
    values = oracles.harmonic_eigenfunction(grid.x, n, omega, m, hbar, center)
    return WaveFunction(grid, values.astype(complex), 0.0, m, hbar).normalized()


def coherent(grid: Grid1D, x0: float = 0.0, p0: float = 0.0, omega: float = 1.0,
             m: float = 1.0, hbar: float = 1.0, time: float = 0.0) -> WaveFunction:
    values = oracles.coherent_state(grid.x, time, x0, p0, omega, m, hbar)
    return WaveFunction(grid, values, time, m, hbar).normalized()
