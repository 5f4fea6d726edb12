"""Time evolution under the minimally coupled Schrodinger equation.

Three engines are provided:

* exact spectral propagation for time-independent Hamiltonians (plane-wave
  multipliers when the potential vanishes, otherwise the eigenbasis of the
  discretized Hamiltonian);
* second-order Strang splitting, kinetic part in Fourier space;
* Crank-Nicolson in Cayley form with the covariant kinetic operator applied
  spectrally, solved by preconditioned GMRES.

Time-dependent potentials are sampled at step midpoints in both integrators.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import BadTimeStep, SolverError, UnsupportedProcess
from .grid import Grid1D, apply_fourier_multiplier
from .hamiltonian import HamiltonianSpec, free, harmonic, uniform_vector_potential
from .states import DensityMatrix, WaveFunction

__all__ = [
    "HamiltonianSpec",
    "free",
    "harmonic",
    "uniform_vector_potential",
    "PropagatorKernel",
    "ExactPropagator",
    "free_propagator",
    "exact_propagator",
    "crank_nicolson_kernel",
    "hamiltonian_matrix",
    "evolve_split_step",
    "evolve_crank_nicolson",
    "evolve",
    "unitarity_check",
    "evolve_density",
]

logger = logging.getLogger(__name__)

METHODS = ("closed-form-free", "closed-form-harmonic", "split-step", "crank-nicolson", "eigen")


@dataclass(frozen=True)
class PropagatorKernel:
    """Continuum kernel values ``U(x'; x)`` for one step ``dt``.

    The quadrature-weighted matrix ``kernel * dx`` is the operator acting on
    grid samples.
    """

    grid: Grid1D
    kernel: np.ndarray
    dt: float
    method: str

    @property
    def operator(self) -> np.ndarray:
        return self.kernel * self.grid.dx

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values) @ self.operator.T


def _check_dt(dt):
    if not dt > 0:
        raise BadTimeStep(f"time step must be positive, got {dt!r}")


def _kinetic_phase(grid, ham, t, dt):
    # exp(-i (hbar k - eA)^2 dt / (2 m hbar)) for spatially uniform A
    eA = float(ham.eA(np.zeros(1), t)[0]) if ham.has_vector_potential else 0.0
    p = ham.hbar * grid.k - eA
    return np.exp(-1j * p**2 * dt / (2.0 * ham.m * ham.hbar))


def _is_free_like(ham: HamiltonianSpec) -> bool:
    return ham.V is None and ham.phi is None and ham.uniform_A


def hamiltonian_matrix(grid: Grid1D, ham: HamiltonianSpec, t: float = 0.0) -> np.ndarray:
    """Dense Hermitian matrix of H on grid samples at time ``t``.

    Kinetic term ``(p - eA)^2 / 2m`` is expanded as
    ``(p^2 - (p eA + eA p) + (eA)^2) / 2m`` with ``p`` spectral.
    """
    n = grid.n_points
    eye = np.eye(n)
    p = np.fft.ifft(ham.hbar * grid.k[:, None] * np.fft.fft(eye, axis=0), axis=0)
    p = 0.5 * (p + p.conj().T)
    p2 = np.fft.ifft((ham.hbar * grid.k[:, None]) ** 2 * np.fft.fft(eye, axis=0), axis=0)
    p2 = 0.5 * (p2 + p2.conj().T)
    x = grid.x
    H = p2 / (2.0 * ham.m)
    if ham.has_vector_potential:
        eA = ham.eA(x, t)
        H = H + (-(p * eA[None, :]) - (eA[:, None] * p) + np.diag(eA**2)) / (2.0 * ham.m)
    H = H + np.diag(ham.total_potential(x, t))
    return 0.5 * (H + H.conj().T)


class ExactPropagator:
    """Exact evolution on the grid for a time-independent Hamiltonian.

    With no scalar potential and uniform A the plane waves are eigenstates and
    propagation is a Fourier multiplier; otherwise the discretized Hamiltonian
    is diagonalized once and reused for every ``dt``.
    """

    def __init__(self, grid: Grid1D, ham: HamiltonianSpec, t: float = 0.0):
        ham.require_quadratic()
        self.grid = grid
        self.ham = ham
        self.t = t
        if _is_free_like(ham):
            self.mode = "fourier"
            self._energies = None
        else:
            self.mode = "eigen"
            self._energies, self._vectors = np.linalg.eigh(hamiltonian_matrix(grid, ham, t))

    def apply(self, values, dt: float) -> np.ndarray:
        """Evolve samples along the last axis by ``dt`` (either sign)."""
        values = np.asarray(values, dtype=complex)
        if self.mode == "fourier":
            return apply_fourier_multiplier(values, _kinetic_phase(self.grid, self.ham, self.t, dt))
        phase = np.exp(-1j * self._energies * dt / self.ham.hbar)
        coeffs = values @ self._vectors.conj()
        return (coeffs * phase) @ self._vectors.T

    def apply_many(self, values, dts) -> list:
        """``[apply(values, dt) for dt in dts]`` sharing one basis transform."""
        values = np.asarray(values, dtype=complex)
        if self.mode == "fourier":
            spec = np.fft.fft(values, axis=-1)
            return [np.fft.ifft(spec * _kinetic_phase(self.grid, self.ham, self.t, dt), axis=-1)
                    for dt in dts]
        coeffs = values @ self._vectors.conj()
        return [(coeffs * np.exp(-1j * self._energies * dt / self.ham.hbar)) @ self._vectors.T
                for dt in dts]

    def kernel(self, dt: float) -> PropagatorKernel:
        _check_dt(dt)
        eye = np.eye(self.grid.n_points, dtype=complex)
        # row j of apply(eye) is U applied to basis vector j, i.e. column j of U
        op = self.apply(eye, dt).T
        method = "closed-form-free" if self.mode == "fourier" else "eigen"
        return PropagatorKernel(self.grid, op / self.grid.dx, dt, method)


def free_propagator(grid: Grid1D, m: float, hbar: float, dt: float) -> PropagatorKernel:
    """Free-particle propagator restricted to the grid's periodic band.

    This is the closed-form kernel ``sqrt(m / 2 pi i hbar dt) exp(i m dx^2 / 2 hbar dt)``
    summed over periodic images and projected onto the resolvable wave numbers,
    which is the only version that is exactly unitary on the grid.
    """
    _check_dt(dt)
    return ExactPropagator(grid, free(m, hbar)).kernel(dt)


def exact_propagator(grid: Grid1D, ham: HamiltonianSpec, dt: float) -> PropagatorKernel:
    if ham.V is not None and not ham.static:
        raise UnsupportedProcess("exact propagation needs a time-independent Hamiltonian")
    return ExactPropagator(grid, ham).kernel(dt)


# split step -----------------------------------------------------------------

def _split_step_array(values, grid, ham, t0, dt, n_steps):
    if ham.has_vector_potential and not ham.uniform_A:
        raise UnsupportedProcess(
            "split-step handles only spatially uniform vector potentials; "
            "use evolve_crank_nicolson"
        )
    x = grid.x
    psi = np.asarray(values, dtype=complex)
    for j in range(n_steps):
        tm = t0 + (j + 0.5) * dt
        half = np.exp(-0.5j * ham.total_potential(x, tm) * dt / ham.hbar)
        psi = half * apply_fourier_multiplier(half * psi, _kinetic_phase(grid, ham, tm, dt))
    return psi


def evolve_split_step(psi: WaveFunction, ham: HamiltonianSpec, dt: float,
                      n_steps: int = 1) -> WaveFunction:
    """Strang-split evolution: half potential, full kinetic, half potential.

    Raises
    ------
    UnsupportedProcess
        For non-quadratic processes or a spatially varying vector potential.
    """
    ham.require_quadratic()
    _check_dt(dt)
    out = _split_step_array(psi.values, psi.grid, ham, psi.time, dt, n_steps)
    return psi.with_values(out, time=psi.time + n_steps * dt)


# Crank-Nicolson -------------------------------------------------------------

def _apply_hamiltonian(values, grid, ham, t):
    """H psi with the covariant kinetic term evaluated spectrally."""
    hk = ham.hbar * grid.k
    x = grid.x
    out = apply_fourier_multiplier(values, hk**2) / (2.0 * ham.m)
    if ham.has_vector_potential:
        eA = ham.eA(x, t)
        p_psi = apply_fourier_multiplier(values, hk)
        p_eApsi = apply_fourier_multiplier(eA * values, hk)
        out = out + (-(eA * p_psi) - p_eApsi + eA**2 * values) / (2.0 * ham.m)
    return out + ham.total_potential(x, t) * values


def _cn_step(psi, grid, ham, t, dt, rtol):
    n = grid.n_points
    a = 0.5j * dt / ham.hbar
    rhs = psi - a * _apply_hamiltonian(psi, grid, ham, t + 0.5 * dt)
    tm = t + 0.5 * dt

    def matvec(v):
        return v + a * _apply_hamiltonian(v, grid, ham, tm)

    kin = 1.0 + a * (ham.hbar * grid.k) ** 2 / (2.0 * ham.m)

    def precond(v):
        return apply_fourier_multiplier(v, 1.0 / kin)

    A = LinearOperator((n, n), matvec=matvec, dtype=complex)
    M = LinearOperator((n, n), matvec=precond, dtype=complex)
    sol, info = gmres(A, rhs, x0=psi, rtol=rtol, atol=0.0, M=M, restart=60, maxiter=200)
    residual = np.linalg.norm(matvec(sol) - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if info != 0 or residual > 100 * rtol:
        raise SolverError(f"GMRES did not converge (info={info}, residual={residual:.2e})")
    return sol


def evolve_crank_nicolson(psi: WaveFunction, ham: HamiltonianSpec, dt: float,
                          n_steps: int = 1, rtol: float = 1e-13) -> WaveFunction:
    """Cayley-form evolution ``(1 + iH dt/2hbar) psi' = (1 - iH dt/2hbar) psi``.

    Raises
    ------
    SolverError
        If the Krylov solve fails to reach ``rtol``.
    """
    ham.require_quadratic()
    _check_dt(dt)
    values = np.asarray(psi.values, dtype=complex)
    t = psi.time
    for _ in range(n_steps):
        values = _cn_step(values, psi.grid, ham, t, dt, rtol)
        t += dt
    return psi.with_values(values, time=psi.time + n_steps * dt)


def crank_nicolson_kernel(grid: Grid1D, ham: HamiltonianSpec, dt: float,
                          t: float = 0.0) -> PropagatorKernel:
    """One-step Cayley kernel built from the dense Hamiltonian."""
    _check_dt(dt)
    H = hamiltonian_matrix(grid, ham, t + 0.5 * dt)
    a = 0.5j * dt / ham.hbar
    eye = np.eye(grid.n_points)
    op = linalg.solve(eye + a * H, eye - a * H)
    return PropagatorKernel(grid, op / grid.dx, dt, "crank-nicolson")


def evolve(psi: WaveFunction, ham: HamiltonianSpec, dt: float, n_steps: int = 1,
           method: str = "split-step") -> WaveFunction:
    """Dispatch to one of the integrators by name."""
    if method == "split-step":
        return evolve_split_step(psi, ham, dt, n_steps)
    if method == "crank-nicolson":
        return evolve_crank_nicolson(psi, ham, dt, n_steps)
    if method == "exact":
        _check_dt(dt)
        prop = ExactPropagator(psi.grid, ham, psi.time)
        return psi.with_values(prop.apply(psi.values, n_steps * dt), psi.time + n_steps * dt)
    raise ValueError(f"unknown method {method!r}")


def unitarity_check(U: PropagatorKernel) -> float:
    """Largest entry of ``|O^H O - I|`` with ``O = U * dx``."""
    op = U.operator
    gram = op.conj().T @ op
    return float(np.abs(gram - np.eye(op.shape[0])).max())


def evolve_density(rho: DensityMatrix, ham: HamiltonianSpec, dt: float, n_steps: int = 1,
                   method: str = "split-step") -> DensityMatrix:
    """``rho -> U rho U^dagger`` with one propagator shared by every component.

    ``method`` is ``"split-step"``, ``"crank-nicolson"`` (dense Cayley step)
    or ``"exact"``.
    """
    ham.require_quadratic()
    _check_dt(dt)
    grid = rho.grid

    if method == "split-step":
        def step(values, j):
            return _split_step_array(values, grid, ham, rho.time + j * dt, dt, 1)
        steps = n_steps
    elif method == "crank-nicolson":
        cache = {}

        def step(values, j):
            t = rho.time + j * dt
            key = 0.0 if ham.static else t
            if key not in cache:
                cache.clear()
                cache[key] = crank_nicolson_kernel(grid, ham, dt, t).operator
            return values @ cache[key].T
        steps = n_steps
    elif method == "exact":
        prop = ExactPropagator(grid, ham, rho.time)

        def step(values, j):
            return prop.apply(values, n_steps * dt)
        steps = 1
    else:
        raise ValueError(f"unknown method {method!r}")

    kernel = np.asarray(rho.kernel, dtype=complex)
    for j in range(steps):
        left = step(kernel.T, j).T                 # U acting on the first index
        kernel = step(left.conj(), j).conj()       # U^* acting on the second index
    return rho.with_kernel(kernel, time=rho.time + n_steps * dt)
