"""Two-particle correlations: operator expectation versus position-density integral.

The quantum value of a product observable is ``<psi| A_a B_b |psi>`` with each
factor a symmetrized polynomial in the velocity operator
``v = -i hbar d/dlambda / m``,

    A = sum_k (c_k(lambda) v^k + v^k c_k(lambda)) / 2.

The naive value integrates ``A(lambda_a, vbar_a) B(lambda_b, vbar_b)`` against the
joint density ``P(lambda_a, lambda_b)``. Velocities are replaced by the joint
conditional drift ``vbar_a = (hbar / m_a) Im(psi* d_a psi) / P``, which is the
mean velocity of particle ``a`` given both positions. This substitution uses
every piece of diagonal information and no more; the rows where it fails show
which correlations need off-diagonal data of the density matrix.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import HermiticityError, NormalizationError, OrderError, SmoothPathsError
from .grid import Grid1D
from .states import WaveFunction

logger = logging.getLogger(__name__)

MAX_POINTS = 256
MAX_DEGREE = 4
AGREE_TOL = 1e-7
IMAG_TOL = 1e-9

NAIVE_RULE = ("velocities replaced by the joint conditional drift "
              "(hbar/m) Im(psi* d psi)/P of each particle")


class SeparabilityViolation(SmoothPathsError, AssertionError):
    """A product state produced a gap for an observable pair that must agree."""


@dataclass(frozen=True)
class TwoParticleState:
    """Wave function ``psi(lambda_a, lambda_b)`` on a product of two grids."""

    grid_a: Grid1D
    grid_b: Grid1D
    values: np.ndarray
    m_a: float = 1.0
    m_b: float = 1.0
    hbar: float = 1.0
    norm_tol: float = 1e-8

    def __post_init__(self):
        for g in (self.grid_a, self.grid_b):
            if g.n_points > MAX_POINTS:
                raise ValueError(f"two-particle grids are limited to {MAX_POINTS} points per axis")
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid_a.n_points, self.grid_b.n_points):
            raise ValueError(f"values shape {values.shape} does not match the grids")
        norm = float(np.sum(np.abs(values) ** 2) * self.grid_a.dx * self.grid_b.dx)
        if abs(norm - 1.0) > self.norm_tol:
            raise NormalizationError(f"two-particle norm {norm:.12g} is not 1")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def cell(self) -> float:
        return self.grid_a.dx * self.grid_b.dx

    def schmidt_coefficients(self) -> np.ndarray:
        """Singular values of ``psi * sqrt(dx_a dx_b)``; their squares sum to 1."""
        return np.linalg.svd(self.values * np.sqrt(self.cell), compute_uv=False)

    def is_product(self, tol: float = 1e-10) -> bool:
        sv = self.schmidt_coefficients()
        return bool(np.sum(sv[1:] ** 2) < tol)


def product_state(psi_a: WaveFunction, psi_b: WaveFunction) -> TwoParticleState:
    if psi_a.hbar != psi_b.hbar:
        raise ValueError("both particles must use the same hbar")
    return TwoParticleState(psi_a.grid, psi_b.grid, np.outer(psi_a.values, psi_b.values),
                            psi_a.m, psi_b.m, psi_a.hbar)


def epr_gaussian(grid_a: Grid1D, grid_b: Grid1D | None = None, s: float = 0.5,
                 S: float = 2.0, m: float = 1.0, hbar: float = 1.0) -> TwoParticleState:
    """``psi ~ exp(-(a - b)^2 / 4s^2 - (a + b)^2 / 4S^2)``, normalized on the grid.

    For ``s < S`` the positions are correlated and the velocities
    anti-correlated, with ``<<v_a v_b>> = hbar^2 (1/S^2 - 1/s^2) / 4m^2``.
    """
    grid_b = grid_b or grid_a
    a, b = np.meshgrid(grid_a.x, grid_b.x, indexing="ij")
    values = np.exp(-(a - b) ** 2 / (4 * s**2) - (a + b) ** 2 / (4 * S**2)).astype(complex)
    values /= np.sqrt(np.sum(np.abs(values) ** 2) * grid_a.dx * grid_b.dx)
    return TwoParticleState(grid_a, grid_b, values, m, m, hbar)


# observables ----------------------------------------------------------------

@dataclass(frozen=True)
class Observable:
    """Symmetrized polynomial ``sum_k (c_k v^k + v^k c_k) / 2`` in one particle's velocity.

    Parameters
    ----------
    name : str
    terms : tuple of (coefficient, power)
        ``coefficient`` is a scalar or a callable of the particle coordinate.
    """

    name: str
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple((c, int(k)) for c, k in self.terms)
        if not terms:
            raise ValueError("an observable needs at least one term")
        if any(k < 0 for _, k in terms):
            raise ValueError("velocity powers must be non-negative")
        object.__setattr__(self, "terms", terms)
        if self.degree > MAX_DEGREE:
            raise OrderError(f"velocity degree {self.degree} exceeds {MAX_DEGREE}")

    @property
    def degree(self) -> int:
        return max(k for _, k in self.terms)

    def coefficient(self, c, lam) -> np.ndarray:
        vals = c(lam) if callable(c) else c
        return np.broadcast_to(np.asarray(vals, dtype=float), lam.shape)

    def classical(self, lam, v) -> np.ndarray:
        """``sum_k c_k(lambda) v^k`` evaluated pointwise."""
        return sum(self.coefficient(c, lam) * v**k for c, k in self.terms)


def position(name: str = "x", f=None) -> Observable:
    return Observable(name, ((f if f is not None else (lambda lam: lam), 0),))


def velocity(name: str = "v", power: int = 1, coefficient=1.0) -> Observable:
    return Observable(name, ((coefficient, power),))


def _velocity_power(values, axis, grid, m, hbar, power):
    if power == 0:
        return values
    shape = [1, 1]
    shape[axis] = grid.n_points
    mult = ((hbar * grid.k / m) ** power).reshape(shape)
    return np.fft.ifft(np.fft.fft(values, axis=axis) * mult, axis=axis)


def _apply(obs: Observable, values, axis, grid, m, hbar):
    lam = grid.x.reshape((-1, 1) if axis == 0 else (1, -1))
    out = np.zeros_like(values)
    for c, k in obs.terms:
        coef = obs.coefficient(c, grid.x).reshape(lam.shape)
        out += 0.5 * (coef * _velocity_power(values, axis, grid, m, hbar, k)
                      + _velocity_power(coef * values, axis, grid, m, hbar, k))
    return out


# evaluators -----------------------------------------------------------------

def quantum_correlation(state: TwoParticleState, A: Observable, B: Observable) -> float:
    """``<psi| A_a B_b |psi>`` with both operators applied spectrally.

    Raises
    ------
    HermiticityError
        If the expectation has an imaginary part above ``1e-9``.
    """
    for obs in (A, B):
        if obs.degree > MAX_DEGREE:
            raise OrderError(f"velocity degree {obs.degree} exceeds {MAX_DEGREE}")
    psi = state.values
    applied = _apply(B, psi, 1, state.grid_b, state.m_b, state.hbar)
    applied = _apply(A, applied, 0, state.grid_a, state.m_a, state.hbar)
    value = np.sum(psi.conj() * applied) * state.cell
    scale = max(abs(value.real), 1.0)
    if abs(value.imag) > IMAG_TOL * scale:
        raise HermiticityError(f"expectation has imaginary part {value.imag:.3g}")
    return float(value.real)


def conditional_drifts(state: TwoParticleState, floor: float = 1e-14):
    """Joint conditional drifts ``(vbar_a, vbar_b)``, zero where ``P <= floor * max P``."""
    psi = state.values
    P = state.density
    mask = P > floor * P.max()
    out = []
    for axis, grid, m in ((0, state.grid_a, state.m_a), (1, state.grid_b, state.m_b)):
        shape = [1, 1]
        shape[axis] = grid.n_points
        dpsi = np.fft.ifft(np.fft.fft(psi, axis=axis) * (1j * grid.k).reshape(shape), axis=axis)
        flux = state.hbar / m * np.imag(psi.conj() * dpsi)
        v = np.zeros_like(P)
        v[mask] = flux[mask] / P[mask]
        out.append(v)
    return tuple(out)


def bell_naive_correlation(state: TwoParticleState, A: Observable, B: Observable) -> float:
    """``int A(lambda_a, vbar_a) B(lambda_b, vbar_b) P dlambda_a dlambda_b``."""
    va, vb = conditional_drifts(state)
    a, b = np.meshgrid(state.grid_a.x, state.grid_b.x, indexing="ij")
    integrand = A.classical(a, va) * B.classical(b, vb) * state.density
    return float(np.sum(integrand) * state.cell)


@dataclass(frozen=True)
class GapRow:
    A: str
    B: str
    degree_a: int
    degree_b: int
    quantum: float
    naive: float
    gap: float
    classification: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _row(state, A, B, tol):
    q = quantum_correlation(state, A, B)
    n = bell_naive_correlation(state, A, B)
    gap = q - n
    label = "agree" if abs(gap) < tol else "gap"
    return GapRow(A.name, B.name, A.degree, B.degree, q, n, gap, label)


def gap_report(state: TwoParticleState, pairs, tol: float = AGREE_TOL,
               max_workers: int | None = None) -> list[GapRow]:
    """Quantum and naive values for each ``(A, B)`` pair, evaluated concurrently.

    Rows are ``agree`` when ``|quantum - naive| < tol`` and ``gap`` otherwise.
    For a product state every pair with velocity degree at most 1 on each side
    must agree; higher degrees pick up the single-particle velocity spread,
    which the drift substitution omits even without entanglement.

    Raises
    ------
    SeparabilityViolation
        If a product state yields a gap for a pair of degree at most 1.
    """
    pairs = list(pairs)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        rows = list(pool.map(lambda p: _row(state, p[0], p[1], tol), pairs))
    if state.is_product():
        bad = [r for r in rows
               if r.classification == "gap" and r.degree_a <= 1 and r.degree_b <= 1]
        if bad:
            raise SeparabilityViolation(
                f"product state gave gaps for {[(r.A, r.B) for r in bad]}")
    return rows
