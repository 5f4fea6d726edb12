"""Hamiltonians for minimally coupled spinless particles and their stochastic coefficients.

A quadratic process is described by three local coefficients of the short-time
transition phase,

    l0 = -(e*phi + V) / hbar,    l1 = e*A / hbar,    l2 = m / hbar,

and ``HamiltonianSpec`` converts between those and the particle variables
``(m, hbar, e, V, A, phi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import UnsupportedProcess

PotentialFn = Callable[[np.ndarray, float], np.ndarray]


def _evaluate(fn, x, t):
    x = np.asarray(x, dtype=float)
    if fn is None:
        return np.zeros_like(x)
    if np.isscalar(fn):
        return np.full_like(x, float(fn))
    return np.broadcast_to(np.asarray(fn(x, t), dtype=float), x.shape).copy()


def _derivative(fn, x, t, h=1e-3):
    # fourth-order central stencil; exact for polynomials up to degree 4
    if fn is None or np.isscalar(fn):
        return np.zeros_like(np.asarray(x, dtype=float))
    return (
        -_evaluate(fn, x + 2 * h, t)
        + 8 * _evaluate(fn, x + h, t)
        - 8 * _evaluate(fn, x - h, t)
        + _evaluate(fn, x - 2 * h, t)
    ) / (12 * h)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Particle parameters and (possibly time-dependent) potentials.

    ``V``, ``A`` and ``phi`` are callables ``f(x, t)`` (or constants, or None
    for zero). ``higher_coefficients`` lists l3, l4, ... and must be all zero
    for any of the evolution engines.
    """

    m: float = 1.0
    hbar: float = 1.0
    e: float = 0.0
    V: Optional[PotentialFn] = None
    A: Optional[PotentialFn] = None
    phi: Optional[PotentialFn] = None
    higher_coefficients: tuple = ()
    name: str = "custom"
    omega: Optional[float] = None
    uniform_A: bool = True
    static: bool = True

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("mass must be positive")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")

    # particle variables -------------------------------------------------
    def potential(self, x, t=0.0):
        return _evaluate(self.V, x, t)

    def vector_potential(self, x, t=0.0):
        return _evaluate(self.A, x, t)

    def scalar_potential(self, x, t=0.0):
        return _evaluate(self.phi, x, t)

    def total_potential(self, x, t=0.0):
        """``e*phi + V``, the energy that enters the Schrodinger equation."""
        return self.e * self.scalar_potential(x, t) + self.potential(x, t)

    def eA(self, x, t=0.0):
        return self.e * self.vector_potential(x, t)

    def force(self, x, t=0.0):
        return -(self.e * _derivative(self.phi, x, t) + _derivative(self.V, x, t))

    def eA_gradient(self, x, t=0.0):
        return self.e * _derivative(self.A, x, t)

    # stochastic coefficients --------------------------------------------
    def l0(self, x, t=0.0):
        return -self.total_potential(x, t) / self.hbar

    def l1(self, x, t=0.0):
        return self.eA(x, t) / self.hbar

    @property
    def l2(self) -> float:
        return self.m / self.hbar

    @classmethod
    def from_coefficients(cls, l0, l1, l2: float, hbar: float = 1.0, e: float = 1.0,
                          **kwargs) -> "HamiltonianSpec":
        """Build particle variables from ``(l0, l1, l2)``.

        ``l0`` and ``l1`` are callables ``f(x, t)`` or constants. The whole of
        ``-hbar*l0`` is assigned to ``V``; ``phi`` is left at zero.
        """
        if e == 0 and l1 is not None and not (np.isscalar(l1) and l1 == 0):
            raise ValueError("a nonzero l1 needs a nonzero charge")

        def V(x, t):
            return -hbar * _evaluate(l0, x, t)

        def A(x, t):
            return hbar * _evaluate(l1, x, t) / e

        return cls(m=hbar * l2, hbar=hbar, e=e, V=V, A=None if e == 0 else A, **kwargs)

    @property
    def is_quadratic(self) -> bool:
        # a callable coefficient counts as nonzero
        return not any(callable(c) or np.any(np.asarray(c) != 0)
                       for c in self.higher_coefficients)

    def require_quadratic(self):
        if not self.is_quadratic:
            raise UnsupportedProcess(
                "evolution is only defined for processes with vanishing cubic and "
                "higher coefficients"
            )

    @property
    def has_vector_potential(self) -> bool:
        return self.A is not None and self.e != 0

    def with_(self, **changes) -> "HamiltonianSpec":
        return replace(self, **changes)


def free(m: float = 1.0, hbar: float = 1.0) -> HamiltonianSpec:
    return HamiltonianSpec(m=m, hbar=hbar, name="free")


def harmonic(omega: float = 1.0, m: float = 1.0, hbar: float = 1.0,
             center: float = 0.0) -> HamiltonianSpec:
    def V(x, t):
        return 0.5 * m * omega**2 * (x - center) ** 2

    return HamiltonianSpec(m=m, hbar=hbar, V=V, name="harmonic", omega=omega)


def uniform_vector_potential(A0: float, e: float = 1.0, m: float = 1.0,
                             hbar: float = 1.0, base: HamiltonianSpec | None = None
                             ) -> HamiltonianSpec:
    """Constant vector potential, optionally on top of ``base``'s other fields."""
    base = base or free(m, hbar)
    return replace(base, e=e, A=float(A0), uniform_A=True, name=f"{base.name}+A")
