"""Uniform periodic 1D grid, fields on it, and the derivative/quadrature substrate.

All quadrature is the rectangle rule on the periodic grid, which is spectrally
accurate for smooth periodic integrands and consistent with the FFT
representation used for derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import GridMismatch, StencilTooShort


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on ``[x_min, x_max)``.

    Parameters
    ----------
    n_points : int
        Number of grid points, a power of two.
    x_min, x_max : float
        Domain edges. ``x_max`` is identified with ``x_min``.
    """

    n_points: int
    x_min: float
    x_max: float

    def __post_init__(self):
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 2, got {n!r}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """Angular wave numbers in FFT ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def k_max(self) -> float:
        return np.pi / self.dx

    def is_on_grid(self, k: float, tol: float = 1e-9) -> bool:
        """True if ``k`` is an integer multiple of the fundamental wave number."""
        j = k * self.length / (2.0 * np.pi)
        return abs(j - round(j)) < tol

    def snap_wave_number(self, k: float) -> float:
        dk = 2.0 * np.pi / self.length
        return dk * round(k / dk)


@dataclass(frozen=True)
class Field:
    """Real or complex samples of a field on a grid at one time."""

    grid: Grid1D
    values: np.ndarray
    time_stamp: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (self.grid.n_points,):
            raise GridMismatch(
                f"field has shape {values.shape}, grid expects ({self.grid.n_points},)"
            )
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values, self.time_stamp)


def _unpack(f, grid):
    if isinstance(f, Field):
        if grid is not None and grid != f.grid:
            raise GridMismatch("field grid differs from the grid supplied")
        return np.asarray(f.values), f.grid
    if grid is None:
        raise GridMismatch("a bare array needs an explicit grid")
    values = np.asarray(f)
    if values.shape[-1] != grid.n_points:
        raise GridMismatch(
            f"array trailing length {values.shape[-1]} != n_points {grid.n_points}"
        )
    return values, grid


def integrate(f, grid: Grid1D | None = None):
    """Rectangle-rule integral over one period.

    Works on the last axis, so a stack of fields gives a stack of integrals.
    """
    values, grid = _unpack(f, grid)
    return values.sum(axis=-1) * grid.dx


def spectral_derivative(f, order: int = 1, grid: Grid1D | None = None):
    """``order``-th derivative via FFT, multiplying by ``(ik)**order``.

    Returns the same kind of object that was passed in (Field or array). Real
    input gives real output.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    values, g = _unpack(f, grid)
    out = apply_fourier_multiplier(values, (1j * g.k) ** order)
    if np.isrealobj(values):
        out = out.real
    if isinstance(f, Field):
        return f.with_values(out)
    return out


def apply_fourier_multiplier(values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """Apply a diagonal operator in wave-number space along the last axis."""
    return np.fft.ifft(np.fft.fft(values, axis=-1) * multiplier, axis=-1)


def spectral_shift(values: np.ndarray, shift, grid: Grid1D) -> np.ndarray:
    """Band-limited evaluation of ``f(x + shift)`` on the grid.

    ``shift`` may be an array; the result then carries a leading axis.
    """
    shift = np.asarray(shift, dtype=float)
    phase = np.exp(1j * np.multiply.outer(shift, grid.k))
    out = apply_fourier_multiplier(values, phase)
    if np.isrealobj(values):
        out = out.real
    return out


def spectral_power(values: np.ndarray, grid: Grid1D) -> float:
    """Parseval counterpart of ``integrate(|f|**2)``."""
    coeffs = np.fft.fft(values)
    return float(np.sum(np.abs(coeffs) ** 2) * grid.dx / grid.n_points)


def tail_mass(values: np.ndarray, width: int = 1) -> float:
    """Largest ``|f|**2`` within ``width`` cells of the periodic seam."""
    p = np.abs(np.asarray(values)) ** 2
    return float(max(p[:width].max(), p[-width:].max()))


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at offset 0.

    ``offsets`` are in units of the sample spacing.
    """
    offsets = np.asarray(offsets, dtype=float)
    n = offsets.size
    vander = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = factorial(order)
    return np.linalg.solve(vander, rhs)


def finite_difference_time(samples, dt: float, order: int):
    """Estimate the ``order``-th time derivative from equally spaced samples.

    Parameters
    ----------
    samples : sequence of arrays or scalars
        Values at ``t0 + j*dt``. An odd count is read as a stencil centred on
        the middle sample; an even count as a forward stencil from the first.
    dt : float
        Sample spacing.
    order : int
        Derivative order, at least 1.

    Returns
    -------
    Derivative estimate at the centre (odd) or first (even) sample.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    samples = [np.asarray(s) for s in samples]
    n = len(samples)
    if n < order + 1:
        raise StencilTooShort(f"order {order} needs at least {order + 1} samples, got {n}")
    if n % 2 == 1:
        offsets = np.arange(n) - n // 2
    else:
        offsets = np.arange(n)
    w = fd_weights(offsets, order)
    stacked = np.stack(samples)
    return np.tensordot(w, stacked, axes=(0, 0)) / dt**order
