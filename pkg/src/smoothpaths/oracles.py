"""Closed-form solutions used as independent ground truth.

Nothing here is used by the integrators themselves; these are reference values
for tests, scenario validation and convergence studies.
"""

from __future__ import annotations

import numpy as np
from scipy.special import eval_hermite, factorial


def spreading_gaussian(x, t, sigma0=1.0, x0=0.0, k0=0.0, m=1.0, hbar=1.0):
    """Free minimum-uncertainty Gaussian evolved for time ``t``.

    ``sigma0`` is the initial position standard deviation of ``|psi|**2``.
    """
    x = np.asarray(x, dtype=float)
    a = 1.0 + 1j * hbar * t / (2.0 * m * sigma0**2)
    v0 = hbar * k0 / m
    xc = x0 + v0 * t
    norm = (2.0 * np.pi * sigma0**2) ** -0.25 / np.sqrt(a)
    return norm * np.exp(
        -((x - xc) ** 2) / (4.0 * sigma0**2 * a)
        + 1j * k0 * (x - x0)
        - 1j * hbar * k0**2 * t / (2.0 * m)
    )


def spreading_gaussian_width(t, sigma0=1.0, m=1.0, hbar=1.0):
    return np.sqrt(sigma0**2 + (hbar * t / (2.0 * m * sigma0)) ** 2)


def spreading_gaussian_phase_gradient(x, t, sigma0=1.0, x0=0.0, k0=0.0, m=1.0, hbar=1.0):
    """``d/dx`` of the phase ``S`` (action units) of the free Gaussian."""
    tau = hbar * t / (2.0 * m * sigma0**2)
    xc = x0 + hbar * k0 * t / m
    return hbar * k0 + m * (x - xc) * tau**2 / (t * (1.0 + tau**2)) if t != 0 else \
        hbar * k0 + 0.0 * x


def spreading_gaussian_dPdt(x, t, sigma0=1.0, x0=0.0, k0=0.0, m=1.0, hbar=1.0):
    """Analytic time derivative of ``|psi|**2`` for the free Gaussian."""
    s2 = spreading_gaussian_width(t, sigma0, m, hbar) ** 2
    ds2 = 2.0 * (hbar / (2.0 * m * sigma0)) ** 2 * t
    v0 = hbar * k0 / m
    xc = x0 + v0 * t
    u = x - xc
    P = np.exp(-(u**2) / (2 * s2)) / np.sqrt(2 * np.pi * s2)
    return P * (-0.5 * ds2 / s2 + u**2 * ds2 / (2 * s2**2) + u * v0 / s2)


def harmonic_eigenfunction(x, n, omega=1.0, m=1.0, hbar=1.0, center=0.0):
    xi = np.sqrt(m * omega / hbar) * (np.asarray(x, dtype=float) - center)
    norm = (m * omega / (np.pi * hbar)) ** 0.25 / np.sqrt(2.0**n * factorial(n))
    return norm * eval_hermite(n, xi) * np.exp(-0.5 * xi**2)


def harmonic_energy(n, omega=1.0, hbar=1.0):
    return hbar * omega * (n + 0.5)


def coherent_state(x, t, x0=0.0, p0=0.0, omega=1.0, m=1.0, hbar=1.0):
    """Displaced harmonic ground state, exact at time ``t``.

    The phase is ``S = p_c*x - p_c*x_c/2 - hbar*omega*t/2`` up to a
    time-independent constant fixed by the ``t = 0`` convention.
    """
    x = np.asarray(x, dtype=float)
    xc, pc = coherent_center(t, x0, p0, omega, m)
    phase = (pc * x - 0.5 * pc * xc - 0.5 * hbar * omega * t) / hbar
    amp = (m * omega / (np.pi * hbar)) ** 0.25 * np.exp(-m * omega * (x - xc) ** 2 / (2 * hbar))
    return amp * np.exp(1j * phase)


def coherent_center(t, x0=0.0, p0=0.0, omega=1.0, m=1.0):
    xc = x0 * np.cos(omega * t) + p0 / (m * omega) * np.sin(omega * t)
    pc = p0 * np.cos(omega * t) - m * omega * x0 * np.sin(omega * t)
    return xc, pc


def free_kernel(dx, dt, m=1.0, hbar=1.0):
    """Position-space free propagator ``sqrt(m/2 pi i hbar dt) exp(i m dx^2 / 2 hbar dt)``."""
    pref = np.sqrt(m / (2j * np.pi * hbar * dt))
    return pref * np.exp(1j * m * np.asarray(dx) ** 2 / (2.0 * hbar * dt))


def mehler_kernel(x_out, x_in, dt, omega=1.0, m=1.0, hbar=1.0):
    """Harmonic-oscillator propagator ``<x_out| exp(-i H dt / hbar) |x_in>``.

    Valid for ``omega*dt`` not a multiple of pi.
    """
    s = np.sin(omega * dt)
    c = np.cos(omega * dt)
    pref = np.sqrt(m * omega / (2j * np.pi * hbar * s))
    xo = np.asarray(x_out)[:, None]
    xi = np.asarray(x_in)[None, :]
    return pref * np.exp(1j * m * omega * ((xo**2 + xi**2) * c - 2 * xo * xi) / (2 * hbar * s))


def gaussian_local_v2(x, sigma=1.0, x0=0.0, m=1.0, hbar=1.0):
    """Local ``<v^2>(x)`` of a real Gaussian, ``-hbar^2 r''/(m^2 r)``."""
    u = np.asarray(x) - x0
    return (hbar / m) ** 2 * (1.0 / (2 * sigma**2) - u**2 / (4 * sigma**4))


def epr_velocity_covariance(s, S, m=1.0, hbar=1.0):
    """``<<v_a v_b>>`` for ``psi ~ exp(-(a-b)^2/4s^2 - (a+b)^2/4S^2)``."""
    return hbar**2 / (4.0 * m**2) * (1.0 / S**2 - 1.0 / s**2)
