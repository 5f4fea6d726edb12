"""Numerical verification toolkit for quantum evolution viewed as smooth stochastic paths."""

__version__ = "0.1.0"

from .bell import (Observable, TwoParticleState, bell_naive_correlation, epr_gaussian,
                   gap_report, product_state, quantum_correlation)
from .errors import *  # noqa: F401,F403
from .evolution import (ExactPropagator, crank_nicolson_kernel, evolve, evolve_crank_nicolson,
                        evolve_density, evolve_split_step, exact_propagator, free_propagator,
                        unitarity_check)
from .grid import Field, Grid1D, integrate, spectral_derivative
from .hamilton_jacobi import (classical_hj_solve, de_broglie_check, drift_transport,
                              drift_velocity, energy_bookkeeping, hbar_scaling_study,
                              quantum_hj_residual, quantum_potential)
from .hamiltonian import HamiltonianSpec, free, harmonic, uniform_vector_potential
from .moments import (continuity_residuals, full_moments_trace, generating_function,
                      kramers_moyal_extract, local_moments)
from .retarded import (action_identity_residual, build_slab, lagrangian_limit,
                       lagrangian_target, retarded_advanced_split)
from .states import (DensityMatrix, WaveFunction, coherent, density_from_mixture,
                     density_from_pure, gauge_transform, gaussian, harmonic_eigenstate,
                     polar_decompose, spectral_decompose)
