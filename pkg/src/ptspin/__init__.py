"""Dynamics of a PT-symmetric spin with H = 2v Sx - 2i gamma Sz.

Submodules
----------
spin_algebra
    Spin matrices, Dicke and coherent states, Clebsch-Gordan coefficients,
    spherical harmonics, tensor operators.
evolution
    Hamiltonian, spectrum and three propagator constructions.
observables
    Density-matrix evolution, moments, trace dynamics, Ehrenfest flow.
husimi
    Husimi Q-function, characteristics and the phase-space PDE.
cli
    Scenario runner behind the ``ptspin`` command.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, ExpmOverflowError, IntegrationError, NumericalError,  # noqa: E402
                     PtSpinError, TraceVanishedError)
from .evolution import (ModelParams, Method, Propagator, analytic_spectrum, build_hamiltonian,  # noqa: E402
                        deformation_coherence, disentangle, propagator_diag, propagator_direct,
                        propagator_disentangled)
from .linalg import matrix_exponential  # noqa: E402
from .observables import (BlochPoint, DensityState, analytic_circle, coherence_functional,  # noqa: E402
                          evolve_density, evolve_series, expectation, integrate_ehrenfest, variances)
from .spin_algebra import (SpinSystem, clebsch_gordan, coherent_state, dicke_state,  # noqa: E402
                           make_spin_system, pt_symmetry_check, spherical_harmonic, tensor_operator)

__all__ = [
    "BlochPoint", "ConfigError", "DensityState", "ExpmOverflowError", "IntegrationError", "Method",
    "ModelParams", "NumericalError", "Propagator", "PtSpinError", "SpinSystem", "TraceVanishedError",
    "analytic_circle", "analytic_spectrum", "build_hamiltonian", "clebsch_gordan", "coherence_functional",
    "coherent_state", "deformation_coherence", "dicke_state", "disentangle", "evolve_density",
    "evolve_series", "expectation", "integrate_ehrenfest", "make_spin_system", "matrix_exponential",
    "propagator_diag", "propagator_direct", "propagator_disentangled", "pt_symmetry_check",
    "spherical_harmonic", "tensor_operator", "variances",
]
