"""Core-ionization Green's functions from real-time coupled-cluster ansätze.

The package builds model and FCIDUMP Hamiltonians, solves ground-state CCSD and
Lambda amplitudes, propagates the ionized-state amplitudes for five ansätze,
decomposes the wavefunction overlap into channels, and turns the resulting
Green's functions into spectra. A full-CI oracle and a polynomial (QSP)
propagator serve as references.
"""
from .ccsd import ClusterAmplitudes, ConvergenceError, solve_ccsd, solve_lambda
from .components import (ChannelKind, ChannelLabel, OverlapDecomposition, channel_greens,
                         omega_amplitudes, overlap_trajectory)
from .config import ConfigError, RunConfig, load_config, validate
from .fci import OracleError, exact_greens, fci_ground, lehmann
from .fcidump import FcidumpError, load_fcidump, write_fcidump
from .hamiltonian import (HARTREE_TO_EV, Hamiltonian, HamiltonianError, ReferencePartition,
                          SiamParams, build_siam, partition_reference)
from .qsp import QspConfig, QspError, apply_poly, chebyshev_coeffs, error_report, qsp_greens
from .rteom import (AnsatzKind, IntegrationFailure, PropagationDiverged, PropagationState,
                    cumulant_greens, eom_rhs, propagate)
from .spectra import QpFit, SpectralFunction, find_peaks, fit_qp_weight, fourier_spectrum
from .trajectory import GreensTrajectory, GridMismatch, uniform_grid

__version__ = "0.1.0"

__all__ = [
    "AnsatzKind", "ChannelKind", "ChannelLabel", "ClusterAmplitudes", "ConfigError",
    "ConvergenceError", "FcidumpError", "GreensTrajectory", "GridMismatch", "HARTREE_TO_EV",
    "Hamiltonian", "HamiltonianError", "IntegrationFailure", "OracleError",
    "OverlapDecomposition", "PropagationDiverged", "PropagationState", "QpFit", "QspConfig",
    "QspError", "ReferencePartition", "RunConfig", "SiamParams", "SpectralFunction",
    "apply_poly", "build_siam", "channel_greens", "chebyshev_coeffs", "cumulant_greens",
    "eom_rhs", "error_report", "exact_greens", "fci_ground", "find_peaks", "fit_qp_weight",
    "fourier_spectrum", "lehmann", "load_config", "load_fcidump", "omega_amplitudes",
    "overlap_trajectory", "partition_reference", "propagate", "qsp_greens", "solve_ccsd",
    "solve_lambda", "uniform_grid", "validate", "write_fcidump",
]
