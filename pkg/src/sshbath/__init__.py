"""Simulation and analysis of disordered SSH photonic baths.

Frequencies are linear (GHz) throughout; see :mod:`sshbath.lattice`.
"""
__version__ = "0.1.0"

from .lattice import (BathSpec, DisorderDraw, DisorderModel, EmitterSpec, SymmetricMatrix,
                      band_gap, bloch_hamiltonian, build_bath, couple_emitter, dispersion, eta,
                      sample_disorder)
from .eigensolve import (Spectrum, StatePick, bound_state, edge_states, eigh,
                         fit_localization_length, localization_length_theory)
from .transmission import (TransmissionCurve, TransmissionSpec, s21_squared, solve_tridiagonal,
                           sweep_curve)
from .montecarlo import (SweepConfig, participation_ratio, run_bound_state_sweep,
                         run_transmission_sweep)
from .analysis import (SSHTransmissionRegressor, band_gap_from_modes, extract_peaks,
                       fit_bath_parameters, global_sigma, local_sigma)
