"""Modal hidden-variable unravelings of non-Markovian open quantum systems."""

__version__ = "0.1.0"

from .bell import Decomposition, bell_rates, current_matrix, probabilities, simulate_jump_process
from .conditioning import (
    CoherentVars,
    PositionVars,
    QuadratureVars,
    condition_coherent,
    condition_position,
    condition_quadrature,
)
from .dynamics import integrate_trajectory, noise_z, sample_initial, velocity_closed, velocity_general
from .ensemble import EnsembleConfig, lindblad_oracle, run_ensemble, trace_distance
from .linalg import BasisDescriptor, StateVector, partial_trace_bath
from .model import BathSpec, ModeSpec, SystemSpec, UniverseModel, check_symmetric_pairs, sigma_minus
from .propagator import IntegratorConfig, PropagationError, evolve, evolve_model, reduced_state

__all__ = [
    "BasisDescriptor", "BathSpec", "CoherentVars", "Decomposition", "EnsembleConfig",
    "IntegratorConfig", "ModeSpec", "PositionVars", "PropagationError", "QuadratureVars",
    "StateVector", "SystemSpec", "UniverseModel", "bell_rates", "check_symmetric_pairs",
    "condition_coherent", "condition_position", "condition_quadrature", "current_matrix",
    "evolve", "evolve_model", "integrate_trajectory", "lindblad_oracle", "noise_z",
    "partial_trace_bath", "probabilities", "reduced_state", "run_ensemble", "sample_initial",
    "sigma_minus", "simulate_jump_process", "trace_distance", "velocity_closed",
    "velocity_general",
]
