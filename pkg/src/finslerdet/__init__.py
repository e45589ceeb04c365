"""Randers-Finsler geometry, indicatrix averaging and deterministic quantum toy models."""

from .averaging import (AveragingScheme, average_hamiltonian, average_metric,
                        decompose_hamiltonian, hamiltonian_sup, indicatrix_point)
from .connections import cartan_connection, chern_connection, christoffel, nonlinear_connection
from .dynamics import bounds_check, classical_hamiltonian, flow, max_acceleration_estimate, return_time
from .errors import *  # noqa: F401,F403
from .expr import FieldExpression
from .fields import Box, RandersField, TabulatedComponent
from .randers import (cartan_tensor, compose_direct_sum, compose_interacting, finsler_norm,
                      fundamental_tensor, legendre_dual, momentum_norm, randers_from_deterministic,
                      validate_randers)

__version__ = "0.1.0"
