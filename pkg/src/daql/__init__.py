"""Digital-analog quantum learning toolkit at desk scale (8-13 qubits)."""

__version__ = "0.1.0"

from .rng import RngStream
from .sim import (
    HermitianOperator,
    QuantumState,
    apply_gate,
    entanglement_entropy,
    evolve,
    expectation,
    ground_state,
    haar_random_state,
    sample_bitstrings,
)

__all__ = [
    "RngStream",
    "QuantumState",
    "HermitianOperator",
    "apply_gate",
    "evolve",
    "expectation",
    "sample_bitstrings",
    "entanglement_entropy",
    "ground_state",
    "haar_random_state",
    "__version__",
]
