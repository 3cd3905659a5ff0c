"""Simulating partially entangled two-qubit correlations with no-signaling boxes."""

from .core import (
    BinaryCorrelation,
    BlochVector,
    Epr2Decomposition,
    StateParameter,
    epr2_decompose,
    quantum_correlation,
)
from .boxes import SharedRandomness

__version__ = "0.1.0"

__all__ = [
    "BinaryCorrelation",
    "BlochVector",
    "Epr2Decomposition",
    "SharedRandomness",
    "StateParameter",
    "epr2_decompose",
    "quantum_correlation",
]
