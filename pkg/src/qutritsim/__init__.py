"""Cooperative dynamics of dipole-coupled qutrit assemblies.

Closed-form mode dynamics for the tanglemeter matrix, random-media spectral
statistics, detuning-switch schedules, and a brute-force 3**N oracle.
"""

from qutritsim.core import (
    CouplingMatrix,
    DetuningSchedule,
    DivergenceError,
    PhysicalConfig,
    QutritError,
    SingularPopulationError,
    SpectralDecomposition,
    TanglemeterMatrix,
    ValidationError,
    make_schedule,
    validate_coupling,
)

__version__ = "0.1.0"

__all__ = [
    "CouplingMatrix",
    "DetuningSchedule",
    "DivergenceError",
    "PhysicalConfig",
    "QutritError",
    "SingularPopulationError",
    "SpectralDecomposition",
    "TanglemeterMatrix",
    "ValidationError",
    "make_schedule",
    "validate_coupling",
    "__version__",
]
