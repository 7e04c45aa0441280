"""Structure-preserving simulation of energy-based differential-algebraic systems.

The package builds magnetoquasistatic conductor models and lumped circuits as
energy-based DAE systems, couples them through power-preserving port
interconnections, integrates them with implicit Runge-Kutta methods, and
audits the discrete energy balance of the result.
"""

from fieldcircuit.structure import (
    EnergySystem,
    Partition,
    StructureError,
    NumericalError,
    ValidationReport,
    dae_residual,
    hamiltonian,
    output,
    power_terms,
    validate,
)

__all__ = [
    "EnergySystem",
    "Partition",
    "StructureError",
    "NumericalError",
    "ValidationReport",
    "dae_residual",
    "hamiltonian",
    "output",
    "power_terms",
    "validate",
]

__version__ = "0.1.0"
