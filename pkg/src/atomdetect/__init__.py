"""Single-atom cavity detection: transit simulator and photon-stream analysis."""

from .config import ExperimentConfig
from .physics import (AtomParams, CavityParams, CouplingSet, DriveParams, FaradayParams,
                      G2ModelParams, g2_atom, g2_model)

__version__ = "0.1.0"

__all__ = [
    "AtomParams", "CavityParams", "CouplingSet", "DriveParams", "ExperimentConfig",
    "FaradayParams", "G2ModelParams", "g2_atom", "g2_model",
]
