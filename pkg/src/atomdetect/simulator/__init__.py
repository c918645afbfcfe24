"""Monte Carlo generator of time-tagged photon detection streams."""

from .beam import BeamParams, Transit, TransitBatch, axial_spread_for_damping, sample_transits
from .calibration import ExpectedObservables, calibrate_peak_rate, expected_observables
from .detector import (BackgroundEvents, BackgroundParams, DetectorParams, detect,
                       generate_background)
from .emission import (EmissionContext, ThinningBoundError, emission_rate, emit_photons,
                       emit_transit_photons)
from .run import GroundTruth, resolve_peak_rate, run_simulation

__all__ = [
    "BackgroundEvents", "BackgroundParams", "BeamParams", "DetectorParams", "EmissionContext",
    "ExpectedObservables", "GroundTruth", "ThinningBoundError", "Transit", "TransitBatch",
    "axial_spread_for_damping", "calibrate_peak_rate", "detect", "emission_rate",
    "emit_photons", "emit_transit_photons", "expected_observables", "generate_background",
    "resolve_peak_rate", "run_simulation", "sample_transits",
]
