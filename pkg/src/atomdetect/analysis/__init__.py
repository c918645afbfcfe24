"""Single-channel statistics on time-tagged photon streams."""

from .counting import (BinnedCounts, MandelFitError, MandelFitResult, bin_counts, mandel_alpha,
                       mandel_points)
from .detection import (FidelityReport, KFoldResult, WaitingTimeHistogram, coincidence_count,
                        coincidence_fidelity, k_fold_count, k_fold_signal_to_background,
                        predicted_rate, waiting_time_distribution)
from .streamio import (EventFlag, PhotonEvent, PhotonStream, StreamFormatError, read_stream,
                       write_stream)

__all__ = [
    "BinnedCounts", "EventFlag", "FidelityReport", "KFoldResult", "MandelFitError",
    "MandelFitResult", "PhotonEvent", "PhotonStream", "StreamFormatError",
    "WaitingTimeHistogram", "bin_counts", "coincidence_count", "coincidence_fidelity",
    "k_fold_count", "k_fold_signal_to_background", "mandel_alpha", "mandel_points",
    "predicted_rate", "read_stream", "waiting_time_distribution", "write_stream",
]
