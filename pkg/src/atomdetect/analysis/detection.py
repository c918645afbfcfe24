"""Waiting times, coincidence fidelity and k-fold signal-to-background."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .streamio import PS, PhotonStream

# One-sided 95% Poisson upper limit on a mean when zero events are observed.
ZERO_COUNT_UPPER = -math.log(0.05)


@dataclass
class WaitingTimeHistogram:
    """Histogram of consecutive-detection separations.

    ``overflow`` counts separations at or beyond ``max_tau`` so that
    ``counts.sum() + overflow`` is the number of consecutive pairs.
    """

    edges: np.ndarray
    counts: np.ndarray
    overflow: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def n_pairs(self) -> int:
        return int(self.counts.sum()) + self.overflow

    def integral(self, window: float) -> int:
        """Pairs with separation below ``window`` (exact at bin edges)."""
        k = int(np.searchsorted(self.edges, window, side="right")) - 1
        if k >= len(self.counts):
            return self.n_pairs
        return int(self.counts[:max(k, 0)].sum())


def _gaps_ps(stream: PhotonStream) -> np.ndarray:
    ts = stream.timestamps_ps
    return np.diff(ts).astype(np.int64) if len(ts) > 1 else np.empty(0, np.int64)


def waiting_time_distribution(stream: PhotonStream, max_tau: float,
                              bin: float) -> WaitingTimeHistogram:
    if not (bin > 0 and max_tau > 0):
        raise ValueError("bin and max_tau must be > 0")
    n_bins = int(math.ceil(max_tau / bin - 1e-9))
    bin_ps = int(round(bin / PS))
    edges = np.arange(n_bins + 1) * bin
    gaps = _gaps_ps(stream)
    if len(gaps) == 0:
        return WaitingTimeHistogram(edges, np.zeros(n_bins, np.int64), 0)
    idx = gaps // bin_ps
    inside = idx < n_bins
    counts = np.bincount(idx[inside], minlength=n_bins)
    return WaitingTimeHistogram(edges, counts, int((~inside).sum()))


def coincidence_count(stream: PhotonStream, gate: float) -> int:
    """Consecutive pairs separated by at most ``gate``."""
    return int(np.count_nonzero(_gaps_ps(stream) <= int(round(gate / PS))))


@dataclass
class FidelityReport:
    """``F = 1 - c_without / c_with`` with ``c_without`` scaled to the with-atoms duration.

    ``no_signal`` marks ``c_with = 0`` (fidelity undefined). When no background
    coincidence is seen, ``fidelity`` is 1 and ``fidelity_lower_bound`` uses
    the one-sided 95% Poisson limit on the background term.
    """

    gate_length: float
    coincidences_with: int
    coincidences_without: int
    duration_with: float
    duration_without: float
    fidelity: float
    fidelity_lower_bound: float
    fidelity_error: float
    no_signal: bool = False


def coincidence_fidelity(stream_with: PhotonStream, stream_without: PhotonStream, gate: float,
                         duration_with: float | None = None,
                         duration_without: float | None = None) -> FidelityReport:
    d_with = duration_with if duration_with is not None else stream_with.duration
    d_without = duration_without if duration_without is not None else stream_without.duration
    if not (d_with > 0 and d_without > 0):
        raise ValueError("stream durations must be > 0")
    c_w = coincidence_count(stream_with, gate)
    c_wo = coincidence_count(stream_without, gate)
    scale = d_with / d_without
    if c_w == 0:
        return FidelityReport(gate, 0, c_wo, d_with, d_without, math.nan, math.nan, math.nan,
                              no_signal=True)
    bg = c_wo * scale
    F = 1.0 - bg / c_w
    err = (bg / c_w) * math.sqrt((1.0 / c_wo if c_wo else 0.0) + 1.0 / c_w)
    if c_wo == 0:
        lower = 1.0 - ZERO_COUNT_UPPER * scale / c_w
    else:
        lower = F - 2.0 * err
    return FidelityReport(gate, c_w, c_wo, d_with, d_without, F, lower, err)


def k_fold_count(stream: PhotonStream, window: float, k: int) -> int:
    """Detections that open a gate containing at least k-1 further detections.

    Each detection opens its own fixed-length gate; later photons inside it
    neither extend it nor are excluded from opening their own.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ts = stream.timestamps_ps.astype(np.int64)
    if k == 1:
        return len(ts)
    if len(ts) < k:
        return 0
    return int(np.count_nonzero(ts[k - 1:] - ts[:len(ts) - k + 1] <= int(round(window / PS))))


@dataclass
class KFoldResult:
    """``(R_with - R_without) / R_without``; a lower bound when no background event is seen."""

    k: int
    window: float
    rate_with: float
    rate_without: float
    ratio: float
    error: float
    is_lower_bound: bool = False
    lower_bound: float = math.nan


def k_fold_signal_to_background(stream_with: PhotonStream, stream_without: PhotonStream,
                                window: float, k: int, duration_with: float | None = None,
                                duration_without: float | None = None) -> KFoldResult:
    d_w = duration_with if duration_with is not None else stream_with.duration
    d_wo = duration_without if duration_without is not None else stream_without.duration
    if not (d_w > 0 and d_wo > 0):
        raise ValueError("stream durations must be > 0")
    n_w = k_fold_count(stream_with, window, k)
    n_wo = k_fold_count(stream_without, window, k)
    r_w, r_wo = n_w / d_w, n_wo / d_wo
    if n_wo == 0:
        ub = ZERO_COUNT_UPPER / d_wo
        return KFoldResult(k, window, r_w, 0.0, math.nan, math.nan, True, (r_w - ub) / ub)
    ratio = (r_w - r_wo) / r_wo
    s_w, s_wo = math.sqrt(n_w) / d_w, math.sqrt(n_wo) / d_wo
    err = math.hypot(s_w / r_wo, r_w * s_wo / r_wo**2)
    return KFoldResult(k, window, r_w, r_wo, ratio, err)


def predicted_rate(n_bar: float, alpha: float, transit_T: float) -> float:
    """Signal count rate ``N alpha / (2 T)``."""
    if n_bar < 0 or alpha < 0 or not transit_T > 0:
        raise ValueError("need n_bar >= 0, alpha >= 0 and transit_T > 0")
    return n_bar * alpha / (2.0 * transit_T)
