"""Background light and the photon-counting detector chain.

Optical background rates (MOT scatter, birefringence leakage) are quoted as
detected counts per second, so they are added after the efficiency stage and
before the splitter. Dark counts are added per detector after the splitter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..analysis.streamio import PS, EventFlag, PhotonStream
from ..physics import DriveParams


@dataclass(frozen=True)
class BackgroundParams:
    """Background rates in detected counts/s (the birefringence term per unit Y)."""

    dark_rate_per_detector: float = 300.0
    mot_scatter_rate: float = 2000.0
    birefringence_rate_per_Y: float = 2500.0

    def __post_init__(self):
        for name in ("dark_rate_per_detector", "mot_scatter_rate", "birefringence_rate_per_Y"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"background.{name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 0.23
    dead_time: float = 50e-9
    afterpulse_probability: float = 0.002
    afterpulse_delay_mean: float = 100e-9
    splitter_ratio: float = 0.5
    timestamp_quantum: float = 4e-12
    n_detectors: int = 2

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ValueError(f"detector.efficiency must lie in [0, 1], got {self.efficiency!r}")
        if not self.dead_time >= 0:
            raise ValueError("detector.dead_time must be >= 0")
        if not 0 <= self.afterpulse_probability < 0.05:
            raise ValueError("detector.afterpulse_probability must lie in [0, 0.05)")
        if not self.afterpulse_delay_mean >= 0:
            raise ValueError("detector.afterpulse_delay_mean must be >= 0")
        if not 0 <= self.splitter_ratio <= 1:
            raise ValueError("detector.splitter_ratio must lie in [0, 1]")
        if not self.timestamp_quantum > 0:
            raise ValueError("detector.timestamp_quantum must be > 0")
        q_ps = self.timestamp_quantum / PS
        if abs(q_ps - round(q_ps)) > 1e-6 or round(q_ps) < 1:
            raise ValueError("detector.timestamp_quantum must be a whole number of ps")
        if self.n_detectors not in (1, 2):
            raise ValueError("detector.n_detectors must be 1 or 2")

    @property
    def quantum_ps(self) -> int:
        return int(round(self.timestamp_quantum / PS))


@dataclass
class BackgroundEvents:
    """Background arrival times (s). ``dark`` holds one array per detector."""

    mot: np.ndarray
    birefringence: np.ndarray
    dark: tuple

    @property
    def optical(self) -> np.ndarray:
        return np.sort(np.concatenate([self.mot, self.birefringence]))


def _poisson_times(rate: float, start: float, duration: float, rng) -> np.ndarray:
    if rate <= 0:
        return np.empty(0)
    n = rng.poisson(rate * duration)
    return np.sort(rng.uniform(start, start + duration, size=n))


def generate_background(bg: BackgroundParams, drive: DriveParams, duration: float,
                        rng: np.random.Generator, n_detectors: int = 2,
                        start: float = 0.0) -> BackgroundEvents:
    """Three independent homogeneous Poisson sources over ``[start, start + duration)``."""
    if not duration > 0:
        raise ValueError("duration must be > 0")
    mot = _poisson_times(bg.mot_scatter_rate, start, duration, rng)
    bire = _poisson_times(bg.birefringence_rate_per_Y * drive.intensity_Y, start, duration, rng)
    dark = tuple(_poisson_times(bg.dark_rate_per_detector, start, duration, rng)
                 for _ in range(n_detectors))
    return BackgroundEvents(mot, bire, dark)


# ------------------------------------------------------------------
# Chain stages
# ------------------------------------------------------------------


def route(times: np.ndarray, flags: np.ndarray, det: DetectorParams,
          rng: np.random.Generator, thin: bool = True):
    """Efficiency thinning (optional) and splitter assignment.

    Returns ``(times, flags, channels)`` of the survivors.
    """
    if thin:
        keep = rng.random(len(times)) < det.efficiency
        times, flags = times[keep], flags[keep]
    if det.n_detectors == 1:
        channels = np.zeros(len(times), np.uint8)
    else:
        channels = (rng.random(len(times)) >= det.splitter_ratio).astype(np.uint8)
    return times, flags, channels


def dead_time_mask(times: np.ndarray, dead_time: float) -> np.ndarray:
    """Non-extending dead time on one sorted channel: True for accepted events."""
    n = len(times)
    keep = np.ones(n, dtype=bool)
    if n < 2 or dead_time <= 0:
        return keep
    close = np.diff(times) < dead_time
    if not close.any():
        return keep
    # only runs of closely spaced events need the sequential rule
    idx = np.flatnonzero(close)
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]]) + 1
    for a, b in zip(starts.tolist(), ends.tolist()):
        last = times[a]
        for i in range(a + 1, b + 1):
            if times[i] - last < dead_time:
                keep[i] = False
            else:
                last = times[i]
    return keep


def afterpulses(times: np.ndarray, det: DetectorParams, rng: np.random.Generator) -> np.ndarray:
    """Afterpulse times spawned by accepted events (delay = dead time + exponential)."""
    if det.afterpulse_probability <= 0 or len(times) == 0:
        return np.empty(0)
    parents = times[rng.random(len(times)) < det.afterpulse_probability]
    delay = det.dead_time + rng.exponential(det.afterpulse_delay_mean, size=len(parents))
    return parents + delay


def quantize(times: np.ndarray, quantum_ps: int) -> np.ndarray:
    """Floor to the timestamp grid, in integer picoseconds."""
    times = np.asarray(times, dtype=float)
    if len(times) and times.min() < 0:
        raise ValueError("timestamps must be >= 0")
    ticks = np.floor(times / (quantum_ps * PS))
    return ticks.astype(np.uint64) * np.uint64(quantum_ps)


def finalize_channel(times: np.ndarray, flags: np.ndarray, channel: int, det: DetectorParams,
                     rng: np.random.Generator, end: float | None = None) -> PhotonStream:
    """Quantization, dead time and afterpulsing for one detector's arrivals.

    Dead time acts on the quantized timestamps so the recorded stream obeys it
    exactly.
    """
    q = det.quantum_ps
    dead_ps = int(round(det.dead_time / PS))
    order = np.argsort(times, kind="stable")
    ts, flags = quantize(times[order], q).astype(np.int64), flags[order]
    keep = dead_time_mask(ts, dead_ps)
    ts, flags = ts[keep], flags[keep]
    ap = afterpulses(ts * PS, det, rng)
    if len(ap):
        ts = np.concatenate([ts, quantize(ap, q).astype(np.int64)])
        flags = np.concatenate([flags, np.full(len(ap), int(EventFlag.AFTERPULSE), np.uint8)])
        order = np.argsort(ts, kind="stable")
        ts, flags = ts[order], flags[order]
        keep = dead_time_mask(ts, dead_ps)
        ts, flags = ts[keep], flags[keep]
    duration_ps = None
    if end is not None:
        duration_ps = int(round(end / PS))
        inside = ts < duration_ps
        ts, flags = ts[inside], flags[inside]
    return PhotonStream(ts.astype(np.uint64), np.full(len(ts), channel, np.uint8), flags,
                        duration_ps)


def detect(emissions: np.ndarray, det: DetectorParams, rng: np.random.Generator,
           background: BackgroundEvents | None = None, end: float | None = None):
    """Run emissions (s, sorted) through the full chain.

    Returns ``(stream_ch0, stream_ch1)``; with a single detector the second
    stream is empty.
    """
    emissions = np.asarray(emissions, dtype=float)
    flags = np.full(len(emissions), int(EventFlag.SIGNAL), np.uint8)
    t, f, c = route(emissions, flags, det, rng)
    parts_t, parts_f, parts_c = [t], [f], [c]
    if background is not None:
        opt = background.optical
        bt, bf, bc = route(opt, np.full(len(opt), int(EventFlag.OPTICAL_BACKGROUND), np.uint8),
                           det, rng, thin=False)
        parts_t.append(bt)
        parts_f.append(bf)
        parts_c.append(bc)
        for ch, dark in enumerate(background.dark[:det.n_detectors]):
            parts_t.append(dark)
            parts_f.append(np.full(len(dark), int(EventFlag.DARK), np.uint8))
            parts_c.append(np.full(len(dark), ch, np.uint8))
    t = np.concatenate(parts_t)
    f = np.concatenate(parts_f)
    c = np.concatenate(parts_c)
    out = [finalize_channel(t[c == ch], f[c == ch], ch, det, rng, end) for ch in range(2)]
    return out[0], out[1]
