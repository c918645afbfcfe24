"""End-to-end simulation: beam, emission, background, detectors.

Randomness: the run is cut into time chunks. Chunk ``c`` draws everything it
needs (transits, emissions, routing, background) from
``SeedSequence(seed, spawn_key=(1, c))``; the per-detector stages that must
see the whole record (dead time, afterpulsing) use ``spawn_key=(2, channel)``.
Output therefore does not depend on how chunks are distributed over workers.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..analysis.streamio import EventFlag
from .beam import sample_transits
from .calibration import ExpectedObservables, calibrate_peak_rate, expected_observables
from .detector import finalize_channel, generate_background, route
from .emission import EmissionContext, emit_photons

_CHUNK_TAG = 1
_DETECTOR_TAG = 2


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass
class GroundTruth:
    """What the simulator actually did, for closed-loop checks.

    ``sum_k`` and ``sum_k_k1`` are sums of K and K(K-1) over atoms, K being the
    photons an atom emitted; ``alpha_realized = efficiency * sum_k_k1 / sum_k``.
    """

    seed: int
    duration: float
    drive_Y: float
    peak_rate: float
    n_transits: int = 0
    sum_k: int = 0
    sum_k_k1: int = 0
    emitted_in_window: int = 0
    detected: dict = field(default_factory=dict)
    expected: ExpectedObservables | None = None
    config: dict = field(default_factory=dict)
    transits: dict | None = None

    @property
    def alpha_realized(self) -> float:
        eff = self.config.get("detector", {}).get("efficiency", 0.0)
        return float(eff) * self.sum_k_k1 / self.sum_k if self.sum_k else 0.0

    @property
    def signal_rate_detected(self) -> float:
        """Detected signal events per second, all channels."""
        n = sum(v.get("signal", 0) for v in self.detected.values())
        return n / self.duration

    def background_rate_detected(self) -> float:
        n = sum(v.get("optical_background", 0) + v.get("dark", 0) + v.get("afterpulse", 0)
                for v in self.detected.values())
        return n / self.duration

    def to_dict(self) -> dict:
        out = {
            "config": self.config,
            "summary": {
                "seed": int(self.seed),
                "duration_s": float(self.duration),
                "drive_Y": float(self.drive_Y),
                "peak_rate_per_s": float(self.peak_rate),
                "n_transits": int(self.n_transits),
                "sum_k": int(self.sum_k),
                "sum_k_k1": int(self.sum_k_k1),
                "emitted_in_window": int(self.emitted_in_window),
                "alpha_realized": float(self.alpha_realized),
                "detected": {k: {kk: int(vv) for kk, vv in v.items()}
                             for k, v in self.detected.items()},
            },
        }
        if self.expected is not None:
            out["expected"] = {k: float(v) for k, v in dataclasses.asdict(self.expected).items()}
        return out

    def dump(self, path) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        if self.transits is not None:
            np.savez_compressed(path.with_suffix(".transits.npz"), **self.transits)
        return path

    @classmethod
    def load(cls, path) -> "GroundTruth":
        data = yaml.safe_load(Path(path).read_text())
        s = data["summary"]
        exp = data.get("expected")
        return cls(seed=s["seed"], duration=s["duration_s"], drive_Y=s["drive_Y"],
                   peak_rate=s["peak_rate_per_s"], n_transits=s["n_transits"],
                   sum_k=s["sum_k"], sum_k_k1=s["sum_k_k1"],
                   emitted_in_window=s["emitted_in_window"], detected=s["detected"],
                   expected=ExpectedObservables(**exp) if exp else None,
                   config=data["config"])


@dataclass(frozen=True)
class _Plan:
    config: object
    seed: int
    peak_rate: float
    pre_roll: float
    n_chunks: int


def _chunk_bounds(plan: _Plan, c: int):
    dur = plan.config.run.duration
    step = plan.config.run.chunk_duration
    lo = -plan.pre_roll if c == 0 else c * step
    hi = min((c + 1) * step, dur)
    return lo, hi


def _simulate_chunk(plan: _Plan, c: int):
    cfg = plan.config
    rng = _rng(plan.seed, _CHUNK_TAG, c)
    lo, hi = _chunk_bounds(plan, c)
    dur = cfg.run.duration
    batch = sample_transits(cfg.beam, hi - lo, rng, cfg.cavity, start=lo)
    ctx = EmissionContext(cfg.cavity, cfg.atom, cfg.drive.intensity_Y, plan.peak_rate,
                          cfg.beam.polarization, cfg.emission.antibunching)
    times, owner = emit_photons(batch, ctx, rng)
    k = np.bincount(owner, minlength=len(batch))
    inside = (times >= 0.0) & (times < dur)
    sig = np.sort(times[inside])
    t, f, ch = route(sig, np.full(len(sig), int(EventFlag.SIGNAL), np.uint8), cfg.detector, rng)
    parts = [(t, f, ch)]
    b_lo = max(lo, 0.0)
    if hi > b_lo:
        bg = generate_background(cfg.background, cfg.drive, hi - b_lo, rng,
                                 cfg.detector.n_detectors, start=b_lo)
        opt = bg.optical
        parts.append(route(opt, np.full(len(opt), int(EventFlag.OPTICAL_BACKGROUND), np.uint8),
                           cfg.detector, rng, thin=False))
        for d, dark in enumerate(bg.dark):
            parts.append((dark, np.full(len(dark), int(EventFlag.DARK), np.uint8),
                          np.full(len(dark), d, np.uint8)))
    t = np.concatenate([p[0] for p in parts])
    f = np.concatenate([p[1] for p in parts])
    ch = np.concatenate([p[2] for p in parts])
    stats = {"n": len(batch), "k": int(k.sum()), "kk1": int(np.sum(k * (k - 1))),
             "in_window": int(inside.sum())}
    record = None
    if cfg.run.record_transits:
        record = {"entry_time": batch.entry_time, "velocity": batch.velocity,
                  "impact_offset": batch.impact_offset, "ground_state_m": batch.ground_state_m,
                  "emissions": k}
    return t, f, ch, stats, record


def resolve_peak_rate(config) -> float:
    """Configured peak rate, or the one calibrated to the target alpha."""
    if config.emission.peak_rate is not None:
        return float(config.emission.peak_rate)
    return calibrate_peak_rate(config.emission.alpha, config.emission.calibration_Y,
                               config.cavity, config.atom, config.beam,
                               config.detector.efficiency, config.emission.antibunching)


def run_simulation(config, seed: int | None = None, workers: int = 1):
    """Simulate ``config.run.duration`` seconds.

    Returns ``(stream_ch0, stream_ch1, ground_truth)``. With a single detector
    the second stream is empty. Output is identical for any ``workers``.
    """
    seed = config.run.seed if seed is None else int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    peak = resolve_peak_rate(config)
    beam = config.beam
    floor = max(beam.mean_speed - 6.0 * beam.speed_sigma, 0.1 * beam.mean_speed)
    pre_roll = beam.max_crossing_time(config.cavity, floor)
    n_chunks = int(math.ceil(config.run.duration / config.run.chunk_duration - 1e-12))
    plan = _Plan(config, seed, peak, pre_roll, n_chunks)

    if workers > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_chunk, [plan] * n_chunks, range(n_chunks)))
    else:
        results = [_simulate_chunk(plan, c) for c in range(n_chunks)]

    t = np.concatenate([r[0] for r in results])
    f = np.concatenate([r[1] for r in results])
    ch = np.concatenate([r[2] for r in results])
    streams = []
    for d in range(2):
        sel = ch == d
        streams.append(finalize_channel(t[sel], f[sel], d, config.detector,
                                        _rng(seed, _DETECTOR_TAG, d), end=config.run.duration))

    detected = {}
    for d, s in enumerate(streams[:config.detector.n_detectors]):
        fl = s.flags
        detected[f"channel{d}"] = {
            "signal": int(np.sum(fl == EventFlag.SIGNAL)),
            "optical_background": int(np.sum(fl == EventFlag.OPTICAL_BACKGROUND)),
            "dark": int(np.sum(fl == EventFlag.DARK)),
            "afterpulse": int(np.sum(fl == EventFlag.AFTERPULSE)),
        }
    expected = None
    if config.drive.intensity_Y > 0 and beam.flux > 0:
        expected = expected_observables(peak, config.drive.intensity_Y, config.cavity,
                                        config.atom, beam, config.detector.efficiency,
                                        config.emission.antibunching)
    transits = None
    if config.run.record_transits:
        recs = [r[4] for r in results]
        transits = {k: np.concatenate([r[k] for r in recs]) for k in recs[0]}
    truth = GroundTruth(
        seed=seed, duration=config.run.duration, drive_Y=config.drive.intensity_Y,
        peak_rate=peak,
        n_transits=sum(r[3]["n"] for r in results),
        sum_k=sum(r[3]["k"] for r in results),
        sum_k_k1=sum(r[3]["kk1"] for r in results),
        emitted_in_window=sum(r[3]["in_window"] for r in results),
        detected=detected, expected=expected, config=config.to_dict(), transits=transits,
    )
    return streams[0], streams[1], truth
