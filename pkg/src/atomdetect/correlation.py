"""Two-channel intensity correlation: histogram construction and model fitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.optimize import curve_fit, least_squares

from .analysis.streamio import PS, PhotonStream
from .physics import (TWO_PI, CavityParams, G2ModelParams, g2_atom, g2_model,
                      saturated_collection_volume)

CORRELOGRAM_HEADER = ("tau_s", "g2", "g2_error", "raw_count")


class DegenerateFitError(ValueError):
    """The correlogram carries no detectable correlation amplitude."""


class FitConvergenceError(RuntimeError):
    """The fitter stopped without converging; ``last`` holds the final iterate."""

    def __init__(self, message: str, last: dict):
        super().__init__(message)
        self.last = last


# ------------------------------------------------------------------
# Correlogram
# ------------------------------------------------------------------


@dataclass
class Correlogram:
    """Normalized cross-correlation histogram.

    Bin ``k >= 0`` holds lags in ``[k dt, (k+1) dt)`` and bin ``-k-1`` the
    mirror interval ``(-(k+1) dt, -k dt]``, so swapping the channels mirrors
    the histogram exactly; a zero lag lands in bin 0.
    """

    bin_width: float
    max_lag: float
    tau: np.ndarray
    raw_counts: np.ndarray
    normalization: float
    duration: float
    n0: int
    n1: int
    g2: np.ndarray = field(init=False)
    errors: np.ndarray = field(init=False)

    def __post_init__(self):
        self.raw_counts = np.asarray(self.raw_counts, dtype=np.int64)
        self.tau = np.asarray(self.tau, dtype=float)
        self.g2 = self.raw_counts / self.normalization
        self.errors = np.sqrt(np.maximum(self.raw_counts, 1)) / self.normalization

    @property
    def n_bins(self) -> int:
        return len(self.raw_counts)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CORRELOGRAM_HEADER)
            for row in zip(self.tau, self.g2, self.errors, self.raw_counts):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])),
                            int(row[3])])
        return path

    @classmethod
    def from_csv(cls, path) -> "Correlogram":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != CORRELOGRAM_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CORRELOGRAM_HEADER)}")
        arr = np.array(rows[1:], dtype=float)
        tau, g2, raw = arr[:, 0], arr[:, 1], arr[:, 3].astype(np.int64)
        bin_width = float(np.median(np.diff(tau)))
        nz = raw > 0
        norm = float(np.median(raw[nz] / g2[nz])) if nz.any() else 1.0
        return cls(bin_width, len(tau) * bin_width / 2.0, tau, raw, norm, float("nan"), 0, 0)


def _lag_bins(d: np.ndarray, dt: int) -> np.ndarray:
    pos = d >= 0
    return np.where(pos, d // dt, -((-d) // dt) - 1)


def cross_correlogram(stream0: PhotonStream, stream1: PhotonStream, bin_width: float = 10e-9,
                      max_lag: float = 10e-6, duration: float | None = None,
                      chunk: int = 1 << 20) -> Correlogram:
    """All-pairs histogram of ``t1 - t0`` within ``+-max_lag``.

    Normalized by ``R0 R1 dt D = N0 N1 dt / D`` with ``D`` the acquisition
    span (``duration`` if given, else the streams' recorded or observed span).
    """
    if len(stream0) == 0 or len(stream1) == 0:
        raise ValueError("cannot correlate an empty stream (no normalization)")
    if not bin_width > 0 or not max_lag >= bin_width:
        raise ValueError("need bin_width > 0 and max_lag >= bin_width")
    dt = int(round(bin_width / PS))
    n_side = int(round(max_lag / bin_width))
    t0 = stream0.timestamps_ps.astype(np.int64)
    t1 = stream1.timestamps_ps.astype(np.int64)
    lag = n_side * dt
    hist = np.zeros(2 * n_side, dtype=np.int64)
    for a in range(0, len(t0), chunk):
        part = t0[a:a + chunk]
        lo = np.searchsorted(t1, part - lag, side="left")
        hi = np.searchsorted(t1, part + lag, side="right")
        cnt = hi - lo
        total = int(cnt.sum())
        if total == 0:
            continue
        src = np.repeat(np.arange(len(part)), cnt)
        offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        d = t1[lo[src] + offs] - part[src]
        k = _lag_bins(d, dt)
        ok = (k >= -n_side) & (k < n_side)
        hist += np.bincount(k[ok] + n_side, minlength=2 * n_side)
    if duration is None:
        spans = [s.duration_ps for s in (stream0, stream1) if s.duration_ps is not None]
        if spans:
            duration = max(spans) * PS
        else:
            lo_t = min(t0[0], t1[0])
            hi_t = max(t0[-1], t1[-1])
            duration = (hi_t - lo_t) * PS
    if not duration > 0:
        raise ValueError("stream span is zero; pass duration explicitly")
    norm = len(t0) * len(t1) * bin_width / duration
    tau = (np.arange(-n_side, n_side) + 0.5) * bin_width
    return Correlogram(bin_width, n_side * bin_width, tau, hist, norm, duration,
                       len(t0), len(t1))


# ------------------------------------------------------------------
# Fitting
# ------------------------------------------------------------------


@dataclass(frozen=True)
class FixedParams:
    bg_to_signal: float = 0.0
    drive_Y: float = 0.24
    gamma_total: float = TWO_PI * 6.0e6


_FREE = ("n_bar", "transit_T", "damping_beta", "standing_wave_Omega")
# internal units: microseconds and inverse microseconds keep the problem well scaled
_SCALE = np.array([1.0, 1e-6, 1e6, 1e6])


@dataclass
class G2FitResult:
    params: G2ModelParams
    covariance: np.ndarray
    reduced_chi2: float
    chi2: float
    dof: int
    excluded_region: float
    fit_span: float
    fixed: FixedParams
    nfev: int = 0
    initial: dict = field(default_factory=dict)

    @property
    def std_errors(self) -> dict:
        err = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return dict(zip(_FREE, err))

    @property
    def Omega_over_2pi(self) -> float:
        return self.params.standing_wave_Omega / TWO_PI

    @property
    def damping_time(self) -> float:
        return 1.0 / self.params.damping_beta if self.params.damping_beta > 0 else math.inf

    def report(self) -> dict:
        err = self.std_errors
        p = self.params
        return {
            "parameters": {
                "n_bar": {"estimate": p.n_bar, "std_error": float(err["n_bar"])},
                "transit_T_s": {"estimate": p.transit_T, "std_error": float(err["transit_T"])},
                "damping_beta_per_s": {"estimate": p.damping_beta,
                                       "std_error": float(err["damping_beta"])},
                "Omega_over_2pi_Hz": {
                    "estimate": p.standing_wave_Omega / TWO_PI,
                    "std_error": float(err["standing_wave_Omega"]) / TWO_PI},
            },
            "fixed": {"bg_to_signal": self.fixed.bg_to_signal, "drive_Y": self.fixed.drive_Y,
                      "gamma_total_per_s": self.fixed.gamma_total},
            "reduced_chi2": self.reduced_chi2,
            "dof": self.dof,
            "excluded_region_s": self.excluded_region,
            "fit_span_s": self.fit_span,
        }

    def write_report(self, path) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(_plain(self.report()), sort_keys=False))
        return path


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _model_and_jacobian(x, tau, fixed: FixedParams, gA):
    """Model and d model / d x in internal units, ``x = (N, T_us, beta_per_us, Omega_per_us)``."""
    n, T, beta, om = x
    t = np.abs(tau) * 1e6
    dil = 1.0 / (1.0 + fixed.bg_to_signal) ** 2
    env = np.exp(-(t / T) ** 2)
    damp = np.exp(-beta * t)
    c, s = np.cos(om * t), np.sin(om * t)
    A = dil * gA * env / n
    h = c * damp + 1.0
    excess = A * h
    J = np.empty((len(t), 4))
    J[:, 0] = -excess / n
    J[:, 1] = excess * 2.0 * t * t / T**3
    J[:, 2] = -A * c * t * damp
    J[:, 3] = -A * s * t * damp
    return 1.0 + excess, J


def _select(corr: Correlogram, exclusion: float, fit_span: float):
    a = np.abs(corr.tau)
    return (a > exclusion) & (a <= fit_span)


def chi2_and_gradient(x, corr: Correlogram, fixed: FixedParams, exclusion: float = 50e-9,
                      fit_span: float = 5e-6):
    """Objective and its analytic gradient in SI parameters (N, T, beta, Omega)."""
    sel = _select(corr, exclusion, fit_span)
    tau, y, sig = corr.tau[sel], corr.g2[sel], corr.errors[sel]
    gA = g2_atom(tau, fixed.drive_Y, fixed.gamma_total)
    xi = np.asarray(x, dtype=float) / _SCALE
    m, J = _model_and_jacobian(xi, tau, fixed, gA)
    r = (y - m) / sig
    grad = -2.0 * (J / sig[:, None]).T @ r
    return float(r @ r), grad / _SCALE


def _initial_guess(tau, y, sig, fixed: FixedParams, exclusion: float, fit_span: float):
    a = np.abs(tau)
    order = np.argsort(a, kind="stable")
    a, y, sig = a[order], y[order], sig[order]
    # fold +-tau into |tau| bins
    ua, inv = np.unique(np.round(a / 1e-12).astype(np.int64), return_inverse=True)
    wts = 1.0 / sig**2
    yf = np.bincount(inv, weights=y * wts) / np.bincount(inv, weights=wts)
    sf = 1.0 / np.sqrt(np.bincount(inv, weights=wts))
    af = ua * 1e-12
    dil = 1.0 / (1.0 + fixed.bg_to_signal) ** 2

    excess = yf - 1.0
    near = af <= min(fit_span, exclusion + 1e-6)
    amp = np.sum(excess[near] / sf[near] ** 2) / np.sum(1.0 / sf[near] ** 2)
    amp_err = 1.0 / math.sqrt(np.sum(1.0 / sf[near] ** 2))
    if not amp > 3.0 * amp_err:
        raise DegenerateFitError("correlation amplitude consistent with zero (flat data)")

    step = float(np.median(np.diff(af))) if len(af) > 1 else 1e-8
    width = min(max(1, int(round(0.5e-6 / step))), len(excess))
    smooth = np.convolve(excess, np.ones(width) / width, mode="same")
    peak = float(excess[:max(3, len(excess) // 200)].mean())
    n0 = 2.0 * dil * g2_atom(af[0], fixed.drive_Y, fixed.gamma_total) / max(peak, amp, 1e-12)

    ped = float(np.max(smooth[width // 2:])) if len(smooth) > width else float(smooth.max())
    below = np.flatnonzero((smooth < ped / math.e) & (af > af[0] + step * width / 2))
    T0 = float(af[below[0]]) if len(below) else fit_span / 2.0

    resid = excess - smooth
    win = af <= min(fit_span, 3.0 * T0)
    freqs = np.arange(0.1e6, 10.0e6 + 1.0, 0.05e6)
    ph = TWO_PI * freqs[:, None] * af[None, win]
    rw = resid[win] / sf[win] ** 2
    power = (np.cos(ph) @ rw) ** 2 + (np.sin(ph) @ rw) ** 2
    # local maxima by decreasing power; the first is the spectral peak
    inner = np.flatnonzero((power[1:-1] >= power[:-2]) & (power[1:-1] >= power[2:])) + 1
    peaks = [int(i) for i in inner[np.argsort(-power[inner])]]
    best = int(np.argmax(power))
    omegas = [TWO_PI * float(freqs[i]) for i in [best] + [i for i in peaks if i != best]]
    return np.array([n0, T0, 1.0 / T0, omegas[0]]), omegas


def fit_g2(corr: Correlogram, fixed: FixedParams | dict | None = None, exclusion: float = 50e-9,
           fit_span: float = 5e-6, max_iterations: int = 200,
           initial: dict | None = None, n_starts: int = 3) -> G2FitResult:
    """Least-squares fit of the transit-windowed antibunching model.

    Free parameters are N-bar, T, beta and Omega; bins with
    ``exclusion < |tau| <= fit_span`` enter with Poisson weights. The
    trust-region solver uses the analytic Jacobian and is restarted from the
    ``n_starts`` strongest oscillation frequencies of the initial residual;
    the covariance is ``(J^T J)^-1`` at the optimum.
    """
    if fixed is None:
        fixed = FixedParams()
    elif isinstance(fixed, dict):
        fixed = FixedParams(**fixed)
    sel = _select(corr, exclusion, fit_span)
    if sel.sum() < 50:
        raise ValueError("fewer than 50 bins inside the fit span after exclusion")
    tau, y, sig = corr.tau[sel], corr.g2[sel], corr.errors[sel]
    gA = g2_atom(tau, fixed.drive_Y, fixed.gamma_total)

    if initial is None:
        x0, omegas = _initial_guess(tau, y, sig, fixed, exclusion, fit_span)
    else:
        x0 = np.array([initial[k] for k in _FREE], dtype=float)
        omegas = [x0[3]]
    init = dict(zip(_FREE, map(float, x0)))

    def resid(x):
        m, _ = _model_and_jacobian(x, tau, fixed, gA)
        return (y - m) / sig

    def jac(x):
        _, J = _model_and_jacobian(x, tau, fixed, gA)
        return -J / sig[:, None]

    lower = np.array([1e-6, 1e-3, 0.0, 0.0])
    sol = None
    # a slow oscillation can mimic the transit envelope; restart from the
    # strongest spectral peaks and keep the best optimum
    for om in omegas[:n_starts]:
        start = np.clip(np.array([x0[0], x0[1], x0[2], om]) / _SCALE, lower + 1e-9, np.inf)
        trial = least_squares(resid, start, jac=jac, bounds=(lower, np.inf), method="trf",
                              x_scale="jac", max_nfev=max_iterations, xtol=1e-10, ftol=1e-10)
        if sol is None or (trial.status > 0 and (sol.status <= 0 or trial.cost < sol.cost)):
            sol = trial
    last = dict(zip(_FREE, map(float, sol.x * _SCALE)))
    if sol.status <= 0:
        raise FitConvergenceError(f"g2 fit did not converge: {sol.message}", last)
    J = sol.jac
    try:
        cov_i = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise FitConvergenceError("singular Jacobian at the optimum", last) from exc
    cov = cov_i * np.outer(_SCALE, _SCALE)
    chi2 = float(2.0 * sol.cost)
    dof = int(len(tau) - 4)
    x = sol.x * _SCALE
    params = G2ModelParams(n_bar=float(x[0]), transit_T=float(x[1]),
                           standing_wave_Omega=float(x[3]), damping_beta=float(x[2]),
                           bg_to_signal=fixed.bg_to_signal, drive_Y=fixed.drive_Y,
                           gamma_total=fixed.gamma_total)
    return G2FitResult(params, cov, chi2 / dof, chi2, dof, exclusion, fit_span, fixed,
                       int(sol.nfev), init)


def synthetic_correlogram(params: G2ModelParams, rng: np.random.Generator,
                          expected_per_bin: float, bin_width: float = 10e-9,
                          max_lag: float = 10e-6) -> Correlogram:
    """Poisson-sampled correlogram whose mean follows :func:`g2_model`."""
    n_side = int(round(max_lag / bin_width))
    tau = (np.arange(-n_side, n_side) + 0.5) * bin_width
    raw = rng.poisson(expected_per_bin * g2_model(tau, params))
    return Correlogram(bin_width, n_side * bin_width, tau, raw, expected_per_bin, float("nan"),
                       0, 0)


# ------------------------------------------------------------------
# Atom number versus drive
# ------------------------------------------------------------------


@dataclass
class SaturationFit:
    """``N(Y) = scale * V(Y / n0_rel) / V_ref`` with V the saturation-weighted volume.

    ``n0_rel`` is the fitted saturation photon number in units of the nominal
    one (Y is already normalized to it); ``V_ref`` is the volume at Y = 1.
    """

    drive_Y: np.ndarray
    n_bar: np.ndarray
    scale: float
    n0_rel: float
    covariance: np.ndarray
    cavity: CavityParams

    def model(self, Y):
        return self.scale * _relative_volume(np.asarray(Y, dtype=float) / self.n0_rel,
                                             self.cavity)

    def table(self, n_points: int = 100):
        """Measured points and a dense model overlay."""
        Y = np.geomspace(max(min(self.drive_Y) / 2, 1e-4), max(self.drive_Y) * 2, n_points)
        return {"measured": np.column_stack([self.drive_Y, self.n_bar]),
                "model": np.column_stack([Y, self.model(Y)])}


def _relative_volume(s, cavity: CavityParams):
    ref = saturated_collection_volume(1.0, cavity)
    return saturated_collection_volume(np.atleast_1d(s), cavity) / ref


def atom_number_vs_drive(drive_Y, n_bar, n_bar_err=None,
                         cavity: CavityParams | None = None) -> SaturationFit:
    """Fit vertical scale and saturation number of the volume model to N-bar(Y)."""
    Y = np.asarray(drive_Y, dtype=float)
    N = np.asarray(n_bar, dtype=float)
    if len(Y) < 3:
        raise ValueError("need at least 3 drive settings")
    if np.any(Y <= 0):
        raise ValueError("drive settings must be > 0")
    cavity = cavity or CavityParams()
    sigma = None if n_bar_err is None else np.asarray(n_bar_err, dtype=float)

    def f(y, scale, n0_rel):
        return scale * _relative_volume(y / n0_rel, cavity)

    p0 = [float(np.max(N)) / float(_relative_volume(np.max(Y), cavity)[0]), 1.0]
    popt, pcov = curve_fit(f, Y, N, p0=p0, sigma=sigma, absolute_sigma=sigma is not None,
                           bounds=([0.0, 1e-4], [np.inf, 1e4]))
    return SaturationFit(Y, N, float(popt[0]), float(popt[1]), pcov, cavity)
