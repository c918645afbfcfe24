"""Binned photon counting and the Mandel photons-per-atom extraction.

For Poissonian atom arrivals each contributing a burst of photons,
``<n^2>/<n> - 1 = g_aa <n> + alpha`` for bins much longer than a transit, so
the intercept of a line through points taken at several bin widths is the
number of detected photons per atom.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .streamio import PS, PhotonStream


class MandelFitError(ValueError):
    pass


@dataclass
class BinnedCounts:
    """Counts per bin; ``complete_bins`` excludes a trailing partial bin."""

    bin_width: float
    counts: np.ndarray
    start_time: float
    complete_bins: int

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def bin_counts(stream: PhotonStream, bin_width: float, start: float | None = None,
               duration: float | None = None) -> BinnedCounts:
    """Counts in ``[start + i dt, start + (i+1) dt)``.

    ``start`` defaults to 0 when the stream records its acquisition span and to
    the first event otherwise; the span ends at ``start + duration`` (default:
    the recorded span, else the last event).
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be > 0")
    dt = int(round(bin_width / PS))
    if dt < 1:
        raise ValueError("bin_width below 1 ps")
    ts = stream.timestamps_ps
    if start is None:
        start_ps = 0 if stream.duration_ps is not None or len(ts) == 0 else int(ts[0])
    else:
        start_ps = int(round(start / PS))
    if duration is not None:
        span = int(round(duration / PS))
    elif stream.duration_ps is not None:
        span = int(stream.duration_ps) - start_ps
    elif len(ts):
        span = int(ts[-1]) - start_ps
    else:
        span = 0
    if span < 0:
        raise ValueError("bin span is negative")
    complete = span // dt
    n_bins = -(-span // dt)
    if len(ts):
        rel = ts.astype(np.int64) - start_ps
        rel = rel[(rel >= 0) & (rel <= span)]
        idx = rel // dt
        n_bins = max(n_bins, int(idx.max()) + 1 if len(idx) else 0)
        counts = np.bincount(idx, minlength=n_bins)
    else:
        counts = np.zeros(n_bins, dtype=np.int64)
    return BinnedCounts(bin_width, counts.astype(np.int64), start_ps * PS, int(complete))


@dataclass
class MandelFitResult:
    """Weighted line ``y = alpha + slope x`` through the Mandel points."""

    alpha: float
    slope: float
    fit_range: tuple
    std_errors: dict
    covariance: np.ndarray = field(repr=False)
    bin_widths: np.ndarray = field(repr=False)
    mean_n: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    y_error: np.ndarray = field(repr=False)

    def report(self) -> dict:
        return {
            "alpha": self.alpha, "alpha_std_error": self.std_errors["alpha"],
            "slope": self.slope, "slope_std_error": self.std_errors["slope"],
            "fit_range_mean_n": [float(self.fit_range[0]), float(self.fit_range[1])],
            "n_points": int(len(self.mean_n)),
        }


def _moments_bootstrap(counts: np.ndarray, n_boot: int, block: int, rng: np.random.Generator):
    """``<n>``, ``y = <n^2>/<n> - 1`` and the block-bootstrap standard error of y."""
    n = counts.astype(np.float64)
    m1, m2 = n.mean(), (n * n).mean()
    y = m2 / m1 - 1.0 if m1 > 0 else np.nan
    n_blocks = len(n) // block
    if n_blocks < 2 or m1 == 0:
        return m1, y, np.nan
    nb = n[:n_blocks * block].reshape(n_blocks, block)
    s1, s2 = nb.sum(axis=1), (nb * nb).sum(axis=1)
    pick = rng.integers(0, n_blocks, size=(n_boot, n_blocks))
    b1, b2 = s1[pick].sum(axis=1), s2[pick].sum(axis=1)
    ok = b1 > 0
    yb = b2[ok] / b1[ok] - 1.0
    return m1, y, float(np.std(yb, ddof=1)) if len(yb) > 1 else np.nan


def mandel_points(stream: PhotonStream, bin_widths, n_bootstrap: int = 100, block_bins: int = 50,
                  seed: int = 0, duration: float | None = None):
    """``(bin_widths, <n>, y, sigma_y)`` over complete bins for each width."""
    rng = np.random.default_rng(seed)
    widths = np.asarray(bin_widths, dtype=float)
    out = []
    for w in widths:
        b = bin_counts(stream, w, duration=duration)
        counts = b.counts[:b.complete_bins]
        if len(counts) == 0:
            raise MandelFitError(f"no complete bins at width {w}")
        out.append(_moments_bootstrap(counts, n_bootstrap, block_bins, rng))
    arr = np.array(out, dtype=float).reshape(-1, 3)
    return widths, arr[:, 0], arr[:, 1], arr[:, 2]


def mandel_alpha(stream: PhotonStream, bin_widths=None, fit_window=None, n_bootstrap: int = 100,
                 block_bins: int = 50, seed: int = 0,
                 duration: float | None = None) -> MandelFitResult:
    """Photons per atom from the bin-width dependence of ``<n^2>/<n>``.

    ``fit_window`` restricts the points to ``<n>`` inside ``(lo, hi)``. Points
    are weighted by inverse bootstrap variance; correlations between points
    sharing the same data are ignored.
    """
    if bin_widths is None:
        bin_widths = np.arange(50e-6, 100e-6 + 1e-9, 5e-6)
    w, x, y, s = mandel_points(stream, bin_widths, n_bootstrap, block_bins, seed, duration)
    keep = np.isfinite(y) & np.isfinite(s) & (s > 0)
    if fit_window is not None:
        lo, hi = fit_window
        keep &= (x >= lo) & (x <= hi)
    if keep.sum() < 3:
        raise MandelFitError("need at least 3 bin widths with <n> inside the fit window")
    w, x, y, s = w[keep], x[keep], y[keep], s[keep]
    if np.ptp(x) <= 1e-12 * max(1.0, float(np.abs(x).max())):
        raise MandelFitError("degenerate <n> range: all points share the same mean")
    X = np.column_stack([np.ones_like(x), x])
    W = 1.0 / s**2
    A = X.T @ (X * W[:, None])
    cov = np.linalg.inv(A)
    coef = cov @ (X.T @ (W * y))
    err = np.sqrt(np.diag(cov))
    return MandelFitResult(
        alpha=float(coef[0]), slope=float(coef[1]), fit_range=(float(x.min()), float(x.max())),
        std_errors={"alpha": float(err[0]), "slope": float(err[1])}, covariance=cov,
        bin_widths=w, mean_n=x, y=y, y_error=s,
    )
