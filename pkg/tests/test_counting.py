from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atomdetect.analysis import MandelFitError, PhotonStream, bin_counts, mandel_alpha
from atomdetect.analysis.streamio import PS


def poisson_stream(rate, duration, rng) -> PhotonStream:
    n = rng.poisson(rate * duration)
    ts = np.sort(rng.integers(0, int(duration / PS), n)).astype(np.uint64)
    return PhotonStream(ts, duration_ps=int(duration / PS))


def compound_poisson_stream(atom_rate, alpha, duration, rng, spread=1e-6) -> PhotonStream:
    """Atoms at Poisson times, each emitting Poisson(alpha) photons within ``spread``."""
    n_atoms = rng.poisson(atom_rate * duration)
    t_atom = rng.uniform(0, duration - spread, n_atoms)
    k = rng.poisson(alpha, n_atoms)
    t = np.repeat(t_atom, k) + rng.uniform(0, spread, k.sum())
    ts = np.sort(np.round(t / PS).astype(np.uint64))
    return PhotonStream(ts, duration_ps=int(round(duration / PS)))


def test_bin_counts_empty():
    b = bin_counts(PhotonStream(np.empty(0, np.uint64), duration_ps=10**9), 1e-4)
    assert b.complete_bins == 10 and b.total == 0
    assert np.all(b.counts == 0)


def test_bin_counts_poisson_mean():
    rng = np.random.default_rng(1)
    s = poisson_stream(2e4, 10.0, rng)
    b = bin_counts(s, 1e-3)
    c = b.counts[:b.complete_bins]
    assert abs(c.mean() - 20.0) < 3 * math.sqrt(20.0 / len(c))


def test_bin_counts_left_closed():
    dt = 10**6
    s = PhotonStream(np.array([0, dt, 2 * dt, 3 * dt - 1], np.uint64), duration_ps=4 * dt)
    b = bin_counts(s, dt * PS)
    assert list(b.counts) == [1, 1, 2, 0]


@given(st.lists(st.integers(0, 10**9), max_size=200), st.integers(10**4, 10**8))
def test_bin_counts_preserves_total(ts, dt):
    s = PhotonStream(np.sort(np.array(ts, dtype=np.uint64)), duration_ps=10**9 + 1)
    assert bin_counts(s, dt * PS).total == len(ts)


def test_bin_counts_rejects_width():
    with pytest.raises(ValueError):
        bin_counts(PhotonStream(np.empty(0, np.uint64)), 0.0)


def test_mandel_poisson():
    s = poisson_stream(3.6e4, 100.0, np.random.default_rng(2))
    r = mandel_alpha(s)
    assert abs(r.alpha) < 3 * r.std_errors["alpha"] + 1e-3
    assert r.slope == pytest.approx(1.0, abs=max(3 * r.std_errors["slope"], 0.02))
    assert r.fit_range[0] == pytest.approx(1.8, rel=0.01)


def test_mandel_compound_poisson_recovers_alpha():
    rng = np.random.default_rng(3)
    alpha_true = 0.2
    s = compound_poisson_stream(1.8e5, alpha_true, 100.0, rng)
    r = mandel_alpha(s)
    assert r.alpha == pytest.approx(alpha_true, rel=0.10)
    assert r.slope == pytest.approx(1.0, abs=0.05)


def test_mandel_false_positive_rate():
    rng = np.random.default_rng(4)
    misses = 0
    for _ in range(20):
        r = mandel_alpha(poisson_stream(3.6e4, 20.0, rng), n_bootstrap=50)
        misses += abs(r.alpha) >= 3 * r.std_errors["alpha"]
    assert misses <= 1


def test_mandel_errors():
    s = poisson_stream(3.6e4, 5.0, np.random.default_rng(5))
    with pytest.raises(MandelFitError, match="at least 3"):
        mandel_alpha(s, fit_window=(100.0, 200.0))
    with pytest.raises(MandelFitError, match="degenerate"):
        mandel_alpha(s, bin_widths=[50e-6, 50e-6, 50e-6])
