"""Acceptance criteria, one test each, at the stated tolerances.

The long simulations are session fixtures shared between criteria (see
conftest.py); a PASS/FAIL line per criterion is printed in the terminal summary.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from atomdetect.analysis import (coincidence_fidelity, mandel_alpha, predicted_rate)
from atomdetect.analysis.streamio import PS, PhotonStream
from atomdetect.correlation import (FixedParams, chi2_and_gradient, cross_correlogram, fit_g2)
from atomdetect.config import ExperimentConfig
from atomdetect.physics import (AtomParams, CavityParams, CouplingSet, DriveParams,
                                G2ModelParams, derived_transition_params,
                                effective_atom_number_mc, g2_atom, g2_model,
                                steady_state_photons, transition_table)
from atomdetect.simulator import run_simulation

from .conftest import ACCEPTANCE


def record(n: int, checks: dict, detail: str):
    """Store and print the verdict, then assert every named check."""
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    ACCEPTANCE[n] = (ok, detail + ("" if ok else f"  [failed: {', '.join(failed)}]"))
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"criterion {n} failed: {failed}; {detail}"


def two_sig(x: float) -> float:
    return float(f"{x:.2g}")


# ------------------------------------------------------------------
# Shared analysis of the weak-drive closed loop
# ------------------------------------------------------------------


@pytest.fixture(scope="session")
def closed_loop_fit(closed_loop_run):
    run = closed_loop_run
    D = run.duration
    r_bg = len(run.background) / D
    r_sig = len(run.merged) / D - r_bg
    corr = cross_correlogram(run.s0, run.s1)
    fit = fit_g2(corr, FixedParams(bg_to_signal=r_bg / r_sig, drive_Y=0.24))
    return corr, fit, r_sig, r_bg


# ------------------------------------------------------------------
# Criteria
# ------------------------------------------------------------------


def test_criterion_1_transition_table():
    cavity, atom = CavityParams(), AtomParams()
    t0 = time.perf_counter()
    rows = []
    for e in transition_table():
        C1, n0 = derived_transition_params(2 * math.pi * e.g0_over_2pi, cavity, atom)
        rows.append((e, C1, n0))
    elapsed = time.perf_counter() - t0
    mismatches = [f"g0/2pi={e.g0_over_2pi / 1e6:.2f}MHz: C1 {two_sig(C1)} vs {e.C1}"
                  for e, C1, _ in rows if two_sig(C1) != e.C1]
    mismatches += [f"g0/2pi={e.g0_over_2pi / 1e6:.2f}MHz: n0 {two_sig(n0)} vs {e.n0}"
                   for e, _, n0 in rows if two_sig(n0) != e.n0]
    detail = (f"{10 - len(mismatches)}/10 values agree to 2 s.f., runtime {elapsed * 1e3:.1f} ms"
              + (f"; mismatches: {'; '.join(mismatches)}" if mismatches else ""))
    record(1, {"all 10 values to 2 s.f.": not mismatches, "runtime < 1 s": elapsed < 1.0},
           detail)


def test_criterion_2_effective_atom_number():
    cavity = CavityParams()
    mc = effective_atom_number_mc(0.88, cavity, np.random.default_rng(2024),
                                  n_configurations=1_000_000)
    x_par, _ = steady_state_photons(DriveParams(1.0), CouplingSet(0.09, n_atoms=0.04))
    detail = (f"<N_eff> = {mc.mean:.4f} +- {mc.std_error:.4f} (1e6 configurations), "
              f"X_par/Y = {x_par:.4f}")
    record(2, {"N_eff within 25% of 0.04": abs(mc.mean / 0.04 - 1) <= 0.25,
               "transmission 0.99 +- 0.005": abs(x_par - 0.99) <= 0.005}, detail)


def test_criterion_3_closed_loop_fit(closed_loop_run, closed_loop_fit):
    _, fit, _, _ = closed_loop_fit
    truth = closed_loop_run.truth.expected
    p = fit.params
    damping = 1.0 / p.damping_beta
    detail = (f"N={p.n_bar:.3f} (truth {truth.n_bar:.3f}), T={p.transit_T * 1e6:.3f} us, "
              f"Omega/2pi={fit.Omega_over_2pi / 1e6:.3f} MHz, 1/beta={damping * 1e6:.3f} us, "
              f"chi2_red={fit.reduced_chi2:.3f}")
    record(3, {
        "N within 15%": abs(p.n_bar / truth.n_bar - 1) <= 0.15,
        "T = 2.7 us +- 10%": abs(p.transit_T / 2.7e-6 - 1) <= 0.10,
        "Omega/2pi = 1.5 MHz +- 5%": abs(fit.Omega_over_2pi / 1.5e6 - 1) <= 0.05,
        "1/beta = 0.29 us +- 20%": abs(damping / 0.29e-6 - 1) <= 0.20,
        "reduced chi2 in [0.8, 1.3]": 0.8 <= fit.reduced_chi2 <= 1.3,
    }, detail)


def test_criterion_4_antibunching(closed_loop_fit):
    corr, fit, _, _ = closed_loop_fit
    zero = int(np.flatnonzero((corr.tau > 0) & (corr.tau < corr.bin_width))[0])
    at500 = int(np.argmin(np.abs(corr.tau - 500e-9)))
    diff = corr.g2[at500] - corr.g2[zero]
    sigma = math.hypot(corr.errors[at500], corr.errors[zero])
    inner = np.abs(corr.tau) < 100e-9
    model = g2_model(corr.tau[inner], fit.params)
    chi2 = float(np.sum(((corr.g2[inner] - model) / corr.errors[inner]) ** 2))
    dof = int(inner.sum())
    detail = (f"g2(0 bin)={corr.g2[zero]:.3f}, g2(500 ns)={corr.g2[at500]:.3f}, "
              f"separation {diff / sigma:.1f} sigma; inner 100 ns chi2/dof={chi2 / dof:.2f} "
              f"({dof} bins)")
    record(4, {"g2(0) < g2(500 ns) at >= 5 sigma": diff >= 5 * sigma,
               "inner 100 ns chi2/dof < 2": chi2 / dof < 2}, detail)


def test_criterion_5_mandel_alpha(faraday_run):
    res = mandel_alpha(faraday_run.merged, duration=faraday_run.duration)
    detail = (f"alpha={res.alpha:.4f} +- {res.std_errors['alpha']:.4f} "
              f"(simulated detected photons/atom {faraday_run.truth.alpha_realized:.4f}), "
              f"slope={res.slope:.4f}")
    record(5, {"alpha = 0.196 +- 15%": abs(res.alpha / 0.196 - 1) <= 0.15,
               "slope = 1.0 +- 0.05": abs(res.slope - 1.0) <= 0.05}, detail)


def test_criterion_6_rate_closure(closed_loop_run, closed_loop_fit):
    _, fit, r_sig, _ = closed_loop_fit
    mandel = mandel_alpha(closed_loop_run.merged, duration=closed_loop_run.duration)
    pred = predicted_rate(fit.params.n_bar, mandel.alpha, fit.params.transit_T)
    detail = (f"measured R_s={r_sig:.0f}/s, N alpha/2T={pred:.0f}/s "
              f"(N={fit.params.n_bar:.3f}, alpha={mandel.alpha:.4f}, "
              f"T={fit.params.transit_T * 1e6:.3f} us), ratio {pred / r_sig:.3f}")
    record(6, {"prediction within 10%": abs(pred / r_sig - 1) <= 0.10}, detail)


GATES = [0.1e-6, 0.2e-6, 0.5e-6, 1e-6, 2e-6, 5e-6, 10e-6, 20e-6]


def test_criterion_7_fidelity(faraday_run, spontaneous_run, background_y04):
    _, _, bg = background_y04
    far = [coincidence_fidelity(faraday_run.merged, bg, g).fidelity for g in GATES]
    spo = coincidence_fidelity(spontaneous_run.merged, bg, 1e-6).fidelity
    best = GATES[int(np.argmax(far))]
    f1 = far[GATES.index(1e-6)]
    detail = (f"Faraday F(1 us)={f1:.4f}, spontaneous F(1 us)={spo:.4f}, Faraday optimum at "
              f"{best * 1e6:g} us; F(gate)=" + ", ".join(f"{g * 1e6:g}us:{f:.4f}"
                                                       for g, f in zip(GATES, far)))
    record(7, {"Faraday F(1 us) >= 0.99": f1 >= 0.99,
               "spontaneous F(1 us) <= 0.98": spo <= 0.98,
               "optimum gate in 1-5 us": 1e-6 <= best <= 5e-6}, detail)


def _poisson_stream(rate: float, duration: float, channel: int, rng) -> PhotonStream:
    n = rng.poisson(rate * duration)
    ts = np.sort(rng.integers(0, int(duration / PS), size=n)).astype(np.uint64)
    return PhotonStream(ts, np.full(n, channel, np.uint8), np.zeros(n, np.uint8),
                        int(duration / PS))


def test_criterion_8_properties():
    rng = np.random.default_rng(8)
    checks = {}

    # brute-force pair counting on <= 1e4 events
    a = _poisson_stream(4000.0, 1.0, 0, rng)
    b = _poisson_stream(4000.0, 1.0, 1, rng)
    corr = cross_correlogram(a, b, bin_width=10e-9, max_lag=2e-6)
    d = b.timestamps_ps.astype(np.int64)[None, :] - a.timestamps_ps.astype(np.int64)[:, None]
    dt = 10_000
    k = np.where(d >= 0, d // dt, -((-d) // dt) - 1)
    n_side = corr.n_bins // 2
    k = k[(k >= -n_side) & (k < n_side)]
    brute = np.bincount(k + n_side, minlength=corr.n_bins)
    checks["brute-force pair count"] = bool(np.array_equal(brute, corr.raw_counts))

    # flat g2 for independent Poisson streams
    a = _poisson_stream(20000.0, 20.0, 0, rng)
    b = _poisson_stream(20000.0, 20.0, 1, rng)
    flat = cross_correlogram(a, b)
    pull = (flat.g2 - 1.0) / flat.errors
    mean_pull = float(np.mean(flat.g2) - 1.0) / float(np.sqrt(np.mean(flat.errors**2) / flat.n_bins))
    checks["flat g2 within 3 sigma"] = abs(mean_pull) < 3 and float(np.mean(np.abs(pull) > 3)) < 0.01

    # determinism under reseeding and parallelism
    cfg = ExperimentConfig().replace(**{"run.duration": 2.0, "run.chunk_duration": 0.5})
    r1 = run_simulation(cfg, seed=5, workers=1)
    r2 = run_simulation(cfg, seed=5, workers=2)
    r3 = run_simulation(cfg, seed=6, workers=1)
    checks["deterministic across workers"] = r1[0] == r2[0] and r1[1] == r2[1]
    checks["reseeding changes output"] = not (r1[0] == r3[0])

    # analytic fitter gradient against central differences
    p = G2ModelParams(0.9, 2.7e-6, 2 * math.pi * 1.5e6, 1 / 0.29e-6, 0.15, 0.24)
    from atomdetect.correlation import synthetic_correlogram
    syn = synthetic_correlogram(p, np.random.default_rng(3), 400.0)
    fixed = FixedParams(0.15, 0.24)
    x = np.array([0.8, 2.5e-6, 1 / 0.3e-6, 2 * math.pi * 1.45e6])
    _, grad = chi2_and_gradient(x, syn, fixed)
    num = np.empty(4)
    for i in range(4):
        h = x[i] * 1e-6
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        num[i] = (chi2_and_gradient(up, syn, fixed)[0] - chi2_and_gradient(dn, syn, fixed)[0]) / (2 * h)
    rel = float(np.max(np.abs(grad - num) / np.maximum(np.abs(num), 1e-12)))
    checks["gradient within 1e-4"] = rel < 1e-4

    # single-atom g2 continuity across the critical drive
    tau = np.linspace(0, 200e-9, 2001)
    gam = AtomParams().gamma_total
    jump = float(np.max(np.abs(g2_atom(tau, 0.125 - 1e-9, gam) - g2_atom(tau, 0.125 + 1e-9, gam))))
    checks["g2_A continuous at Y=1/8"] = jump < 1e-6

    detail = (f"flat mean pull {mean_pull:.2f}, gradient rel err {rel:.1e}, "
              f"g2_A jump {jump:.1e}")
    record(8, checks, detail)
