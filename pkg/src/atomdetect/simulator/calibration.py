"""Expected observables of the transit model, by quadrature.

An atom with sublevel coupling ratio kappa, impact offset y0 and speed v
sees ``u(t) = U(xi) cos^2(theta)`` with ``U = kappa exp(-2 y0^2/w^2 - 2 xi^2)``,
``xi = v_x t / w`` and ``theta`` the standing-wave phase. Its bare emission
rate is ``peak * S(u)``. Emission is a renewal process whose hazard is the bare
rate times the antibunching kernel; since the rate changes slowly on the
kernel's time scale, the local emitted rate ``m`` and the local factorial
excess ``e = m (F - 1)`` (F the Fano factor of the stationary renewal process)
follow from the bare rate alone. ``m`` is expanded in harmonics of
``2 theta``: averaging over the uniform axial phase leaves ``m_0`` as the
transit envelope (it sets the correlogram pedestal, hence N-bar and T) while
the ``m_n`` produce the damped oscillation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import brentq

from ..physics import AtomParams, CavityParams, g2_atom
from .beam import BeamParams
from .emission import EmissionContext

_N_THETA = 64
_N_HARMONICS = 4


@dataclass(frozen=True)
class ExpectedObservables:
    """Model predictions for one configuration.

    ``alpha`` is the large-bin Mandel intercept ``eta E[K(K-1)]/E[K]`` with K
    the emitted photons of one atom; ``signal_rate`` is the detected signal
    rate summed over detectors. ``Omega`` and ``beta`` are angular.
    """

    n_bar: float
    transit_T: float
    Omega: float
    beta: float
    alpha: float
    signal_rate: float
    emitted_per_atom: float


def _saturation(u, drive_Y):
    yu = drive_Y * u
    return u * yu / (1.0 + yu)


class _Renewal:
    """Emitted rate and factorial excess of a renewal process with hazard ``r k(s)``.

    Tabulated on a log grid of bare rates ``r``; below the grid the
    first-order forms ``m = r - I r^2`` and ``e = -2 I r^2`` apply, with I the
    one-sided area of ``1 - k``.
    """

    def __init__(self, drive_Y: float, gamma: float, r_max: float, antibunching: bool = True,
                 n_rates: int = 400, n_s: int = 8000):
        self.identity = not antibunching or r_max <= 0
        if self.identity:
            return
        s_c = 40.0 / gamma
        s = np.linspace(0.0, s_c, n_s)
        K = cumulative_trapezoid(g2_atom(s, drive_Y, gamma), s, initial=0.0)
        self.area = float(s_c - K[-1])
        r = np.geomspace(1e-4 / s_c, r_max * 1.01, n_rates)
        surv = np.exp(-np.outer(r, K))
        tail = np.exp(-r * (s_c - self.area))
        m1 = trapezoid(surv, s, axis=1) + tail / r
        m2 = 2.0 * trapezoid(surv * s, s, axis=1) + 2.0 * tail * (s_c / r + 1.0 / r**2)
        self.r = r
        self.m = 1.0 / m1
        self.e = self.m * (m2 / m1**2 - 2.0)

    def __call__(self, rate):
        rate = np.asarray(rate, dtype=float)
        if self.identity:
            return rate, np.zeros_like(rate)
        low = rate < self.r[0]
        m = np.where(low, rate - self.area * rate**2, np.interp(rate, self.r, self.m))
        e = np.where(low, -2.0 * self.area * rate**2, np.interp(rate, self.r, self.e))
        return m, e


def _theta_grid():
    theta = (np.arange(_N_THETA) + 0.5) * math.pi / _N_THETA
    n = np.arange(_N_HARMONICS + 1)
    basis = np.cos(2.0 * n[:, None] * theta[None, :]) / _N_THETA
    basis[1:] *= 2.0
    return np.cos(theta) ** 2, basis


def _profiles(U, drive_Y, peak_rate, renewal: _Renewal):
    """Harmonics ``m_n(U)`` (last axis) and the phase average ``e_0(U)``."""
    c, basis = _theta_grid()
    rate = peak_rate * _saturation(U[..., None] * c, drive_Y)
    m, e = renewal(rate)
    return m @ basis.T, e.mean(axis=-1)


class _Quadrature:
    """Nodes and weights over (kappa, y0), xi and speed."""

    def __init__(self, cavity: CavityParams, beam: BeamParams, atom: AtomParams):
        ctx = EmissionContext(cavity, atom, 1.0, 1.0, beam.polarization)
        half = beam.mode_extent_factor
        p_m = beam.sublevel_probabilities
        kappa = ctx.coupling_ratio
        keep = p_m > 0
        kappa, p_m = kappa[keep], p_m[keep]
        yn, yw = np.polynomial.legendre.leggauss(64)
        y = yn * half                      # y0 / w
        wy = yw / 2.0                      # uniform density over [-half, half]
        self.u0 = (kappa[:, None] * np.exp(-2.0 * y[None, :] ** 2)).ravel()
        self.w_u0 = (p_m[:, None] * wy[None, :]).ravel()
        xn, xw = np.polynomial.legendre.leggauss(96)
        self.xi = xn * half
        self.w_xi = xw * half
        hn, hw = np.polynomial.hermite_e.hermegauss(24)
        speed = beam.mean_speed + beam.speed_sigma * hn
        wv = hw / hw.sum()
        good = speed > 0
        self.speed, self.w_speed = speed[good], wv[good] / wv[good].sum()
        self.vx = self.speed * math.cos(beam.tilt_angle)
        self.vz = self.speed * math.sin(beam.tilt_angle)
        self.U = self.u0[:, None] * np.exp(-2.0 * self.xi[None, :] ** 2)
        self.cavity = cavity
        self.beam = beam
        self.atom = atom

    def e_xi(self, f):
        """Integral over xi, then expectation over (kappa, y0)."""
        return float(np.sum(self.w_u0 * (f @ self.w_xi)))


def _axial_damping(beam: BeamParams, cavity: CavityParams) -> float:
    if beam.spread_shape == "lorentzian":
        return 2.0 * cavity.k * beam.transverse_sigma
    # gaussian spread damps as exp(-(2 k sigma tau)^2 / 2); report its 1/e rate
    return 2.0 * cavity.k * beam.transverse_sigma / math.sqrt(2.0)


def _pedestal_correlation(q: _Quadrature, m0, envelope, tau):
    """``E[integral m_0(t) m_0(t + tau) dt]``; ``envelope(U)`` evaluates m_0."""
    w = q.cavity.waist_w0
    half = q.beam.mode_extent_factor
    # m_0 is smooth in log U: tabulate once instead of re-averaging over theta
    grid = np.geomspace(max(float(q.u0.min()), 1e-12) * math.exp(-2.0 * half**2), 1.0, 2000)
    table = envelope(grid)
    shifts = np.linspace(0.0, 2.0 * half, 201)
    phi = np.empty_like(shifts)
    for i, s in enumerate(shifts):
        x = q.xi + s
        U = q.u0[:, None] * np.exp(-2.0 * x[None, :] ** 2)
        moved = np.interp(U, grid, table) * (x <= half)[None, :]
        phi[i] = q.e_xi(m0 * moved)
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    for vx, pv in zip(q.vx, q.w_speed):
        out = out + pv * (w / vx) * np.interp(vx * tau / w, shifts, phi, right=0.0)
    return out


def _counting_moments(q: _Quadrature, peak_rate: float, drive_Y: float, renewal: _Renewal):
    """``(E[K], E[K(K-1)], m, beta)`` for one atom."""
    w = q.cavity.waist_w0
    inv_v = float(np.sum(q.w_speed * w / q.vx))
    inv_v2 = float(np.sum(q.w_speed * (w / q.vx) ** 2))
    beta = _axial_damping(q.beam, q.cavity)
    m, e0 = _profiles(q.U, drive_Y, peak_rate, renewal)
    int_m0 = m[..., 0] @ q.w_xi
    mean_K = inv_v * float(np.sum(q.w_u0 * int_m0))
    pairs = inv_v2 * float(np.sum(q.w_u0 * int_m0**2)) + inv_v * q.e_xi(e0)
    dephase = beta**2 + (2 * q.cavity.k * q.vz) ** 2
    for n in range(1, _N_HARMONICS + 1):
        if np.all(dephase > 0):
            lor = np.sum(q.w_speed * (w / q.vx) * beta / (n * dephase))
            pairs += float(lor) * q.e_xi(m[..., n] ** 2)
        else:
            # frozen standing-wave phase: the harmonic adds coherently over the transit
            pairs += 0.5 * inv_v2 * float(np.sum(q.w_u0 * (m[..., n] @ q.w_xi) ** 2))
    return mean_K, pairs, m, beta


def _renewal_for(q: _Quadrature, peak_rate: float, drive_Y: float, antibunching: bool):
    r_max = peak_rate * _saturation(float(q.u0.max()), drive_Y)
    return _Renewal(drive_Y, q.atom.gamma_total, r_max, antibunching)


def expected_observables(peak_rate: float, drive_Y: float, cavity: CavityParams,
                         atom: AtomParams, beam: BeamParams, efficiency: float,
                         antibunching: bool = True) -> ExpectedObservables:
    """Predicted N-bar, correlation width, oscillation, alpha and signal rate."""
    if drive_Y <= 0:
        raise ValueError("expected observables need drive_Y > 0")
    q = _Quadrature(cavity, beam, atom)
    renewal = _renewal_for(q, peak_rate, drive_Y, antibunching)
    mean_K, pairs, m, beta = _counting_moments(q, peak_rate, drive_Y, renewal)
    w = cavity.waist_w0
    inv_v = float(np.sum(q.w_speed * w / q.vx))
    Omega = 2.0 * cavity.k * float(np.sum(q.w_speed * q.vz))
    alpha = efficiency * pairs / mean_K if mean_K > 0 else 0.0

    def envelope(U):
        return _profiles(U, drive_Y, peak_rate, renewal)[0][..., 0]

    if mean_K > 0:
        n_bar = beam.flux * mean_K**2 / (inv_v * q.e_xi(m[..., 0] ** 2))
        taus = np.linspace(0.0, 3.0 * w / beam.mean_speed, 61)
        corr = _pedestal_correlation(q, m[..., 0], envelope, taus)
        corr = corr / corr[0]
        k = int(np.argmax(corr < math.exp(-1.0)))
        t0, t1 = taus[k - 1], taus[k]
        c0, c1 = corr[k - 1], corr[k]
        T = float(t0 + (c0 - math.exp(-1.0)) * (t1 - t0) / (c0 - c1))
    else:
        n_bar, T = math.nan, math.nan
    return ExpectedObservables(
        n_bar=float(n_bar),
        transit_T=T,
        Omega=float(Omega),
        beta=float(beta),
        alpha=float(alpha),
        signal_rate=float(efficiency * beam.flux * mean_K),
        emitted_per_atom=float(mean_K),
    )


def calibrate_peak_rate(alpha_target: float, calibration_Y: float, cavity: CavityParams,
                        atom: AtomParams, beam: BeamParams, efficiency: float,
                        antibunching: bool = True) -> float:
    """Peak rate giving Mandel intercept ``alpha_target`` at drive ``calibration_Y``.

    Alpha is close to proportional to the peak rate (inhibition makes it
    slightly sublinear), so the linear estimate brackets a root search.
    """
    if alpha_target < 0 or efficiency <= 0:
        raise ValueError("alpha_target must be >= 0 and efficiency > 0")
    if not calibration_Y > 0:
        raise ValueError("calibration_Y must be > 0")
    if alpha_target == 0:
        return 0.0
    q = _Quadrature(cavity, beam, atom)

    def alpha(p):
        renewal = _renewal_for(q, p, calibration_Y, antibunching)
        mean_K, pairs, _, _ = _counting_moments(q, p, calibration_Y, renewal)
        return efficiency * pairs / mean_K

    p1 = 1.0e6
    guess = alpha_target / alpha(p1) * p1
    return float(brentq(lambda p: alpha(p) - alpha_target, 0.5 * guess, 4.0 * guess,
                        xtol=1e-7 * guess))
