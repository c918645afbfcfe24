"""Closed-form cavity QED relations for a three-level atom in a two-mode cavity.

Every configuration value is stored as an ordinary frequency (Hz) because
that is how the apparatus numbers are quoted (kappa/2pi, gamma/2pi, g0/2pi).
Functions that need angular rates convert internally; arguments that are
angular are named ``*_angular`` or documented as s^-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import constants as sc

TWO_PI = 2.0 * math.pi


class DegenerateInputError(ValueError):
    """Raised when a formula is evaluated at a singular input."""


# ------------------------------------------------------------------
# Parameter types
# ------------------------------------------------------------------


@dataclass(frozen=True)
class CavityParams:
    """Fabry-Perot cavity constants (defaults: the 85Rb D2 apparatus)."""

    kappa_over_2pi: float = 3.2e6
    waist_w0: float = 56e-6
    wavelength: float = 780e-9
    finesse: float = 11_000.0
    input_transmission_ppm: float = 15.0
    output_transmission_ppm: float = 300.0
    length: float = 2.2e-3

    def __post_init__(self):
        for name in ("kappa_over_2pi", "waist_w0", "wavelength", "finesse",
                     "input_transmission_ppm", "output_transmission_ppm", "length"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"cavity.{name} must be finite and > 0, got {value!r}")
        if self.waist_w0 <= 10 * self.wavelength:
            raise ValueError("cavity.waist_w0 must be much larger than the wavelength")

    @property
    def k(self) -> float:
        return TWO_PI / self.wavelength

    @property
    def kappa(self) -> float:
        """Field decay rate in s^-1 (angular)."""
        return TWO_PI * self.kappa_over_2pi


@dataclass(frozen=True)
class AtomParams:
    """Decay rates of the three-level atom.

    ``gamma_partial`` is the channel back to the driven ground state and
    ``Gamma_partial`` the channel into the other ground state(s); the default
    split is the branching of |F'=4, m'=0> (4/7 pi, 3/7 sigma).
    """

    gamma_over_2pi: float = 6.0e6
    gamma_partial: float = 6.0e6 * 4.0 / 7.0
    Gamma_partial: float = 6.0e6 * 3.0 / 7.0

    def __post_init__(self):
        for name in ("gamma_over_2pi", "gamma_partial", "Gamma_partial"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"atom.{name} must be finite and > 0, got {value!r}")
        if not math.isclose(self.gamma_partial + self.Gamma_partial, self.gamma_over_2pi,
                            rel_tol=1e-9):
            raise ValueError("atom.gamma_partial + atom.Gamma_partial must equal "
                             "atom.gamma_over_2pi")

    @property
    def gamma_total(self) -> float:
        """Total population decay rate in s^-1 (angular)."""
        return TWO_PI * self.gamma_over_2pi

    @property
    def lifetime(self) -> float:
        return 1.0 / self.gamma_total


class Polarization(str, Enum):
    PI = "pi"
    SIGMA_PLUS = "sigma_plus"
    SIGMA_MINUS = "sigma_minus"


@dataclass(frozen=True)
class TransitionEntry:
    ground_F: int
    ground_m: int
    excited_F: int
    excited_m: int
    polarization: Polarization
    cg_coefficient: float
    g0_over_2pi: float
    C1: float
    n0: float


@dataclass(frozen=True)
class CouplingSet:
    """Cooperativities for ``n_atoms`` maximally coupled atoms.

    ``C1_undriven`` is the single-atom cooperativity of the undriven mode.
    """

    C1_driven: float
    C1_undriven: float = 0.0
    n_atoms: float = 1.0

    def __post_init__(self):
        if min(self.C1_driven, self.C1_undriven, self.n_atoms) < 0:
            raise ValueError("cooperativities and atom number must be non-negative")

    @property
    def C_total(self) -> float:
        return self.C1_driven * self.n_atoms / (1.0 + 2.0 * self.C1_undriven)


@dataclass(frozen=True)
class FaradayParams:
    b_field: float = 3.3e-4
    lande_gL: float = 1.0 / 3.0
    bohr_magneton: float = sc.physical_constants["Bohr magneton"][0]


@dataclass(frozen=True)
class DriveParams:
    """Drive strength as empty-cavity photon number over the m=0 pi saturation number."""

    intensity_Y: float = 0.24

    def __post_init__(self):
        if not (np.isfinite(self.intensity_Y) and self.intensity_Y >= 0):
            raise ValueError(f"drive.intensity_Y must be >= 0, got {self.intensity_Y!r}")


@dataclass(frozen=True)
class G2ModelParams:
    """Parameters of the transit-windowed autocorrelation model.

    ``transit_T`` in s, ``standing_wave_Omega`` in rad/s, ``damping_beta``
    in s^-1 and ``gamma_total`` in s^-1 (angular).
    """

    n_bar: float
    transit_T: float
    standing_wave_Omega: float
    damping_beta: float
    bg_to_signal: float = 0.0
    drive_Y: float = 0.24
    gamma_total: float = TWO_PI * 6.0e6

    def __post_init__(self):
        if not self.n_bar > 0:
            raise ValueError("n_bar must be > 0")
        if not self.transit_T > 0:
            raise ValueError("transit_T must be > 0")
        if self.damping_beta < 0 or self.bg_to_signal < 0:
            raise ValueError("damping_beta and bg_to_signal must be >= 0")


# ------------------------------------------------------------------
# Mode function and single-atom parameters
# ------------------------------------------------------------------


def mode_coupling(pos, cavity: CavityParams, g0: float):
    """Coupling ``g0 cos(kz) exp(-(x^2+y^2)/w0^2)`` of the TEM00 standing wave.

    ``pos`` is ``(x, y, z)`` or an array of shape ``(..., 3)``.
    """
    pos = np.asarray(pos, dtype=float)
    x, y, z = pos[..., 0], pos[..., 1], pos[..., 2]
    g = g0 * np.cos(cavity.k * z) * np.exp(-(x * x + y * y) / cavity.waist_w0**2)
    return float(g) if g.ndim == 0 else g


def derived_transition_params(g0: float, cavity: CavityParams, atom: AtomParams):
    """Return ``(C1, n0)`` for a transition with angular coupling ``g0`` (s^-1)."""
    if g0 == 0:
        raise DegenerateInputError("g0 = 0: saturation photon number n0 diverges")
    if g0 < 0 or not np.isfinite(g0):
        raise ValueError(f"g0 must be finite and positive, got {g0!r}")
    gamma = atom.gamma_total
    C1 = g0 * g0 / (cavity.kappa * gamma)
    n0 = gamma * gamma / (3.0 * g0 * g0)
    return C1, n0


# Table values: (polarization, m, m', CG expression, g0/2pi MHz, C1, n0)
_TABLE_ROWS = (
    (Polarization.PI, 0, 0, -math.sqrt(2 / 7), 1.5, 0.12, 5.3),
    (Polarization.PI, 3, 3, -math.sqrt(1 / 8), 0.99, 0.053, 12.0),
    (Polarization.SIGMA_PLUS, 0, 1, math.sqrt(5 / 28), 1.2, 0.075, 8.5),
    (Polarization.SIGMA_PLUS, 3, 4, math.sqrt(1 / 2), 2.0, 0.21, 3.0),
    (Polarization.SIGMA_PLUS, -3, -2, math.sqrt(1 / 56), 0.38, 0.0075, 85.0),
)


def transition_table() -> list[TransitionEntry]:
    """The five tabulated F=3 -> F'=4 transitions, exactly as published."""
    return [
        TransitionEntry(3, m, 4, mp, pol, cg, g0 * 1e6, C1, n0)
        for pol, m, mp, cg, g0, C1, n0 in _TABLE_ROWS
    ]


# g0/2pi per unit of tabulated CG coefficient, fixed by the pi m=0 row.
G0_PER_CG_OVER_2PI = 1.5e6 / math.sqrt(2 / 7)


def cg_coefficient(m: int, polarization: Polarization | str = Polarization.PI) -> float:
    """Tabulated-convention CG coefficient for F=3, m -> F'=4, m+q.

    The tabulated values equal the standard <3 m; 1 q | 4 m+q> coefficient
    divided by sqrt(2); pi entries carry a negative sign.
    """
    pol = Polarization(polarization)
    if not -3 <= m <= 3:
        raise ValueError(f"ground sublevel m={m} outside F=3")
    if pol is Polarization.PI:
        return -math.sqrt((16 - m * m) / 56.0)
    if pol is Polarization.SIGMA_PLUS:
        return math.sqrt((4 + m) * (5 + m) / 112.0)
    return math.sqrt((4 - m) * (5 - m) / 112.0)


def sublevel_g0_over_2pi(m: int, polarization: Polarization | str = Polarization.PI) -> float:
    return G0_PER_CG_OVER_2PI * abs(cg_coefficient(m, polarization))


# ------------------------------------------------------------------
# Steady state and Faraday rotation
# ------------------------------------------------------------------


def steady_state_photons(drive: DriveParams, coupling: CouplingSet,
                         faraday_phi: float | None = None):
    """Return ``(X_parallel, X_perp)`` normalized intracavity photon numbers.

    Without ``faraday_phi`` the full three-level expression is used. With a
    rotation angle the perpendicular mode follows the small-C form
    ``Y (2 C1_undriven C + |phi|^2)``.
    """
    Y = drive.intensity_Y
    C = coupling.C_total
    Ct = coupling.C1_undriven
    x_par = Y / (1.0 + 2.0 * C) ** 2
    if faraday_phi is None:
        x_perp = Y * (2.0 * Ct / (1.0 + 2.0 * Ct)) * (C / (1.0 + 2.0 * C) ** 2)
    else:
        x_perp = Y * (2.0 * Ct * C + abs(faraday_phi) ** 2)
    return x_par, x_perp


def zeeman_parameter(faraday: FaradayParams, atom: AtomParams) -> float:
    """``2 g_L mu_B B / (hbar gamma_tot)``."""
    return 2.0 * faraday.lande_gL * faraday.bohr_magneton * faraday.b_field / (
        sc.hbar * atom.gamma_total)


def faraday_angle(faraday: FaradayParams, atom: AtomParams, C: float) -> float:
    x = zeeman_parameter(faraday, atom)
    return C * x / (1.0 + x * x)


def optimal_faraday_field(faraday: FaradayParams, atom: AtomParams) -> float:
    """Field (T) that maximizes the rotation, where the angle is C/2."""
    return sc.hbar * atom.gamma_total / (2.0 * faraday.lande_gL * faraday.bohr_magneton)


def rotation_from_fields(eps_parallel: float, eps_perp: float) -> float:
    """Rotation angle from the two polarization field amplitudes (Stokes estimate)."""
    a, b = abs(eps_parallel), abs(eps_perp)
    if a <= b:
        raise ValueError("rotation estimate requires |eps_parallel| > |eps_perp|")
    return a * b / (a * a - b * b)


# ------------------------------------------------------------------
# Intensity autocorrelation
# ------------------------------------------------------------------


def _sinhc(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(small, 1.0 + x * x / 6.0, np.sinh(x) / np.where(small, 1.0, x))
    return out


def g2_atom(tau, drive_Y: float, gamma: float):
    """Resonance-fluorescence antibunching of a single two-level atom.

    ``1 - exp(-3 gamma tau / 4) (cosh(delta tau) + 3 gamma/(4 delta) sinh(delta tau))``
    with ``delta = (gamma/4) sqrt(1 - 8Y)``. Above ``Y = 1/8`` delta is
    imaginary and the hyperbolic functions become trigonometric, so the result
    stays real. ``gamma`` is the total decay rate in s^-1; negative lags are
    folded to ``|tau|``.
    """
    tau = np.abs(np.asarray(tau, dtype=float))
    a = 0.75 * gamma
    d2 = (gamma / 4.0) ** 2 * (1.0 - 8.0 * drive_Y)
    if d2 >= 0:
        delta = math.sqrt(d2)
        x = delta * tau
        # large arguments: combine exponentials to avoid cosh overflow
        with np.errstate(over="ignore"):
            big = x > 20.0
            xs = np.where(big, 0.0, x)
            near = np.exp(-a * tau) * (np.cosh(xs) + a * tau * _sinhc(xs))
            far = 0.5 * (1.0 + a / max(delta, 1e-300)) * np.exp((delta - a) * tau) \
                + 0.5 * (1.0 - a / max(delta, 1e-300)) * np.exp(-(delta + a) * tau)
            env = np.where(big, far, near)
    else:
        w = math.sqrt(-d2)
        x = w * tau
        env = np.exp(-a * tau) * (np.cos(x) + a * tau * np.sinc(x / math.pi))
    out = 1.0 - env
    return float(out) if out.ndim == 0 else out


def g2_atom_max(drive_Y: float, gamma: float) -> float:
    """Supremum of :func:`g2_atom` over tau >= 0 (1 when overdamped)."""
    if drive_Y <= 0.125:
        return 1.0
    w = (gamma / 4.0) * math.sqrt(8.0 * drive_Y - 1.0)
    # the first overshoot lies before one Rabi period; refine on a fine grid
    tau = np.linspace(0.0, 4.0 * math.pi / w + 8.0 / gamma, 20001)
    return max(1.0, float(np.max(g2_atom(tau, drive_Y, gamma))))


def antibunching_area(drive_Y: float, gamma: float) -> float:
    """One-sided integral of ``1 - g2_atom`` over tau in [0, inf)."""
    return 3.0 / (gamma * (1.0 + drive_Y))


def beating_term(tau, p: G2ModelParams):
    """Hook for the beating of fields from different atoms and with background.

    It is excluded from the model; the fit window skips the region where it
    matters.
    """
    return np.zeros_like(np.asarray(tau, dtype=float))


def transit_window(tau, transit_T: float, standing_wave_Omega: float, damping_beta: float):
    """Empirical window ``[cos(Omega tau) exp(-beta|tau|) + 1] exp(-(tau/T)^2)``."""
    tau = np.abs(np.asarray(tau, dtype=float))
    return (np.cos(standing_wave_Omega * tau) * np.exp(-damping_beta * tau) + 1.0) * np.exp(
        -(tau / transit_T) ** 2)


def g2_model(tau, p: G2ModelParams):
    """Full autocorrelation model (without the beating term), even in tau."""
    tau = np.asarray(tau, dtype=float)
    dilution = 1.0 / (1.0 + p.bg_to_signal) ** 2
    atom = transit_window(tau, p.transit_T, p.standing_wave_Omega, p.damping_beta) * g2_atom(
        tau, p.drive_Y, p.gamma_total)
    out = 1.0 + dilution * atom / p.n_bar + beating_term(tau, p)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------------
# Effective atom number
# ------------------------------------------------------------------


def effective_atom_number(positions, cavity: CavityParams) -> float:
    """Sum of ``g^2(r_i)/g0^2`` over atom positions, shape ``(n, 3)``."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if positions.size == 0:
        return 0.0
    g = mode_coupling(positions, cavity, 1.0)
    return float(np.sum(np.square(g)))


@dataclass
class EffectiveAtomNumberResult:
    mean: float
    std_error: float
    n_configurations: int
    distribution: np.ndarray = field(repr=False)

    def probability_above(self, threshold: float) -> float:
        return float(np.mean(self.distribution > threshold))


def effective_atom_number_mc(mean_atoms: float, cavity: CavityParams, rng: np.random.Generator,
                             n_configurations: int = 1_000_000, extent_waists: float = 2.0,
                             chunk: int = 250_000) -> EffectiveAtomNumberResult:
    """Monte Carlo mean of the effective atom number.

    Each configuration holds a Poisson number of atoms (mean ``mean_atoms``)
    placed uniformly in the box ``|x|, |y| <= extent_waists * w0`` and over
    one wavelength along the axis.
    """
    if n_configurations <= 0:
        raise ValueError("n_configurations must be positive")
    half = extent_waists * cavity.waist_w0
    out = np.empty(n_configurations)
    done = 0
    while done < n_configurations:
        n = min(chunk, n_configurations - done)
        counts = rng.poisson(mean_atoms, size=n)
        total = int(counts.sum())
        xy = rng.uniform(-half, half, size=(total, 2))
        z = rng.uniform(0.0, cavity.wavelength, size=total)
        w = np.cos(cavity.k * z) ** 2 * np.exp(-2.0 * (xy[:, 0] ** 2 + xy[:, 1] ** 2)
                                              / cavity.waist_w0**2)
        owner = np.repeat(np.arange(n), counts)
        out[done:done + n] = np.bincount(owner, weights=w, minlength=n)
        done += n
    return EffectiveAtomNumberResult(
        mean=float(out.mean()),
        std_error=float(out.std(ddof=1) / math.sqrt(n_configurations)),
        n_configurations=n_configurations,
        distribution=out,
    )


# ------------------------------------------------------------------
# Saturation-weighted excitation volume
# ------------------------------------------------------------------


def saturated_collection_volume(saturation: float | Sequence[float], cavity: CavityParams,
                                n_z: int = 256):
    """Volume integral of ``g^2 [s g^2/(1 + s g^2)]`` (g normalized to g0).

    The transverse integral is done in closed form over the infinite plane,
    the axial average over one standing-wave period by the midpoint rule.
    Returned per unit length along the axis, in m^2.
    """
    s = np.atleast_1d(np.asarray(saturation, dtype=float))
    theta = (np.arange(n_z) + 0.5) * math.pi / n_z
    c = np.cos(theta) ** 2
    sc_ = s[:, None] * c[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        # (pi w0^2 / 2) * (c - ln(1 + s c)/s), with the s -> 0 limit s c^2 / 2
        inner = np.where(sc_ > 1e-6, c[None, :] - np.log1p(sc_) / np.where(s[:, None] > 0,
                                                                            s[:, None], 1.0),
                         sc_ * c[None, :] / 2.0 - sc_**2 * c[None, :] / 3.0)
    vol = 0.5 * math.pi * cavity.waist_w0**2 * inner.mean(axis=1)
    return vol if np.ndim(saturation) else float(vol[0])
