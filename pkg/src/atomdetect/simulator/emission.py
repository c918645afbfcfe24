"""Photon emission from transiting atoms.

Each atom emits as a self-inhibiting point process: the conditional
intensity is the position-dependent emission rate times the single-atom
antibunching function evaluated at the time since that atom's previous
emission. Realizations are drawn by thinning a Gaussian-in-time upper
bound, vectorized across atoms: round j handles the j-th bound candidate of
every atom that has one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import erf, erfinv

from ..physics import (AtomParams, CavityParams, DriveParams, Polarization, g2_atom,
                       g2_atom_max, sublevel_g0_over_2pi)
from .beam import SUBLEVELS, Transit, TransitBatch


class ThinningBoundError(AssertionError):
    """The conditional intensity exceeded its thinning bound."""


@dataclass(frozen=True)
class EmissionContext:
    """Everything an atom needs to emit.

    ``peak_rate`` is the weak-drive slope: an m=0 pi atom at an antinode on
    axis emits ``peak_rate * Y / (1 + Y)`` photons/s into the collected mode.
    """

    cavity: CavityParams
    atom: AtomParams
    drive_Y: float
    peak_rate: float
    polarization: str = "pi"
    antibunching: bool = True

    @cached_property
    def coupling_ratio(self) -> np.ndarray:
        """(g0_m / g0_ref)^2 for m = -3..3, referenced to the m=0 pi transition."""
        ref = sublevel_g0_over_2pi(0, Polarization.PI)
        pol = Polarization(self.polarization)
        out = []
        for m in SUBLEVELS:
            try:
                out.append((sublevel_g0_over_2pi(int(m), pol) / ref) ** 2)
            except ValueError:
                out.append(0.0)
        return np.array(out)

    @cached_property
    def kernel_max(self) -> float:
        if not self.antibunching:
            return 1.0
        return g2_atom_max(self.drive_Y, self.atom.gamma_total)

    def kernel(self, tau):
        if not self.antibunching:
            return np.ones_like(tau)
        return g2_atom(tau, self.drive_Y, self.atom.gamma_total)


def _saturating_rate(u, drive_Y: float, peak_rate: float):
    yu = drive_Y * u
    return peak_rate * u * yu / (1.0 + yu)


def _rate_columns(t, tc, vx, vz, y0, z0, kappa, cavity: CavityParams, drive_Y: float,
                  peak_rate: float):
    d = t - tc
    x = vx * d
    z = z0 + vz * d
    u = kappa * np.cos(cavity.k * z) ** 2 * np.exp(-2.0 * (x * x + y0 * y0) / cavity.waist_w0**2)
    return _saturating_rate(u, drive_Y, peak_rate)


def emission_rate(transit: Transit, t, cavity: CavityParams, drive: DriveParams,
                  peak_rate: float, polarization: str = "pi"):
    """Emission rate (photons/s into the collected mode) of one atom at time(s) ``t``.

    With ``u = g^2(r(t)) / g0_ref^2`` the rate is ``peak_rate * u * Y u / (1 + Y u)``:
    collection weight g^2 times saturating excitation, which is
    ``peak_rate * Y * u^2`` at weak drive.
    """
    ctx = EmissionContext(cavity, AtomParams(), drive.intensity_Y, peak_rate, polarization)
    kappa = ctx.coupling_ratio[transit.ground_state_m + 3]
    pos = transit.position(t)
    u = kappa * np.cos(cavity.k * pos[..., 2]) ** 2 * np.exp(
        -2.0 * (pos[..., 0] ** 2 + pos[..., 1] ** 2) / cavity.waist_w0**2)
    out = _saturating_rate(u, drive.intensity_Y, peak_rate)
    return float(out) if np.ndim(out) == 0 else out


def emit_photons(batch: TransitBatch, ctx: EmissionContext, rng: np.random.Generator,
                 check_bound: bool = True):
    """Emission times for every atom in ``batch``.

    Returns ``(times, owner)``, both sorted by owner then time; ``owner`` indexes
    into ``batch``. Atoms with a transverse velocity component other than along
    x are not supported (the bound assumes constant impact parameter).
    """
    n = len(batch)
    empty = (np.empty(0), np.empty(0, dtype=np.int64))
    if n == 0 or ctx.drive_Y == 0 or ctx.peak_rate == 0:
        return empty
    if np.any(batch.velocity[:, 1] != 0):
        raise ValueError("emit_photons requires v_y = 0")
    w = ctx.cavity.waist_w0
    Y = ctx.drive_Y
    G = ctx.kernel_max
    vx = batch.velocity[:, 0]
    vz = batch.velocity[:, 2]
    y0 = batch.impact_offset[:, 0]
    z0 = batch.impact_offset[:, 1]
    tc = batch.closest_approach_time
    kappa = ctx.coupling_ratio[batch.ground_state_m + 3]
    u0 = kappa * np.exp(-2.0 * y0 * y0 / w**2)

    # u Y u/(1+Y u) <= min(Y u^2, u); both bounds are Gaussian in time
    use_sq = Y * u0 < math.sqrt(2.0)
    s = np.where(use_sq, w / (vx * math.sqrt(8.0)), w / (2.0 * vx))
    C = G * ctx.peak_rate * np.where(use_sq, Y * u0 * u0, u0)
    zhi = batch.box_half_width / (vx * s * math.sqrt(2.0))
    ehi = erf(zhi)
    Lam = C * s * math.sqrt(math.pi / 2.0) * 2.0 * ehi
    N = rng.poisson(Lam)
    total = int(N.sum())
    if total == 0:
        return empty

    # candidates: truncated normal draws, sorted within each atom
    owner = np.repeat(np.arange(n), N)
    e = (2.0 * rng.random(total) - 1.0) * ehi[owner]
    cand = tc[owner] + s[owner] * math.sqrt(2.0) * erfinv(e)
    cand = np.clip(cand, batch.entry_time[owner], batch.exit_time[owner])
    order = np.lexsort((cand, owner))
    cand = cand[order]
    start = np.cumsum(N) - N

    # visit atoms in order of decreasing candidate count so round j is a prefix
    atoms = np.argsort(-N, kind="stable")
    atoms = atoms[N[atoms] > 0]
    Ns = N[atoms]
    cols = [a[atoms] for a in (start, tc, vx, vz, y0, z0, kappa, C, s)]
    st, tc_s, vx_s, vz_s, y0_s, z0_s, ka_s, C_s, s_s = cols
    n_active = np.searchsorted(-Ns, -np.arange(1, Ns[0] + 1), side="right")
    last = np.full(len(atoms), np.nan)
    accepted = np.zeros(total, dtype=bool)
    for j, cnt in enumerate(n_active):
        ci = st[:cnt] + j
        tt = cand[ci]
        lam = _rate_columns(tt, tc_s[:cnt], vx_s[:cnt], vz_s[:cnt], y0_s[:cnt], z0_s[:cnt],
                            ka_s[:cnt], ctx.cavity, Y, ctx.peak_rate)
        prev = last[:cnt]
        seen = ~np.isnan(prev)
        if ctx.antibunching and seen.any():
            lam[seen] *= ctx.kernel(tt[seen] - prev[seen])
        bound = C_s[:cnt] * np.exp(-0.5 * ((tt - tc_s[:cnt]) / s_s[:cnt]) ** 2)
        if check_bound and np.any(lam > bound * (1.0 + 1e-9) + 1e-300):
            raise ThinningBoundError("conditional intensity exceeded the thinning bound")
        acc = rng.random(cnt) * bound < lam
        accepted[ci[acc]] = True
        prev[acc] = tt[acc]
    own = owner[order][accepted]
    return cand[accepted], own


def emit_transit_photons(transit: Transit, ctx: EmissionContext,
                         rng: np.random.Generator) -> np.ndarray:
    """Emission times of a single atom."""
    times, _ = emit_photons(TransitBatch.from_transits([transit]), ctx, rng)
    return times
