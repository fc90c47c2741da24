"""Differential and total cross sections for single, double and triple Compton scattering.

Differential values are returned in barn-based units:

* triple:  b MeV^-2 sr^-3 (differential in omega_1, omega_2 and three solid angles)
* double:  b MeV^-1 sr^-2 (differential in omega_1 and two solid angles)
* single:  b sr^-1

Polarization channels are written as digit strings listing the labels of
``(eps_0, eps_1, ..., eps_n)``; a string one digit short takes the incoming
polarization from the config.  ``"summed"`` sums every polarization
including the incoming one, ``"final-summed"`` sums the emitted photons only.
"""

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .amplitudes import amplitude_tensor
from .constants import ALPHA, ELECTRON_MASS, MEV2_TO_BARN
from .dirac import minkowski_dot
from .kinematics import (
    KinematicsError,
    boost_config_to_rest_frame,
    compton_energy,
    cross_section_jacobian_J,
    doppler_to_lab,
    doppler_to_rest,
    energy_jacobian,
    final_electron,
    omega_max_two_photon,
    photon_direction,
    polarization_basis,
    solve_last_omega,
)

C_DC_NR = 9.1
C_TC_NR = 4.5

# sigma_SC(w) / (8 pi alpha^2 / 3 m^2) around w = 0
_THOMSON_SERIES = (
    1.0, -2.0, 26 / 5, -133 / 10, 1144 / 35, -544 / 7, 3784 / 21, -6148 / 15,
    151552 / 165, -111872 / 55, 637952 / 143, -883328 / 91,
)  # fmt: skip


@dataclass
class Kinematics:
    """Closed kinematics for a batch of emission configurations.

    ``momenta`` lists ``k0, k1, ..., kn``; ``omega`` holds the emitted
    energies on the last axis.  ``prefactor`` is the phase-space factor in
    barn units (zero outside the allowed, above-threshold region) that
    multiplies ``|N|^2``.
    """

    momenta: list
    p_i: np.ndarray
    p_f: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    valid: np.ndarray
    prefactor: np.ndarray


def _angles(theta, phi, n):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    theta, phi = np.broadcast_arrays(theta, phi)
    if theta.shape[-1:] != (n,):
        raise ValueError(f"expected {n} emission angles on the last axis")
    return theta, phi


def _close(config, known_omegas, theta, phi, closed=False):
    """Shared closure for n-photon emission with the last energy solved.

    ``closed=True`` keeps points sitting on a threshold (to rounding), as
    needed by quadrature nodes placed on the region boundary.
    """
    m = config.m
    n = theta.shape[-1]
    lead = np.broadcast_shapes(theta.shape[:-1], *[np.shape(w) for w in known_omegas])
    theta = np.broadcast_to(theta, lead + (n,))
    phi = np.broadcast_to(phi, lead + (n,))
    dirs = photon_direction(theta, phi)  # (..., n, 4)
    p_i = np.broadcast_to(config.p_i(), lead + (4,))
    k0 = np.broadcast_to(config.k0(), lead + (4,))
    known = [np.asarray(w, dtype=float)[..., None] * dirs[..., j, :] for j, w in enumerate(known_omegas)]
    n_last = dirs[..., n - 1, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        w_last = solve_last_omega(p_i, k0, known, n_last, degenerate="nan")
        k_last = w_last[..., None] * n_last
        p_f = final_electron(p_i, k0, *known, k_last)
        e_f = p_f[..., 0]
        omega = np.stack([np.broadcast_to(np.asarray(w, dtype=float), lead) for w in known_omegas] + [w_last], axis=-1)
        thresholds = config.thresholds(theta)
        if closed:
            thresholds = thresholds * (1.0 - 1e-9)
        valid = np.isfinite(w_last) & (w_last > 0) & (e_f >= m) & np.all(omega > thresholds, axis=-1)
        jac = energy_jacobian(p_i, k0, known, n_last, w_last, np.where(e_f == 0, np.nan, e_f))
        order = n + 1
        coupling = ALPHA**order / ((2.0 * np.pi) ** (2 * (n - 1)) * m ** (2 * (n - 1)))
        flux = minkowski_dot(p_i, k0)
        pref = coupling * np.prod(omega, axis=-1) / (e_f * flux * np.abs(jac)) * MEV2_TO_BARN
    pref = np.where(valid, pref, 0.0)
    return Kinematics([k0, *known, k_last], p_i, p_f, omega, theta, phi, valid, pref)


def tc_kinematics(config, omega1, omega2, theta, phi):
    """Triple-Compton kinematics; ``omega_3`` from four-momentum closure."""
    theta, phi = _angles(theta, phi, 3)
    return _close(config, [omega1, omega2], theta, phi)


def dc_kinematics(config, omega1, theta, phi):
    """Double-Compton kinematics; ``omega_2`` from closure."""
    theta, phi = _angles(theta, phi, 2)
    return _close(config, [omega1], theta, phi)


def sc_kinematics(config, theta, phi):
    theta, phi = _angles(theta, phi, 1)
    return _close(config, [], theta, phi)


def emitted_polarizations(theta, phi):
    """Basis polarization vectors, shape (..., n, 2, 4)."""
    e1, e2 = polarization_basis(theta, phi)
    return np.stack([e1, e2], axis=-2)


def incoming_polarizations(config, pol0="both"):
    """Incoming polarization candidates, shape (L0, 4)."""
    if pol0 == "both":
        return np.stack(polarization_basis(0.0, 0.0)).astype(complex)
    if pol0 == "config":
        return config.eps0()[None, :].astype(complex)
    return np.asarray(pol0, dtype=complex).reshape(-1, 4)


def channel_weights(config, kin, pol0="both", chunk=4096):
    """``prefactor * |N|^2`` for every polarization and spin channel.

    Returns an array of shape ``kin.valid.shape + (L0, 2, ..., 2, 2, 2)``
    with one axis per emitted photon followed by ``r_i`` and ``r_f``.
    Points outside the allowed region are exactly zero.
    """
    n = kin.theta.shape[-1]
    eps0 = incoming_polarizations(config, pol0)
    eps_em = emitted_polarizations(kin.theta, kin.phi)
    lead = kin.valid.shape
    out = np.zeros(lead + (eps0.shape[0],) + (2,) * n + (2, 2))
    idx = np.flatnonzero(kin.valid.ravel())
    if idx.size == 0:
        return out
    flat_out = out.reshape((-1,) + out.shape[len(lead):])
    moms = [np.reshape(k, (-1, 4)) for k in kin.momenta]
    p_i = np.reshape(kin.p_i, (-1, 4))
    p_f = np.reshape(kin.p_f, (-1, 4))
    eps_flat = np.reshape(eps_em, (-1, n, 2, 4))
    pref = kin.prefactor.ravel()
    for start in range(0, idx.size, chunk):
        sel = idx[start : start + chunk]
        pols = [np.broadcast_to(eps0, (sel.size,) + eps0.shape)] + [eps_flat[sel, j] for j in range(n)]
        amp = amplitude_tensor(p_i[sel], p_f[sel], [k[sel] for k in moms], pols, config.m)
        w = np.abs(amp) ** 2
        flat_out[sel] = pref[sel].reshape((-1,) + (1,) * (w.ndim - 1)) * w
    return out


def parse_channel(channel, n):
    """Normalize a channel spec to ``(pol0_mode, labels or None)``.

    ``labels`` is a tuple of 0-based indices for the emitted photons when
    the channel is explicit.
    """
    if channel == "summed":
        return "both", None
    if channel == "final-summed":
        return "config", None
    text = str(channel)
    if not set(text) <= {"1", "2"} or len(text) not in (n, n + 1):
        raise ValueError(f"invalid polarization channel {channel!r} for {n} emitted photons")
    labels = tuple(int(c) - 1 for c in text)
    if len(text) == n + 1:
        return labels[0], labels[1:]
    return "config", labels


def reduce_channels(weights, channel, n, spin="averaged"):
    """Collapse a :func:`channel_weights` tensor to one value per point.

    ``weights`` must have been computed with the ``pol0`` mode implied by
    ``channel`` (see :func:`parse_channel`); an integer incoming label
    selects from a "both" tensor.
    """
    pol0, labels = parse_channel(channel, n)
    if isinstance(pol0, int):
        weights = np.take(weights, [pol0], axis=-(n + 3))
    if spin == "averaged":
        w = 0.5 * weights.sum(axis=(-1, -2))
    elif spin == "summed":
        w = weights.sum(axis=(-1, -2))
    else:
        r_i, r_f = spin
        w = weights[..., r_i - 1, r_f - 1]
    w = w.sum(axis=-(n + 1))  # incoming axis (length 1 unless summed)
    if labels is None:
        return w.sum(axis=tuple(range(-n, 0)))
    return w[(Ellipsis,) + labels]


def reduce_full_tensor(weights, channel, n, spin, config):
    """Like :func:`reduce_channels` for a tensor holding both incoming polarizations."""
    pol0, _ = parse_channel(channel, n)
    if pol0 == "config":
        label = config.polarization0
        if not isinstance(label, (int, np.integer)):
            raise ValueError("explicit incoming polarization vectors need a 'final-summed'-free channel")
        weights = np.take(weights, [label - 1], axis=-(n + 3))
        if channel == "final-summed":
            return reduce_channels(weights, channel, n, spin)
        return reduce_channels(weights, f"{label}{channel}", n, spin)
    return reduce_channels(weights, channel, n, spin)


def _pol0_mode(channel, n):
    pol0, _ = parse_channel(channel, n)
    return "both" if isinstance(pol0, int) else pol0


@dataclass
class DifferentialPoint:
    """A differential cross section at one kinematic point."""

    process: str
    channel: str
    spin: object
    point: dict
    value: float
    units: str = field(default="")


def _legs_angles(legs):
    return [leg.theta for leg in legs], [leg.phi for leg in legs]


def dsigma_tc_grid(config, omega1, omega2, theta, phi, channel="final-summed", spin="averaged"):
    """Vectorized triple-Compton differential cross section (b MeV^-2 sr^-3)."""
    kin = tc_kinematics(config, omega1, omega2, theta, phi)
    w = channel_weights(config, kin, _pol0_mode(channel, 3))
    return reduce_channels(w, channel, 3, spin)


def dsigma_dc_grid(config, omega1, theta, phi, channel="final-summed", spin="averaged"):
    """Vectorized double-Compton differential cross section (b MeV^-1 sr^-2)."""
    kin = dc_kinematics(config, omega1, theta, phi)
    w = channel_weights(config, kin, _pol0_mode(channel, 2))
    return reduce_channels(w, channel, 2, spin)


def dsigma_sc_grid(config, theta, phi, channel="final-summed", spin="averaged"):
    """Single-Compton differential cross section from the numerical amplitude (b sr^-1)."""
    kin = sc_kinematics(config, theta, phi)
    w = channel_weights(config, kin, _pol0_mode(channel, 1))
    return reduce_channels(w, channel, 1, spin)


def dsigma_tc_via_rest_frame(config, omega1, omega2, theta, phi, channel="final-summed", spin="averaged"):
    """Lab-frame triple-Compton differential cross section evaluated in the electron rest frame.

    Lab energies and angles are mapped to the rest frame, the rest-frame
    cross section is evaluated there (with the lab thresholds), and the
    result is multiplied by ``1/J``.  Returns ``(value, omega3_lab)``.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if config.frame != "lab":
        raise KinematicsError("expected a lab-frame config")
    rest, _ = boost_config_to_rest_frame(config)
    w1r, t1r = doppler_to_rest(omega1, theta[..., 0], config.gamma)
    w2r, t2r = doppler_to_rest(omega2, theta[..., 1], config.gamma)
    _, t3r = doppler_to_rest(1.0, theta[..., 2], config.gamma)
    theta_r = np.stack(np.broadcast_arrays(t1r, t2r, t3r), axis=-1)
    kin = tc_kinematics(rest, w1r, w2r, theta_r, phi)
    w = channel_weights(rest, kin, _pol0_mode(channel, 3))
    value = reduce_channels(w, channel, 3, spin)
    jac = cross_section_jacobian_J(t1r, t2r, t3r, None, gamma=config.gamma)
    with np.errstate(invalid="ignore"):
        w3, _ = doppler_to_lab(kin.omega[..., 2], t3r, config.gamma)
    return value / jac, np.where(kin.valid, w3, np.nan)


def dsigma_tc(config, legs, channel="final-summed", spin="averaged"):
    """Triple-Compton differential cross section at one point.

    ``legs`` are three :class:`~tricompton.kinematics.PhotonLeg`; the energy of
    the third is ignored and solved from closure.
    """
    theta, phi = _legs_angles(legs)
    value = float(dsigma_tc_grid(config, legs[0].omega, legs[1].omega, theta, phi, channel, spin))
    kin = tc_kinematics(config, legs[0].omega, legs[1].omega, theta, phi)
    point = {"omega": kin.omega.tolist(), "theta": theta, "phi": phi}
    return DifferentialPoint("TC", str(channel), spin, point, value, "b MeV^-2 sr^-3")


def dsigma_dc(config, legs, channel="final-summed", spin="averaged"):
    """Double-Compton differential cross section; the second leg's energy is solved."""
    theta, phi = _legs_angles(legs)
    value = float(dsigma_dc_grid(config, legs[0].omega, theta, phi, channel, spin))
    kin = dc_kinematics(config, legs[0].omega, theta, phi)
    point = {"omega": kin.omega.tolist(), "theta": theta, "phi": phi}
    return DifferentialPoint("DC", str(channel), spin, point, value, "b MeV^-1 sr^-2")


def dsigma_sc(config, theta1, phi1=0.0, channel="final-summed", spin="averaged"):
    value = float(dsigma_sc_grid(config, [theta1], [phi1], channel, spin))
    return DifferentialPoint("SC", str(channel), spin, {"theta": [theta1], "phi": [phi1]}, value, "b sr^-1")


def dsigma_sc_analytic(config, theta1, pol0, pol1, phi1=0.0):
    """Polarized Klein-Nishina cross section for an electron at rest (b sr^-1).

    ``(1/4)(alpha/m)^2 (w1/w0)^2 [w1/w0 + w0/w1 - 2 + 4 (e1.e0)^2]``, spin
    averaged.  ``pol0``/``pol1`` are basis labels (1 or 2) or explicit
    spatial 3-vectors.
    """
    m = config.m
    if abs(config.e_i - m) > 1e-12 * m:
        raise KinematicsError("analytic single-Compton formula requires E_i = m")
    w0 = config.omega0
    w1 = compton_energy(w0, theta1, m=m)
    e0 = _spatial(pol0, 0.0, 0.0)
    e1 = _spatial(pol1, theta1, phi1)
    dot = np.sum(e0 * e1, axis=-1)
    r = w1 / w0
    return 0.25 * (ALPHA / m) ** 2 * r * r * (r + 1.0 / r - 2.0 + 4.0 * dot * dot) * MEV2_TO_BARN


def dsigma_sc_analytic_summed(config, theta1):
    """Klein-Nishina cross section averaged over incoming and summed over final polarizations."""
    total = 0.0
    for a in (1, 2):
        for b in (1, 2):
            total = total + dsigma_sc_analytic(config, theta1, a, b)
    return 0.5 * total


def _spatial(pol, theta, phi):
    if isinstance(pol, (int, np.integer)):
        return np.asarray(polarization_basis(theta, phi)[pol - 1])[..., 1:]
    return np.asarray(pol, dtype=float)


# -- totals and limit formulas -------------------------------------------------


def sigma_sc_total(omega0, m=ELECTRON_MASS):
    """Klein-Nishina total cross section in barn."""
    if omega0 <= 0:
        raise ValueError("omega0 must be positive")
    w = omega0 / m
    thomson = 8.0 * np.pi * ALPHA**2 / (3.0 * m * m)
    if w < 1e-2:
        bracket = sum(c * w**k for k, c in enumerate(_THOMSON_SERIES))
        return thomson * bracket * MEV2_TO_BARN
    l2 = np.log1p(2.0 * w)
    value = (
        (1.0 + w) / w**3 * (2.0 * w * (1.0 + w) / (1.0 + 2.0 * w) - l2)
        + l2 / (2.0 * w)
        - (1.0 + 3.0 * w) / (1.0 + 2.0 * w) ** 2
    )
    return 2.0 * np.pi * ALPHA**2 / (m * m) * value * MEV2_TO_BARN


def sigma_sc_high_energy(omega0, m=ELECTRON_MASS):
    """Leading large-omega0 behaviour ``(pi alpha^2 / m omega0) ln(2 omega0 / m)`` in barn."""
    return np.pi * ALPHA**2 / (m * omega0) * np.log(2.0 * omega0 / m) * MEV2_TO_BARN


def sigma_dc_nr(omega0, m=ELECTRON_MASS, c=C_DC_NR):
    """Low-energy double-Compton total, ``C alpha^3/m^2 (omega0/m)^2`` in barn."""
    return c * ALPHA**3 / (m * m) * (omega0 / m) ** 2 * MEV2_TO_BARN


def sigma_tc_nr(omega0, m=ELECTRON_MASS, c=C_TC_NR):
    """Low-energy triple-Compton total, ``C alpha^4/m^2 (omega0/m)^4`` in barn."""
    return c * ALPHA**4 / (m * m) * (omega0 / m) ** 4 * MEV2_TO_BARN


def sigma_er(omega0, n, ratio, m=ELECTRON_MASS):
    """Extreme-relativistic multi-photon total from the single-Compton total (barn).

    ``(1/n!) [(alpha/pi) ln(2 omega0/m) ln(ratio)]^n sigma_SC`` where ``n``
    counts the soft photons beyond the first (1 for double, 2 for triple
    Compton) and ``ratio`` is the upper/lower soft-photon energy ratio.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    base = ALPHA / np.pi * np.log(2.0 * omega0 / m) * np.log(ratio)
    return base**n / factorial(n) * sigma_sc_total(omega0, m)


# -- plotted quantities ----------------------------------------------------------


def s_value(value):
    """Decadic log of a spin-averaged cross section; non-positive values are masked."""
    return np.ma.log10(np.ma.masked_less_equal(np.asarray(value, dtype=float), 0.0))


def s_grid(config, omega1, omega2, theta, phi, channel):
    """``S`` over an energy grid for one polarization channel (masked outside the allowed region)."""
    return s_value(dsigma_tc_grid(config, omega1, omega2, theta, phi, channel, "averaged"))


def s_bar_grid(config, omega1, omega2, theta, phi):
    """``S-bar``: every polarization summed, spins averaged."""
    return s_value(dsigma_tc_grid(config, omega1, omega2, theta, phi, "summed", "averaged"))


def s_bar_value(value):
    return s_value(value)
