"""Photon and electron kinematics for head-on photon-electron collisions.

The incoming photon travels along +z, ``k0 = omega0 (1, 0, 0, 1)``, and the
incoming electron along -z.  Angles are in radians.  Low-level helpers take
and return arrays and broadcast over leading axes; :class:`ScatterConfig`
and :class:`PhotonLeg` are the single-point conveniences built on them.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .constants import ELECTRON_MASS
from .dirac import minkowski_dot


class KinematicsError(ValueError):
    """Invalid or degenerate kinematic input."""


class DegenerateKinematicsError(KinematicsError):
    """Energy-closure denominator vanishes (measure-zero configuration)."""


def photon_direction(theta, phi):
    """Null direction ``n = (1, sin t cos p, sin t sin p, cos t)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack(
        np.broadcast_arrays(np.ones_like(theta * phi), st * np.cos(phi), st * np.sin(phi), np.cos(theta)),
        axis=-1,
    )


def photon_four_vector(omega, theta, phi):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise KinematicsError("photon energy must be positive")
    return omega[..., None] * photon_direction(theta, phi)


def polarization_basis(theta, phi):
    """Linear polarization vectors ``(eps1, eps2)`` transverse to ``n(theta, phi)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    zero = np.zeros(np.broadcast(theta, phi).shape)
    eps1 = np.stack(np.broadcast_arrays(zero, ct * cp, ct * sp, -st), axis=-1)
    eps2 = np.stack(np.broadcast_arrays(zero, -sp, cp, zero), axis=-1)
    return eps1, eps2


def electron_momentum(e_i, m=ELECTRON_MASS):
    """Incoming electron moving along -z with energy ``e_i``."""
    if e_i < m * (1.0 - 1e-12):
        raise KinematicsError(f"electron energy {e_i} below mass {m}")
    return np.array([e_i, 0.0, 0.0, -np.sqrt(max(e_i * e_i - m * m, 0.0))])


def solve_last_omega(p_i, k0, known, n_last, degenerate="raise"):
    """Energy of the last emitted photon fixed by four-momentum closure.

    Solves ``(p_i + k0 - sum(known) - omega n_last)^2 = m^2`` for omega, i.e.
    ``[p_i.(K - k0) + k0.K - K^2/2] / [n_last.(K - k0 - p_i)]`` with
    ``K = sum(known)``.  For two known photons ``K^2/2 = k1.k2``.

    ``degenerate`` selects the handling of a vanishing denominator:
    ``"raise"`` or ``"nan"``.
    """
    p_i = np.asarray(p_i, dtype=float)
    k0 = np.asarray(k0, dtype=float)
    total = sum((np.asarray(k, dtype=float) for k in known), np.zeros(4))
    if len(known) == 2:
        half_k2 = minkowski_dot(known[0], known[1])
    else:
        half_k2 = 0.5 * minkowski_dot(total, total)
    num = minkowski_dot(p_i, total - k0) + minkowski_dot(k0, total) - half_k2
    den = minkowski_dot(n_last, total - k0 - p_i)
    scale = 1e-12 * (p_i[..., 0] + k0[..., 0])
    bad = np.abs(den) < scale
    if np.any(bad):
        if degenerate == "raise":
            raise DegenerateKinematicsError("energy closure denominator vanishes")
        den = np.where(bad, np.nan, den)
    return num / den


def final_electron(p_i, k0, *emitted):
    """``p_f = p_i + k0 - sum(emitted)``."""
    out = np.asarray(p_i, dtype=float) + np.asarray(k0, dtype=float)
    for k in emitted:
        out = out - np.asarray(k, dtype=float)
    return out


def energy_jacobian(p_i, k0, known, n_last, omega_last, e_f):
    """``d(E_f + omega_last)/d omega_last`` at fixed emission angles.

    Equals ``1 + [n_last.(K - k0 - p_i) (spatial) + omega_last] / E_f``.
    """
    e_f = np.asarray(e_f, dtype=float)
    if np.any(e_f == 0):
        raise KinematicsError("final electron energy vanishes")
    total = sum((np.asarray(k, dtype=float) for k in known), np.zeros(4))
    vec = total[..., 1:] - np.asarray(k0)[..., 1:] - np.asarray(p_i)[..., 1:]
    proj = np.sum(np.asarray(n_last)[..., 1:] * vec, axis=-1)
    return 1.0 + (proj + omega_last) / e_f


def omega_j_max(p_i, k0, k_spectator, n_j, n_3, cutoff, degenerate="raise"):
    """Energy of photon ``j`` at which the closure photon sits at ``cutoff``.

    ``[eps n3.(k_l - p_i - k0) + p_i.k0 - k_l.(p_i + k0)] / n_j.(p_i + k0 - k_l - eps n3)``.
    A non-positive denominator means the threshold cannot be reached.
    """
    p_i = np.asarray(p_i, dtype=float)
    k0 = np.asarray(k0, dtype=float)
    k_l = np.asarray(k_spectator, dtype=float)
    n_3 = np.asarray(n_3, dtype=float)
    cutoff = np.asarray(cutoff, dtype=float)
    num = (
        cutoff * minkowski_dot(n_3, k_l - p_i - k0)
        + minkowski_dot(p_i, k0)
        - minkowski_dot(k_l, p_i + k0)
    )
    den = minkowski_dot(n_j, p_i + k0 - k_l - cutoff[..., None] * n_3)
    bad = den <= 0
    if np.any(bad):
        if degenerate == "raise":
            raise KinematicsError("threshold unreachable: non-positive denominator")
        den = np.where(bad, np.nan, den)
    return num / den


def omega_max_two_photon(p_i, k0, n_1, n_2, cutoff):
    """Largest ``omega_1`` with the second (closure) photon above ``cutoff``."""
    p_i = np.asarray(p_i, dtype=float)
    k0 = np.asarray(k0, dtype=float)
    cutoff = np.asarray(cutoff, dtype=float)
    # (p_i + k0 - w1 n1 - eps n2)^2 = m^2, linear in w1
    a = p_i + k0 - cutoff[..., None] * np.asarray(n_2)
    num = 0.5 * (minkowski_dot(a, a) - minkowski_dot(p_i, p_i))
    den = minkowski_dot(np.asarray(n_1), a)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def compton_energy(omega0, theta, e_i=ELECTRON_MASS, m=ELECTRON_MASS):
    """Single-Compton photon energy at polar angle ``theta`` (head-on)."""
    p_i = electron_momentum(e_i, m)
    k0 = np.array([omega0, 0.0, 0.0, omega0])
    n = photon_direction(theta, 0.0)
    return minkowski_dot(p_i, k0) / minkowski_dot(n, p_i + k0)


# -- boosts along z ------------------------------------------------------------


def boost_z(vec, beta):
    """Active boost ``x' = (gamma (t + beta z), x, y, gamma (z + beta t))``.

    With ``beta = beta_i`` this maps the lab frame (electron moving along -z)
    to the electron rest frame.
    """
    vec = np.asarray(vec, dtype=float)
    gamma = 1.0 / np.sqrt(1.0 - beta * beta)
    t, z = vec[..., 0], vec[..., 3]
    out = vec.copy()
    out[..., 0] = gamma * (t + beta * z)
    out[..., 3] = gamma * (z + beta * t)
    return out


def _gamma_beta(gamma):
    return gamma, beta_from_gamma(gamma)


def _doppler_factor(theta_r, gamma, beta):
    """``gamma (1 - beta cos theta')`` in a cancellation-free form."""
    s = np.sin(0.5 * np.asarray(theta_r, dtype=float))
    return gamma * (1.0 / (gamma * gamma * (1.0 + beta)) + 2.0 * beta * s * s)


def doppler_to_rest(omega, theta, gamma):
    """Lab photon ``(omega, theta)`` seen from the electron rest frame.

    Uses the half-angle aberration ``tan(theta'/2) = tan(theta/2) / (gamma (1 + beta))``
    so that photons within ``1/gamma`` of the beam axis keep full precision.
    """
    gamma, beta = _gamma_beta(gamma)
    theta_r = 2.0 * np.arctan(np.tan(0.5 * np.asarray(theta, dtype=float)) / (gamma * (1.0 + beta)))
    omega_r = np.asarray(omega, dtype=float) / _doppler_factor(theta_r, gamma, beta)
    return omega_r, theta_r


def doppler_to_lab(omega_r, theta_r, gamma):
    """Inverse of :func:`doppler_to_rest`."""
    gamma, beta = _gamma_beta(gamma)
    theta_r = np.asarray(theta_r, dtype=float)
    theta = 2.0 * np.arctan(np.tan(0.5 * theta_r) * gamma * (1.0 + beta))
    omega = np.asarray(omega_r, dtype=float) * _doppler_factor(theta_r, gamma, beta)
    return omega, theta


def beta_from_gamma(gamma):
    return np.sqrt(max(1.0 - 1.0 / (gamma * gamma), 0.0))


def cross_section_jacobian_J(theta1, theta2, theta3, beta, gamma=None):
    """Lab/rest Jacobian for cross sections differential in 3 angles and 2 energies.

    ``(1 - beta^2)^2 / [(1 - beta c1)(1 - beta c2)(1 - beta c3)^2]`` with
    rest-frame angles.  Passing ``gamma`` switches to the cancellation-free
    form ``1 / (D1 D2 D3^2)``, ``D = gamma (1 - beta cos theta')``, which
    stays accurate for ``gamma >> 1``.
    """
    if gamma is not None:
        g, b = _gamma_beta(gamma)
        d = [_doppler_factor(t, g, b) for t in (theta1, theta2, theta3)]
        return 1.0 / (d[0] * d[1] * d[2] ** 2)
    one_b2 = 1.0 - beta * beta
    d1 = 1.0 - beta * np.cos(theta1)
    d2 = 1.0 - beta * np.cos(theta2)
    d3 = 1.0 - beta * np.cos(theta3)
    return one_b2**2 / (d1 * d2 * d3**2)


def cross_section_jacobian_Jtilde(*thetas, beta=None, gamma=None):
    """Lab/rest Jacobian for cross sections differential in angles only.

    ``(1 - beta^2)^n / prod_j (1 - beta cos theta'_j)^2`` for ``n`` photons
    (``n = 3`` reproduces the triple-emission form); ``gamma`` selects the
    stable form ``1 / prod D_j^2``.
    """
    if gamma is not None:
        g, b = _gamma_beta(gamma)
        out = 1.0
        for th in thetas:
            out = out / _doppler_factor(th, g, b) ** 2
        return out
    if beta is None:
        raise ValueError("need beta or gamma")
    out = (1.0 - beta * beta) ** len(thetas)
    for th in thetas:
        out = out / (1.0 - beta * np.cos(th)) ** 2
    return out


def lab_threshold_pass(omega_r, theta_r, beta, gamma, cutoff):
    """True where the lab-frame energy ``gamma (1 - beta cos theta') omega'`` exceeds ``cutoff``."""
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    return gamma * (1.0 - beta * np.cos(theta_r)) * omega_r > cutoff


# -- single-point conveniences -------------------------------------------------


@dataclass(frozen=True)
class ScatterConfig:
    """Beam and detector-threshold definition.

    ``frame`` names the frame the numbers refer to.  A ``"rest"`` config
    produced by :func:`boost_config_to_rest_frame` keeps the lab-frame
    ``cutoff`` and records the lab electron ``lab_gamma`` so thresholds are
    applied to lab energies.
    """

    omega0: float
    e_i: float
    cutoff: float
    polarization0: object = 1
    frame: str = "lab"
    lab_gamma: float = 1.0
    m: float = ELECTRON_MASS

    def __post_init__(self):
        if not self.omega0 > 0:
            raise KinematicsError("omega0 must be positive")
        if self.e_i < self.m * (1.0 - 1e-12):
            raise KinematicsError(f"E_i = {self.e_i} MeV is below the electron mass")
        if self.frame not in ("lab", "rest"):
            raise KinematicsError(f"unknown frame {self.frame!r}")
        if self.frame == "rest" and abs(self.e_i - self.m) > 1e-12 * self.m:
            raise KinematicsError("rest-frame config requires E_i = m")
        lab_omega0, lab_e = self.lab_beam()
        if not 0 < self.cutoff < lab_omega0 + lab_e - self.m:
            raise KinematicsError(
                f"cutoff {self.cutoff} outside (0, {lab_omega0 + lab_e - self.m})"
            )

    @property
    def gamma(self):
        return self.e_i / self.m

    @property
    def beta(self):
        return beta_from_gamma(self.gamma)

    @property
    def lab_beta(self):
        return beta_from_gamma(self.lab_gamma)

    def p_i(self):
        return electron_momentum(self.e_i, self.m)

    def k0(self):
        return np.array([self.omega0, 0.0, 0.0, self.omega0])

    def eps0(self):
        """Incoming polarization four-vector (labels refer to the theta=0, phi=0 basis)."""
        return _resolve_polarization(self.polarization0, 0.0, 0.0)

    def lab_beam(self):
        """Lab-frame ``(omega0, E_i)``."""
        if self.frame == "lab":
            return self.omega0, self.e_i
        return self.omega0 * _doppler_factor(0.0, self.lab_gamma, self.lab_beta), self.lab_gamma * self.m

    def thresholds(self, theta):
        """Per-leg thresholds in this config's frame for emission angle ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if self.frame == "lab":
            return np.full(theta.shape, self.cutoff)
        return self.cutoff / _doppler_factor(theta, self.lab_gamma, self.lab_beta)


def _resolve_polarization(pol, theta, phi):
    if isinstance(pol, (int, np.integer)):
        if pol not in (1, 2):
            raise KinematicsError(f"polarization label must be 1 or 2, got {pol}")
        return polarization_basis(theta, phi)[pol - 1]
    vec = np.asarray(pol, dtype=complex)
    if vec.shape != (4,):
        raise KinematicsError("explicit polarization must be a four-vector")
    return vec


@dataclass(frozen=True)
class PhotonLeg:
    """An emitted photon: energy (MeV), polar angle, azimuth, polarization."""

    omega: float
    theta: float
    phi: float
    polarization: object = field(default=1, compare=False)

    def direction(self):
        return photon_direction(self.theta, self.phi)

    def momentum(self):
        return photon_four_vector(self.omega, self.theta, self.phi)

    def eps(self):
        return _resolve_polarization(self.polarization, self.theta, self.phi)

    def with_omega(self, omega):
        return replace(self, omega=omega)


def solve_omega3(config, leg1, leg2, direction3):
    """Closure energy of photon 3 given photons 1, 2 and the direction of 3."""
    theta3, phi3 = direction3
    k1 = omega_or_zero(leg1)
    k2 = omega_or_zero(leg2)
    return float(
        solve_last_omega(config.p_i(), config.k0(), [k1, k2], photon_direction(theta3, phi3))
    )


def omega_or_zero(leg):
    """Four-momentum of a leg, allowing ``omega = 0`` (soft limit)."""
    if leg.omega < 0:
        raise KinematicsError("photon energy must be non-negative")
    return leg.omega * leg.direction()


def boost_config_to_rest_frame(config, legs=()):
    """Transform a lab config (and photon legs) to the electron rest frame."""
    if config.frame == "rest":
        return config, tuple(legs)
    beta = config.beta
    omega0_r, _ = doppler_to_rest(config.omega0, 0.0, config.gamma)
    pol0 = config.polarization0
    if not isinstance(pol0, (int, np.integer)):
        pol0 = tuple(boost_z(np.real(np.asarray(pol0)), beta))
    rest = ScatterConfig(
        omega0=float(omega0_r),
        e_i=config.m,
        cutoff=config.cutoff,
        polarization0=pol0,
        frame="rest",
        lab_gamma=config.gamma,
        m=config.m,
    )
    new_legs = []
    for leg in legs:
        w, th = doppler_to_rest(leg.omega, leg.theta, config.gamma)
        pol = leg.polarization
        if not isinstance(pol, (int, np.integer)):
            pol = tuple(boost_z(np.real(np.asarray(pol)), beta))
        new_legs.append(PhotonLeg(float(w), float(th), leg.phi, pol))
    return rest, tuple(new_legs)


def boost_config_to_lab_frame(config, legs=()):
    """Inverse of :func:`boost_config_to_rest_frame`."""
    if config.frame == "lab":
        return config, tuple(legs)
    beta = config.lab_beta
    omega0, _ = doppler_to_lab(config.omega0, 0.0, config.lab_gamma)
    pol0 = config.polarization0
    if not isinstance(pol0, (int, np.integer)):
        pol0 = tuple(boost_z(np.real(np.asarray(pol0)), -beta))
    lab = ScatterConfig(
        omega0=float(omega0),
        e_i=config.lab_gamma * config.m,
        cutoff=config.cutoff,
        polarization0=pol0,
        frame="lab",
        m=config.m,
    )
    new_legs = []
    for leg in legs:
        w, th = doppler_to_lab(leg.omega, leg.theta, config.lab_gamma)
        pol = leg.polarization
        if not isinstance(pol, (int, np.integer)):
            pol = tuple(boost_z(np.real(np.asarray(pol)), -beta))
        new_legs.append(PhotonLeg(float(w), float(th), leg.phi, pol))
    return lab, tuple(new_legs)


def mercedes(theta, n=3):
    """Detector azimuths ``phi_j = 2 j pi / 3`` with a common polar angle."""
    return [(theta, 2.0 * j * np.pi / 3.0) for j in range(1, n + 1)]
