"""Dirac-representation gamma matrices, Feynman slash and electron bispinors.

Four-vectors are plain float arrays with a trailing axis of length 4 holding
``(t, x, y, z)``; every function broadcasts over leading axes.
"""

import numpy as np

from .constants import ELECTRON_MASS

METRIC = np.array([1.0, -1.0, -1.0, -1.0])

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

_I2 = np.eye(2, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)

GAMMA = np.array(
    [np.block([[_I2, _Z2], [_Z2, -_I2]])]
    + [np.block([[_Z2, s], [-s, _Z2]]) for s in SIGMA]
)
IDENTITY = np.eye(4, dtype=complex)

# gamma^mu with lowered index, so that slash(a) = a^mu * GAMMA_LOWER[mu]
GAMMA_LOWER = GAMMA * METRIC[:, None, None]


def minkowski_dot(a, b):
    """Minkowski product ``a0*b0 - a.b`` over the last axis."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 0] - np.sum(a[..., 1:] * b[..., 1:], axis=-1)


def minkowski_square(a):
    return minkowski_dot(a, a)


def feynman_slash(a):
    """Return ``a^0 gamma^0 - a.gamma`` as a (..., 4, 4) complex array."""
    a = np.asarray(a)
    return np.tensordot(a, GAMMA_LOWER, axes=([-1], [0]))


def bispinor(p, r, m=ELECTRON_MASS):
    """Positive-energy spinor ``u_r(p)`` normalized to ``ubar u = 1``.

    Parameters
    ----------
    p : array_like, shape (..., 4)
        On-shell electron momentum.
    r : {1, 2}
        Spin label.
    m : float
        Electron mass.
    """
    if r not in (1, 2):
        raise ValueError(f"spin label must be 1 or 2, got {r!r}")
    p = np.asarray(p, dtype=float)
    energy = p[..., 0]
    if np.any(energy < m * (1.0 - 1e-12)):
        raise ValueError("bispinor requires E >= m (on-shell, positive energy)")
    chi = np.zeros(2, dtype=complex)
    chi[r - 1] = 1.0
    # sigma.p chi, shape (..., 2)
    sigma_p = np.tensordot(p[..., 1:], SIGMA, axes=([-1], [0]))
    lower = (sigma_p @ chi) / (energy + m)[..., None]
    upper = np.broadcast_to(chi, lower.shape)
    norm = np.sqrt((energy + m) / (2.0 * m))[..., None]
    return norm * np.concatenate([upper, lower], axis=-1)


def bispinors(p, m=ELECTRON_MASS):
    """Both spin states stacked on a new axis: shape (..., 2, 4)."""
    return np.stack([bispinor(p, 1, m), bispinor(p, 2, m)], axis=-2)


def dirac_adjoint(u):
    """Row spinor ``u^dagger gamma^0``."""
    u = np.asarray(u)
    return np.conj(u) * np.array([1.0, 1.0, -1.0, -1.0])


def anticommutator(a, b):
    return a @ b + b @ a
