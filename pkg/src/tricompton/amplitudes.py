"""Tree-level reduced matrix elements for n-photon Compton scattering.

The reduced amplitude for one absorbed photon (leg 0) and ``n`` emitted
photons (legs 1..n) is

    N = m^n sum_zeta ubar(p_f) eps_zeta(n) S(q_n) ... eps_zeta(1) S(q_1) eps_zeta(0) u(p_i)

with ``S(q) = (slash(q) + m) / (q^2 - m^2)`` and ``q_k`` the electron momentum
after the first ``k`` vertices of the ordering ``zeta``.  The production
kernel groups the (n+1)! orderings by the set of vertices already attached,
so every partial chain ``eps S eps ... u`` is computed once and shared by all
orderings with that prefix set.  :func:`reduced_amplitude_reference` sums the
orderings one by one with full 4x4 matrix products and serves as the
independent cross-check.
"""

from itertools import permutations

import numpy as np

from . import _kernel
from .constants import ELECTRON_MASS
from .dirac import bispinors, dirac_adjoint, feynman_slash, minkowski_square


class OnResonanceError(ValueError):
    """An internal electron propagator went on shell."""


PERMUTATIONS = {n: tuple(permutations(range(n + 1))) for n in (1, 2, 3)}


def propagator_momentum(zeta, n, p_i, momenta):
    """Electron momentum after the first ``n`` vertices of ordering ``zeta``.

    ``momenta[0]`` is the absorbed photon (adds), the others are emitted
    (subtract).
    """
    q = np.asarray(p_i, dtype=float).copy()
    for j in zeta[:n]:
        k = np.asarray(momenta[j], dtype=float)
        q = q + k if j == 0 else q - k
    return q


def _subset_momentum(mask, p_i, momenta):
    q = np.asarray(p_i, dtype=float)
    for j, k in enumerate(momenta):
        if mask >> j & 1:
            q = q + k if j == 0 else q - k
    return q


def _matvec(mat, vec):
    # mat (..., 4, 4), vec (..., 4); broadcasting elementwise product beats
    # batched matmul for 4x4 operands.
    out = mat[..., :, 0] * vec[..., 0:1]
    for b in range(1, 4):
        out = out + mat[..., :, b] * vec[..., b : b + 1]
    return out


def _check_resonance(den, m):
    if np.any(np.abs(den) < 1e-12 * m * m):
        raise OnResonanceError("propagator denominator vanishes")


def amplitude_tensor(p_i, p_f, momenta, polarizations, m=ELECTRON_MASS, backend="auto"):
    """Reduced amplitudes for every polarization and spin combination.

    Parameters
    ----------
    p_i, p_f : ndarray, shape (..., 4)
        On-shell incoming and outgoing electron momenta.
    momenta : sequence of ndarray, shape (..., 4)
        ``[k0, k1, ..., kn]``; ``k0`` absorbed, the rest emitted.
    polarizations : sequence of ndarray, shape (..., L_j, 4)
        Candidate polarization vectors for each leg.
    m : float
        Electron mass.
    backend : {"auto", "numba", "numpy"}
        ``"auto"`` uses the compiled kernel when numba is importable.

    Returns
    -------
    ndarray, shape (..., L_0, ..., L_n, 2, 2)
        ``N`` indexed by the polarization choices, then ``r_i``, then ``r_f``.
    """
    n_legs = len(momenta)
    if len(polarizations) != n_legs or n_legs < 2:
        raise ValueError("need matching momenta and polarizations for >= 2 legs")
    if backend == "numba" or (backend == "auto" and _kernel.HAVE_NUMBA):
        return _amplitude_tensor_compiled(p_i, p_f, momenta, polarizations, m)
    p_i = np.asarray(p_i, dtype=float)
    p_f = np.asarray(p_f, dtype=float)
    momenta = [np.asarray(k, dtype=float) for k in momenta]

    # vertex matrices placed on their own polarization axis
    vertices = []
    for j, eps in enumerate(polarizations):
        slash = feynman_slash(np.asarray(eps))  # (..., L_j, 4, 4)
        lead = slash.shape[:-3]
        shape = list(lead) + [1] * n_legs + [1, 4, 4]
        shape[len(lead) + j] = slash.shape[-3]
        vertices.append(slash.reshape(shape))

    pad = (1,) * (n_legs + 1)
    u_i = bispinors(p_i, m)  # (..., 2, 4)
    u_i = u_i.reshape(u_i.shape[:-2] + (1,) * n_legs + (2, 4))

    full = (1 << n_legs) - 1
    identity = np.eye(4)
    chains = {}
    for j in range(n_legs):
        chains[1 << j] = _matvec(vertices[j], u_i)
    for size in range(2, n_legs + 1):
        for mask in range(1, full + 1):
            if bin(mask).count("1") != size:
                continue
            total = None
            for j in range(n_legs):
                if not mask >> j & 1:
                    continue
                rest = mask & ~(1 << j)
                q = _subset_momentum(rest, p_i, momenta)
                den = minkowski_square(q) - m * m
                _check_resonance(den, m)
                prop = (feynman_slash(q) + m * identity) / den[..., None, None]
                prop = prop.reshape(prop.shape[:-2] + pad + (4, 4))
                term = _matvec(vertices[j], _matvec(prop, chains[rest]))
                total = term if total is None else total + term
            chains[mask] = total

    ubar_f = dirac_adjoint(bispinors(p_f, m))  # (..., 2, 4)
    ubar_f = ubar_f.reshape(ubar_f.shape[:-2] + (1,) * n_legs + (1, 2, 4))
    top = chains[full][..., :, None, :]  # (..., pols, r_i, 1, 4)
    amp = np.sum(top * ubar_f, axis=-1)
    return m ** (n_legs - 1) * amp


def _amplitude_tensor_compiled(p_i, p_f, momenta, polarizations, m):
    n_legs = len(momenta)
    pols = [np.asarray(e, dtype=complex) for e in polarizations]
    n_pols = tuple(e.shape[-2] for e in pols)
    lead = np.broadcast_shapes(
        np.shape(p_i)[:-1],
        np.shape(p_f)[:-1],
        *[np.shape(k)[:-1] for k in momenta],
        *[e.shape[:-2] for e in pols],
    )
    n_points = int(np.prod(lead, dtype=np.int64))
    flat = lambda a: np.ascontiguousarray(
        np.broadcast_to(np.asarray(a, dtype=float), lead + (4,)).reshape(n_points, 4)
    )
    max_pol = max(n_pols)
    eps = np.zeros((n_points, n_legs, max_pol, 4), dtype=complex)
    for j, e in enumerate(pols):
        eps[:, j, : n_pols[j]] = np.broadcast_to(e, lead + e.shape[-2:]).reshape(n_points, n_pols[j], 4)
    moms = np.stack([flat(k) for k in momenta], axis=1)
    plan = _kernel.build_plan(n_pols)
    out = np.empty((n_points, plan["size"][plan["full"]], 2, 2), dtype=complex)
    status = _kernel.amplitude_kernel(
        flat(p_i), flat(p_f), moms, eps, float(m), n_legs, plan["full"], plan["order"],
        plan["offset"], plan["size"], plan["total"], plan["t_dst"], plan["t_src"],
        plan["t_rest"], plan["t_leg"], plan["t_pol"], out,
    )  # fmt: skip
    if status:
        raise OnResonanceError("propagator denominator vanishes")
    return out.reshape(lead + n_pols + (2, 2))


def reduced_amplitude_reference(p_i, r_i, p_f, r_f, momenta, polarizations, m=ELECTRON_MASS):
    """Single-point amplitude from explicit per-ordering 4x4 matrix products.

    Independent of :func:`amplitude_tensor`: every one of the (n+1)!
    orderings builds its own full matrix product left to right and is
    contracted with the spinors at the end.
    """
    n_legs = len(momenta)
    u = bispinors(np.asarray(p_i, dtype=float), m)[r_i - 1]
    ubar = dirac_adjoint(bispinors(np.asarray(p_f, dtype=float), m)[r_f - 1])
    slashes = [feynman_slash(np.asarray(e)) for e in polarizations]
    total = 0.0 + 0.0j
    for zeta in permutations(range(n_legs)):
        mat = np.eye(4, dtype=complex)
        for pos in range(n_legs - 1, 0, -1):
            q = propagator_momentum(zeta, pos, p_i, momenta)
            den = q[0] ** 2 - q[1] ** 2 - q[2] ** 2 - q[3] ** 2 - m * m
            mat = mat @ slashes[zeta[pos]] @ ((feynman_slash(q) + m * np.eye(4)) / den)
        mat = mat @ slashes[zeta[0]]
        total += ubar @ mat @ u
    return m ** (n_legs - 1) * total


def _single(p_i, r_i, p_f, r_f, momenta, polarizations, m):
    pols = [np.asarray(e, dtype=complex)[None, :] for e in polarizations]
    amp = amplitude_tensor(p_i, p_f, momenta, pols, m)
    return complex(amp[(0,) * len(momenta) + (r_i - 1, r_f - 1)])


def n_tc(p_i, r_i, p_f, r_f, momenta, polarizations, m=ELECTRON_MASS):
    """Triple-Compton reduced amplitude for fixed spins and polarizations.

    ``momenta`` and ``polarizations`` list the four legs ``k0, k1, k2, k3``.
    """
    if len(momenta) != 4:
        raise ValueError("triple Compton needs four photon legs")
    return _single(p_i, r_i, p_f, r_f, momenta, polarizations, m)


def n_dc(p_i, r_i, p_f, r_f, momenta, polarizations, m=ELECTRON_MASS):
    """Double-Compton reduced amplitude (legs ``k0, k1, k2``)."""
    if len(momenta) != 3:
        raise ValueError("double Compton needs three photon legs")
    return _single(p_i, r_i, p_f, r_f, momenta, polarizations, m)


def n_sc(p_i, r_i, p_f, r_f, momenta, polarizations, m=ELECTRON_MASS):
    """Single-Compton reduced amplitude (legs ``k0, k1``)."""
    if len(momenta) != 2:
        raise ValueError("single Compton needs two photon legs")
    return _single(p_i, r_i, p_f, r_f, momenta, polarizations, m)
