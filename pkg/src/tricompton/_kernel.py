"""Compiled amplitude kernel.

Same algorithm as :func:`tricompton.amplitudes.amplitude_tensor` (partial
chains shared across orderings with equal prefix sets), written as explicit
per-point loops for numba.  The evaluation plan (which partial chains feed
which) depends only on the number of legs and polarization choices per leg
and is built once in Python.
"""

from functools import lru_cache

import numpy as np

try:
    import numba

    # no "nnan"/"ninf": the resonance guard relies on NaN propagation
    _njit = numba.njit(
        cache=True, nogil=True, error_model="numpy", fastmath={"nsz", "arcp", "contract", "afn", "reassoc"}
    )
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def _njit(f):
        return f


@lru_cache(maxsize=None)
def build_plan(n_pols):
    """Index tables for the chain recursion.

    Parameters
    ----------
    n_pols : tuple of int
        Number of polarization vectors supplied for each leg.
    """
    n_legs = len(n_pols)
    full = (1 << n_legs) - 1
    masks = sorted(range(1, full + 1), key=lambda s: (bin(s).count("1"), s))

    def legs_of(mask):
        return [j for j in range(n_legs) if mask >> j & 1]

    def ncombo(mask):
        out = 1
        for j in legs_of(mask):
            out *= n_pols[j]
        return out

    def decode(mask, c):
        # C order over legs of the mask, last leg fastest
        ls = {}
        for j in reversed(legs_of(mask)):
            ls[j] = c % n_pols[j]
            c //= n_pols[j]
        return ls

    def encode(mask, ls):
        c = 0
        for j in legs_of(mask):
            c = c * n_pols[j] + ls[j]
        return c

    offset = np.zeros(full + 1, dtype=np.int64)
    size = np.zeros(full + 1, dtype=np.int64)
    pos = 0
    for mask in masks:
        offset[mask] = pos
        size[mask] = ncombo(mask)
        pos += size[mask]

    # terms: chain[mask][c] += V[leg, l] @ Y[rest][c_rest]   (Y = u for rest = 0)
    t_dst, t_src, t_rest, t_leg, t_pol = [], [], [], [], []
    for mask in masks:
        for c in range(ncombo(mask)):
            ls = decode(mask, c)
            for j in legs_of(mask):
                rest = mask & ~(1 << j)
                rest_ls = {i: ls[i] for i in legs_of(rest)}
                t_dst.append(offset[mask] + c)
                t_src.append(offset[rest] + encode(rest, rest_ls) if rest else -1)
                t_rest.append(rest)
                t_leg.append(j)
                t_pol.append(ls[j])
    # masks whose chains feed a propagator, in evaluation order
    order = np.array(masks, dtype=np.int64)
    return {
        "n_legs": n_legs,
        "full": full,
        "order": order,
        "offset": offset,
        "size": size,
        "total": pos,
        "t_dst": np.array(t_dst, dtype=np.int64),
        "t_src": np.array(t_src, dtype=np.int64),
        "t_rest": np.array(t_rest, dtype=np.int64),
        "t_leg": np.array(t_leg, dtype=np.int64),
        "t_pol": np.array(t_pol, dtype=np.int64),
    }


@_njit
def _apply_slash(a0, s00, s01, s10, c0, v, out):
    # [[a0 + c0, -A], [A, -a0 + c0]] v with A = a.sigma = [[s00, s01], [s10, -s00]]
    v0, v1, v2, v3 = v[0], v[1], v[2], v[3]
    out[0] = (a0 + c0) * v0 - (s00 * v2 + s01 * v3)
    out[1] = (a0 + c0) * v1 - (s10 * v2 - s00 * v3)
    out[2] = s00 * v0 + s01 * v1 + (c0 - a0) * v2
    out[3] = s10 * v0 - s00 * v1 + (c0 - a0) * v3


@_njit
def _spinors(p, m, out):
    e = p[0]
    norm = np.sqrt((e + m) / (2.0 * m))
    px, py, pz = p[1], p[2], p[3]
    inv = 1.0 / (e + m)
    # r = 1: chi = (1, 0); sigma.p chi = (pz, px + i py)
    out[0, 0] = norm
    out[0, 1] = 0.0
    out[0, 2] = norm * pz * inv
    out[0, 3] = norm * (px + 1j * py) * inv
    # r = 2: chi = (0, 1); sigma.p chi = (px - i py, -pz)
    out[1, 0] = 0.0
    out[1, 1] = norm
    out[1, 2] = norm * (px - 1j * py) * inv
    out[1, 3] = -norm * pz * inv


@_njit
def amplitude_kernel(
    p_i, p_f, momenta, eps, m, n_legs, full, order, offset, size, total,
    t_dst, t_src, t_rest, t_leg, t_pol, out,
):  # fmt: skip
    n_points = p_i.shape[0]
    max_pol = eps.shape[2]
    # slash(a) is stored as (a0, a.sigma entries s00, s01, s10)
    vert = np.empty((n_legs, max_pol, 4), dtype=np.complex128)
    prop = np.empty((full + 1, 5))  # q0, qz, qx, qy, 1/den
    chain = np.empty((total, 2, 4), dtype=np.complex128)
    ychain = np.empty((total, 2, 4), dtype=np.complex128)
    u_i = np.empty((2, 4), dtype=np.complex128)
    u_f = np.empty((2, 4), dtype=np.complex128)
    tmp = np.empty(4, dtype=np.complex128)
    q = np.empty(4)
    n_terms = t_dst.shape[0]
    prefactor = m ** (n_legs - 1)
    resonance = 1e-12 * m * m
    status = 0
    for b in range(n_points):
        for j in range(n_legs):
            for l in range(max_pol):
                e = eps[b, j, l]
                vert[j, l, 0] = e[0]
                vert[j, l, 1] = e[3]
                vert[j, l, 2] = e[1] - 1j * e[2]
                vert[j, l, 3] = e[1] + 1j * e[2]
        # propagators for every proper non-empty subset
        for mask in range(1, full):
            for c in range(4):
                q[c] = p_i[b, c]
            for j in range(n_legs):
                if (mask >> j) & 1:
                    sign = 1.0 if j == 0 else -1.0
                    for c in range(4):
                        q[c] += sign * momenta[b, j, c]
            den = q[0] * q[0] - q[1] * q[1] - q[2] * q[2] - q[3] * q[3] - m * m
            if abs(den) < resonance:
                status = 1
                den = np.nan
            prop[mask, 0] = q[0]
            prop[mask, 1] = q[3]
            prop[mask, 2] = q[1]
            prop[mask, 3] = q[2]
            prop[mask, 4] = 1.0 / den
        _spinors(p_i[b], m, u_i)
        _spinors(p_f[b], m, u_f)
        for c in range(total):
            for r in range(2):
                for i in range(4):
                    chain[c, r, i] = 0.0
        # walk terms; masks are visited in popcount order so every source is final
        t = 0
        for idx in range(order.shape[0]):
            mask = order[idx]
            while t < n_terms and t_dst[t] < offset[mask] + size[mask]:
                vt = vert[t_leg[t], t_pol[t]]
                dst = t_dst[t]
                src = t_src[t]
                for r in range(2):
                    if src < 0:
                        _apply_slash(vt[0], vt[1], vt[2], vt[3], 0.0, u_i[r], tmp)
                    else:
                        _apply_slash(vt[0], vt[1], vt[2], vt[3], 0.0, ychain[src, r], tmp)
                    for i in range(4):
                        chain[dst, r, i] += tmp[i]
                t += 1
            if mask != full:
                base = offset[mask]
                q0 = prop[mask, 0]
                qz = prop[mask, 1]
                s01 = prop[mask, 2] - 1j * prop[mask, 3]
                s10 = prop[mask, 2] + 1j * prop[mask, 3]
                inv = prop[mask, 4]
                for c in range(size[mask]):
                    for r in range(2):
                        _apply_slash(q0 + 0j, qz + 0j, s01, s10, m, chain[base + c, r], tmp)
                        for i in range(4):
                            ychain[base + c, r, i] = tmp[i] * inv
        base = offset[full]
        for c in range(size[full]):
            for ri in range(2):
                for rf in range(2):
                    # ubar = conj(u) gamma0
                    acc = 0.0j
                    for k in range(4):
                        g = 1.0 if k < 2 else -1.0
                        acc += g * np.conj(u_f[rf, k]) * chain[base + c, ri, k]
                    out[b, c, ri, rf] = prefactor * acc
    return status
