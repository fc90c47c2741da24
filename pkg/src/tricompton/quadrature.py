"""Energy integration (Romberg) and Monte Carlo integration over emission angles.

Energies are integrated in ``u = ln(omega)`` so the soft-photon ``1/omega``
shape becomes flat.  Every Romberg row converges on its own, which makes a
sample's integral independent of which other samples share its batch; the
Monte Carlo totals are therefore bitwise reproducible for any sharding.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import xsec
from .kinematics import (
    boost_config_to_rest_frame,
    cross_section_jacobian_Jtilde,
    doppler_to_rest,
    omega_j_max,
    omega_max_two_photon,
    photon_direction,
)

DEFAULT_REL_TOL = 1e-6
DEFAULT_MAX_LEVEL = 12
TOTAL_REL_TOL = 1e-2
TOTAL_MAX_LEVEL = 8
# totals are flagged when more than this fraction of Romberg rows stopped at max_level
FLAGGED_ROW_FRACTION = 0.01

RNG_ALGORITHM = "numpy Philox4x64-10, key=seed, counter=sample index * ceil(dim/4)"


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class RombergResult:
    value: np.ndarray
    level: np.ndarray
    error: np.ndarray
    flagged: np.ndarray


@dataclass
class IntegralEstimate:
    """Monte Carlo estimate with its statistical standard error."""

    value: float
    stderr: float
    samples: int
    seed: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def flagged(self):
        return bool(self.diagnostics.get("flagged", self.diagnostics.get("flagged_rows", 0)))

    def as_dict(self):
        return {
            "value": self.value,
            "stderr": self.stderr,
            "samples": self.samples,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
        }


# -- Romberg -------------------------------------------------------------------


def romberg_batch(f, a, b, rel_tol=DEFAULT_REL_TOL, max_level=DEFAULT_MAX_LEVEL, min_level=2, abs_tol=0.0,
                  measure="max"):  # fmt: skip
    """Romberg integration of many independent rows at once.

    Parameters
    ----------
    f : callable
        ``f(rows, x)`` with ``rows`` an int array of row indices (R,) and
        ``x`` nodes of shape (R, N); returns values of shape (R, N, K).
    a, b : ndarray, shape (B,)
        Integration limits per row.
    rel_tol : float
        Stop a row when successive diagonal estimates differ by less than
        ``rel_tol`` times the largest component (or ``abs_tol``).
    max_level : int
        Finest level has ``2**max_level + 1`` nodes.  Rows still unconverged
        there are flagged.
    measure : {"max", "sum"}
        How the K components enter the convergence test: largest component
        change, or change of the component sum.  ``"sum"`` makes the
        refinement depend only on a basis-independent total when the
        components are polarization channels.

    Returns
    -------
    RombergResult
        ``value`` has shape (B, K).
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n_rows = a.shape[0]
    h = b - a
    rows = np.arange(n_rows)
    ends = f(rows, np.stack([a, b], axis=-1))
    k_dim = ends.shape[-1]
    trap = 0.5 * h[:, None] * (ends[:, 0] + ends[:, 1])
    table = [trap]
    value = np.zeros((n_rows, k_dim))
    level = np.full(n_rows, max_level)
    error = np.zeros(n_rows)
    flagged = np.zeros(n_rows, dtype=bool)
    active = np.ones(n_rows, dtype=bool)
    prev_diag = trap
    for k in range(1, max_level + 1):
        idx = np.flatnonzero(active)
        n_new = 1 << (k - 1)
        step = h[idx] / (1 << k)
        x = a[idx, None] + step[:, None] * (2.0 * np.arange(n_new) + 1.0)
        fx = f(idx, x)
        new_trap = np.zeros_like(trap)
        new_trap[idx] = 0.5 * table[0][idx] + step[:, None] * fx.sum(axis=1)
        row = [new_trap]
        for j in range(1, k + 1):
            scale = 4.0**j
            row.append(row[j - 1] + (row[j - 1] - table[j - 1]) / (scale - 1.0))
        table = row
        diag = row[k]
        if measure == "sum":
            diff = np.abs(np.sum(diag[idx] - prev_diag[idx], axis=-1))
            size = np.abs(np.sum(diag[idx], axis=-1))
        else:
            diff = np.max(np.abs(diag[idx] - prev_diag[idx]), axis=-1)
            size = np.max(np.abs(diag[idx]), axis=-1)
        ok = (diff <= rel_tol * size) | (diff <= abs_tol) | ((size == 0) & (diff == 0))
        if k < min_level:
            ok[:] = False
        done = idx[ok]
        value[done] = diag[done]
        level[done] = k
        error[done] = diff[ok]
        active[done] = False
        prev_diag = diag
        if not active.any():
            break
    rest = np.flatnonzero(active)
    if rest.size:
        value[rest] = table[-1][rest]
        error[rest] = np.max(np.abs(table[-1][rest] - table[-2][rest]), axis=-1) if len(table) > 1 else np.inf
        flagged[rest] = True
    return RombergResult(value, level, error, flagged)


def romberg(f, a, b, rel_tol=DEFAULT_REL_TOL, max_level=DEFAULT_MAX_LEVEL):
    """Scalar Romberg integral of ``f`` over ``[a, b]``.

    Returns ``(value, flagged)``; ``flagged`` is True when ``max_level``
    was reached without meeting ``rel_tol``.
    """
    if b < a:
        raise ValueError("romberg requires a <= b")
    if a == b:
        return 0.0, False

    def g(rows, x):
        return np.asarray(f(x), dtype=float)[..., None]

    res = romberg_batch(g, [a], [b], rel_tol=rel_tol, max_level=max_level)
    return float(res.value[0, 0]), bool(res.flagged[0])


# -- energy integration ----------------------------------------------------------


@dataclass
class _Stats:
    levels: list = field(default_factory=list)
    flagged: int = 0
    rows: int = 0

    def add(self, res):
        self.levels.append(int(res.level.max()) if res.level.size else 0)
        self.flagged += int(res.flagged.sum())
        self.rows += int(res.flagged.size)


def _channel_reducer(channel, n, spin):
    """Map a weight tensor (R, N, L0, 2..., 2, 2) to (R, N, K)."""
    if channel == "tensor":
        return "both", lambda w: w.reshape(w.shape[:2] + (-1,))
    if channel == "total":
        # averaged over incoming polarization and spin, summed over final
        return "both", lambda w: 0.25 * w.reshape(w.shape[:2] + (-1,)).sum(axis=-1, keepdims=True)
    mode = xsec._pol0_mode(channel, n)
    return mode, lambda w: xsec.reduce_channels(w, channel, n, spin)[..., None]


def _energy_integral(config, theta, phi, channel="final-summed", spin="averaged", rel_tol=DEFAULT_REL_TOL,
                     max_level=DEFAULT_MAX_LEVEL, stats=None, symmetric=False):  # fmt: skip
    """Batched energy integrals for S angle configurations.

    ``theta``, ``phi`` have shape (S, n).  Returns (S, K).

    The integrand peaks like ``1/omega_j`` on every soft edge
    ``omega_j = eps_j``.  It is split with the partition of unity
    ``g_k = omega_k^2 / sum_j omega_j^2``; piece ``k`` is integrated with
    photon ``k`` as the closure photon, so the soft edges it keeps all sit at
    lower limits of log-variable integrals while ``g_k`` suppresses the edge
    ``omega_k = eps_k``.  ``symmetric=True`` also averages the two
    inner/outer orderings of each triple-Compton piece, making the node set
    invariant under any relabeling of the photons (exact channel
    degeneracies at twice the cost).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n = theta.shape[-1]
    stats = stats if stats is not None else _Stats()
    pol0, reduce = _channel_reducer(channel, n, spin)
    n_samples = theta.shape[0]
    measure = "sum" if channel == "tensor" else "max"

    if n == 1:
        kin = xsec._close(config, [], theta, phi)
        w = xsec.channel_weights(config, kin, pol0)
        return reduce(w[:, None])[:, 0]

    total = np.zeros((n_samples, _k_dim(reduce, pol0, n)))
    for k in range(n):
        free = [j for j in range(n) if j != k]
        orders = [free + [k], free[::-1] + [k]] if symmetric and n == 3 else [free + [k]]
        for order in orders:
            piece = _partition_piece(config, theta[:, order], phi[:, order], order, pol0, reduce, rel_tol,
                                     max_level, stats, measure)  # fmt: skip
            total += piece / len(orders)
    return total


def _partition_piece(config, theta, phi, order, pol0, reduce, rel_tol, max_level, stats, measure):
    n = theta.shape[-1]
    n_samples = theta.shape[0]
    dirs = photon_direction(theta, phi)
    p_i, k0 = config.p_i(), config.k0()
    eps = config.thresholds(theta)
    k_dim = _k_dim(reduce, pol0, n)
    first_leg_axis = -(n + 2)
    src = [first_leg_axis + pos for pos in range(n)]
    dst = [first_leg_axis + leg for leg in order]

    def weights(sel, omegas):
        kin = xsec._close(config, omegas, theta[sel][:, None, :], phi[sel][:, None, :], closed=True)
        w = xsec.channel_weights(config, kin, pol0)
        with np.errstate(invalid="ignore"):
            g = np.where(kin.valid, kin.omega[..., -1] ** 2 / np.sum(kin.omega**2, axis=-1), 0.0)
        w = w * g.reshape(g.shape + (1,) * (w.ndim - g.ndim))
        return reduce(np.moveaxis(w, src, dst))

    if n == 2:
        hi = omega_max_two_photon(p_i, k0, dirs[:, 0], dirs[:, 1], eps[:, 1])
        lo = eps[:, 0]
        ok = np.isfinite(hi) & (hi > lo)
        rows_ok = np.flatnonzero(ok)
        out = np.zeros((n_samples, k_dim))
        if rows_ok.size == 0:
            return out

        def f1(rows, u):
            w1 = np.exp(u)
            return weights(rows_ok[rows], [w1]) * w1[..., None]

        res = romberg_batch(f1, np.log(lo[ok]), np.log(hi[ok]), rel_tol, max_level, measure=measure)
        stats.add(res)
        out[ok] = res.value
        return out

    # outer: first free photon's partner (position 1), inner: position 0
    k_inner_min = eps[:, 0, None] * dirs[:, 0]
    hi2 = omega_j_max(p_i, k0, k_inner_min, dirs[:, 1], dirs[:, 2], eps[:, 2], degenerate="nan")
    lo2 = eps[:, 1]
    ok = np.isfinite(hi2) & (hi2 > lo2)
    outer_rows = np.flatnonzero(ok)
    out = np.zeros((n_samples, k_dim))
    if outer_rows.size == 0:
        return out

    def f_outer(rows, u2):
        s = outer_rows[rows]
        r_count, n_nodes = u2.shape
        w2 = np.exp(u2).ravel()
        s_in = np.repeat(s, n_nodes)
        k2 = w2[:, None] * dirs[s_in, 1]
        hi1 = omega_j_max(p_i, k0, k2, dirs[s_in, 0], dirs[s_in, 2], eps[s_in, 2], degenerate="nan")
        lo1 = eps[s_in, 0]
        inner_ok = np.isfinite(hi1) & (hi1 > lo1)
        inner_rows = np.flatnonzero(inner_ok)
        vals = np.zeros((w2.size, k_dim))

        def f_inner(rows_in, u1):
            r = inner_rows[rows_in]
            w1 = np.exp(u1)
            w2r = np.broadcast_to(w2[r][:, None], w1.shape)
            return weights(s_in[r], [w1, w2r]) * w1[..., None]

        if inner_rows.size:
            res = romberg_batch(
                f_inner, np.log(lo1[inner_ok]), np.log(hi1[inner_ok]), rel_tol, max_level, measure=measure
            )
            stats.add(res)
            vals[inner_ok] = res.value
        return (vals * w2[:, None]).reshape(r_count, n_nodes, -1)

    res = romberg_batch(f_outer, np.log(lo2[ok]), np.log(hi2[ok]), rel_tol, max_level, measure=measure)
    stats.add(res)
    out[ok] = res.value
    return out


def _k_dim(reduce, pol0, n):
    n_in = 2 if pol0 == "both" else 1
    dummy = np.zeros((1, 1, n_in) + (2,) * n + (2, 2))
    return reduce(dummy).shape[-1]


def integrate_energies(config, angles, channel="final-summed", spin="averaged", rel_tol=DEFAULT_REL_TOL,
                       max_level=DEFAULT_MAX_LEVEL, symmetric=True):  # fmt: skip
    """Energy-integrated differential cross section at fixed emission angles.

    Parameters
    ----------
    config : ScatterConfig
    angles : sequence of (theta, phi)
        Two pairs for double Compton, three for triple Compton.
    channel : str
        As in :mod:`tricompton.xsec`; ``"tensor"`` returns every
        polarization and spin channel flattened.

    Returns
    -------
    float or ndarray
        b sr^-n; zero when the allowed region is empty.
    """
    angles = np.asarray(angles, dtype=float)
    theta, phi = angles[None, :, 0], angles[None, :, 1]
    out = _energy_integral(config, theta, phi, channel, spin, rel_tol, max_level, symmetric=symmetric)[0]
    return float(out[0]) if out.shape == (1,) else out


def integrate_energies_batch(config, theta, phi, channel="final-summed", spin="averaged",
                             rel_tol=DEFAULT_REL_TOL, max_level=DEFAULT_MAX_LEVEL, symmetric=True):  # fmt: skip
    """Vectorized :func:`integrate_energies` over S angle sets, shapes (S, n)."""
    stats = _Stats()
    out = _energy_integral(config, theta, phi, channel, spin, rel_tol, max_level, stats, symmetric)
    return out, {"max_level": max(stats.levels, default=0), "flagged_rows": stats.flagged, "rows": stats.rows}


def angular_distribution(config, theta, phi, channels, spin="averaged", compute_frame="lab",
                         rel_tol=DEFAULT_REL_TOL, max_level=DEFAULT_MAX_LEVEL):  # fmt: skip
    """Energy-integrated ``dsigma / dOmega_1 ... dOmega_n`` for several channels.

    Parameters
    ----------
    config : ScatterConfig
        Lab-frame configuration.
    theta, phi : ndarray, shape (S, n)
        Lab-frame emission angles.
    channels : sequence of str
    compute_frame : {"lab", "rest"}
        ``"rest"`` integrates in the electron rest frame (lab thresholds
        mapped per leg) and converts with ``1/J-tilde``; use it for
        ``gamma >> 1`` where the lab-frame integrand is confined to a cone
        of width ``1/gamma``.

    Returns
    -------
    values : ndarray, shape (S, len(channels))
        b sr^-n.
    diagnostics : dict
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n = theta.shape[-1]
    if compute_frame == "rest" and config.frame == "lab":
        work, _ = boost_config_to_rest_frame(config)
        _, theta_w = doppler_to_rest(1.0, theta, config.gamma)
        scale = 1.0 / cross_section_jacobian_Jtilde(*np.moveaxis(theta_w, -1, 0), gamma=config.gamma)
    elif compute_frame == "lab":
        work, theta_w, scale = config, theta, np.ones(theta.shape[0])
    else:
        raise ValueError(f"unknown compute_frame {compute_frame!r}")
    flat, diag = integrate_energies_batch(work, theta_w, phi, "tensor", spin, rel_tol, max_level)
    full = flat.reshape((theta.shape[0], 2) + (2,) * n + (2, 2))
    cols = [xsec.reduce_full_tensor(full, ch, n, spin, work) for ch in channels]
    return np.stack(cols, axis=-1) * scale[:, None], diag


# -- Monte Carlo -------------------------------------------------------------------


def mc_uniforms(seed, start, count, dimension):
    """Uniforms for global sample indices ``start .. start+count-1``, shape (count, dimension).

    Sample ``i`` always uses Philox counter block ``i * ceil(dimension/4)``,
    so any partition of the index range reproduces the same numbers.
    """
    blocks = -(-dimension // 4)
    bitgen = np.random.Philox(key=int(seed))
    bitgen.advance(int(start) * blocks)
    raw = bitgen.random_raw(int(count) * blocks * 4).reshape(count, blocks * 4)[:, :dimension]
    return (raw >> np.uint64(11)).astype(float) * 2.0**-53


def mc_stream(seed, shard, dimension, shard_size=1024):
    """Uniforms for one shard, shape (shard_size, dimension).

    Shard ``s`` covers global sample indices ``s*shard_size`` up to
    ``(s+1)*shard_size``, so every ``(seed, shard)`` names one fixed block.
    """
    return mc_uniforms(seed, shard * shard_size, shard_size, dimension)


def sample_angles(u, n, beta=0.0):
    """Map uniforms (S, 2n) to emission angles and their solid-angle weights.

    Directions are uniform on the sphere in a frame moving with velocity
    ``beta`` along +z and are then aberrated into the computation frame, so
    a forward-peaked distribution is sampled densely where it lives.

    Returns
    -------
    theta, phi : ndarray, shape (S, n)
    weight : ndarray, shape (S,)
        ``prod_j dOmega_j / dOmega*_j``; identically one for ``beta = 0``.
    """
    cos_s = 2.0 * u[:, :n] - 1.0
    phi = 2.0 * np.pi * u[:, n : 2 * n]
    if beta == 0.0:
        return np.arccos(cos_s), phi, np.ones(u.shape[0])
    theta_s = np.arccos(cos_s)
    # half-angle aberration keeps full precision near the axis
    theta = 2.0 * np.arctan(np.tan(0.5 * theta_s) * np.sqrt((1.0 - beta) / (1.0 + beta)))
    # dOmega/dOmega* = (1 - beta^2) / (1 + beta cos theta*)^2, denominator cancellation-free
    den = (1.0 - beta) + 2.0 * beta * np.cos(0.5 * theta_s) ** 2
    return theta, phi, np.prod((1.0 - beta * beta) / den**2, axis=-1)


def sampling_beta(config):
    """Velocity along +z of the photon-electron centre-of-momentum frame."""
    p_i, k0 = config.p_i(), config.k0()
    total = p_i + k0
    return float(total[3] / total[0])


_PROCESS_LEGS = {"SC": 1, "DC": 2, "TC": 3}


def _sample_weights(process, config, seed, start, count, rel_tol, max_level, batch, beta=0.0):
    n = _PROCESS_LEGS[process]
    u = mc_uniforms(seed, start, count, 2 * n)
    theta, phi, jac = sample_angles(u, n, beta)
    out = np.empty(count)
    stats = _Stats()
    for lo in range(0, count, batch):
        sl = slice(lo, lo + batch)
        vals = _energy_integral(config, theta[sl], phi[sl], "total", "averaged", rel_tol, max_level, stats, False)
        out[sl] = vals[:, 0]
    return out * jac * (4.0 * np.pi) ** n / math.factorial(n), stats


def total_cross_section(process, config, samples=20000, seed=0, shards=1, threads=1, rel_tol=TOTAL_REL_TOL,
                        max_level=TOTAL_MAX_LEVEL, batch=256, min_samples=1000, sampling="cm"):  # fmt: skip
    """Total cross section (barn) with Monte Carlo error.

    Angles are sampled uniformly on the sphere, either in the computation
    frame (``sampling="uniform"``) or in the photon-electron
    centre-of-momentum frame and aberrated back (``sampling="cm"``, the
    default), which follows the forward cone at high ``omega0``.  The
    energies are integrated by Romberg per sample.  The result is averaged
    over incoming photon polarization and electron spin, summed over final
    states and divided by ``n!`` for identical photons.  Samples are
    split into ``shards`` contiguous index blocks that may run on
    ``threads`` workers; the estimate does not depend on either.

    ``diagnostics["flagged"]`` is set when more than
    ``FLAGGED_ROW_FRACTION`` of the Romberg rows stopped unconverged at
    ``max_level``; isolated rows at the edge of the region are expected and
    carry negligible weight.
    """
    process = process.upper()
    if process not in _PROCESS_LEGS:
        raise ValueError(f"unknown process {process!r}")
    if samples < min_samples:
        raise ValueError(f"need at least {min_samples} samples")
    if sampling not in ("cm", "uniform"):
        raise ValueError(f"unknown sampling {sampling!r}")
    beta = sampling_beta(config) if sampling == "cm" else 0.0
    bounds = np.linspace(0, samples, shards + 1).astype(int)
    jobs = [(int(bounds[i]), int(bounds[i + 1] - bounds[i])) for i in range(shards)]

    def run(job):
        return _sample_weights(process, config, seed, job[0], job[1], rel_tol, max_level, batch, beta)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    w = np.concatenate([p[0] for p in parts])
    accepted = int(np.count_nonzero(w))
    if accepted == 0:
        raise ValueError("no accepted samples: the allowed region is empty")
    mean = math.fsum(w) / samples
    second = math.fsum(w * w) / samples
    var = max(second - mean * mean, 0.0)
    stderr = math.sqrt(var / (samples - 1))
    levels = [lv for p in parts for lv in p[1].levels]
    flagged = sum(p[1].flagged for p in parts)
    rows = sum(p[1].rows for p in parts)
    diagnostics = {
        "process": process,
        "accepted_samples": accepted,
        "romberg_rel_tol": rel_tol,
        "romberg_max_level": int(max(levels, default=0)),
        "flagged_rows": int(flagged),
        "romberg_rows": int(rows),
        "flagged": flagged > FLAGGED_ROW_FRACTION * rows,
        "shards": shards,
        "sampling": sampling,
        "sampling_beta": beta,
        "rng": RNG_ALGORITHM,
        "frame": config.frame,
    }
    return IntegralEstimate(mean, stderr, samples, seed, diagnostics)
