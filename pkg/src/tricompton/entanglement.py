"""Three-photon polarization density matrix, von Neumann entropy and the
genuine-tripartite-entanglement measure tau.

The basis is ``|l1 l2 l3>`` with ``l_j`` in {1, 2} and index
``4 (l1-1) + 2 (l2-1) + (l3-1)`` (photon 1 most significant).

``tau(rho) = max(-tr(W rho), 0)`` where ``W`` ranges over operators that
decompose as ``W = P_s + Q_s^{T_s}`` with ``0 <= P_s, Q_s <= 1`` for every
bipartition subset ``s``.  The maximization is a small semidefinite program
solved here by a log-barrier path-following method.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .amplitudes import amplitude_tensor
from .kinematics import KinematicsError
from . import xsec

SUBSETS = ("1", "2", "3", "12", "13", "23")
DIM = 8
SCHEMA = "tricompton.density-matrix/1"


class DegenerateStateError(ValueError):
    """All amplitudes vanish, so the state cannot be normalized."""


class InvalidStateError(ValueError):
    pass


@dataclass
class PolarizationDensityMatrix:
    """Unit-trace 8x8 polarization density matrix with its provenance."""

    rho: np.ndarray
    kappa: float
    metadata: dict = field(default_factory=dict)


# -- density matrix ------------------------------------------------------------------


def density_matrices(config, omega1, omega2, theta, phi, spin="summed"):
    """Vectorized density matrices over a batch of kinematic points.

    Parameters
    ----------
    config : ScatterConfig
        Supplies the incoming photon and its polarization.
    omega1, omega2 : array_like
        Energies of photons 1 and 2; photon 3 follows from closure.
    theta, phi : array_like, shape (..., 3)
        Emission angles.
    spin : "summed" or (r_i, r_f)

    Returns
    -------
    rho : ndarray, shape (..., 8, 8)
        NaN where the point is kinematically forbidden.
    kappa : ndarray
        Normalization constants.
    valid : ndarray of bool
    """
    kin = xsec.tc_kinematics(config, omega1, omega2, theta, phi)
    valid = kin.valid.copy()
    lead = valid.shape
    rho = np.full(lead + (DIM, DIM), np.nan, dtype=complex)
    kappa = np.full(lead, np.nan)
    idx = np.flatnonzero(valid.ravel())
    if idx.size == 0:
        return rho, kappa, valid
    flat = lambda a: np.reshape(a, (-1,) + np.shape(a)[len(lead):])[idx]
    eps_em = xsec.emitted_polarizations(kin.theta, kin.phi)
    eps_flat = flat(eps_em)
    pols = [np.broadcast_to(config.eps0()[None, :], (idx.size, 1, 4))] + [eps_flat[:, j] for j in range(3)]
    amp = amplitude_tensor(flat(kin.p_i), flat(kin.p_f), [flat(k) for k in kin.momenta], pols, config.m)
    amp = amp[:, 0].reshape(idx.size, DIM, 2, 2)
    if spin == "summed":
        a = amp.reshape(idx.size, DIM, 4)
    else:
        r_i, r_f = spin
        a = amp[:, :, r_i - 1, r_f - 1][..., None]
    unnorm = np.einsum("bis,bjs->bij", a, a.conj())
    trace = np.real(np.einsum("bii->b", unnorm))
    good = trace > 0
    out = np.full((idx.size, DIM, DIM), np.nan, dtype=complex)
    out[good] = unnorm[good] / trace[good, None, None]
    k = np.full(idx.size, np.nan)
    k[good] = 1.0 / trace[good]
    rho.reshape(-1, DIM, DIM)[idx] = out
    kappa.reshape(-1)[idx] = k
    valid.reshape(-1)[idx] = good
    return rho, kappa, valid


def density_matrix(config, legs, spin="summed"):
    """Density matrix at one point; the third leg's energy is solved from closure.

    Raises
    ------
    KinematicsError
        Forbidden kinematics (omega_3 <= 0, E_f < m or below threshold).
    DegenerateStateError
        Every amplitude vanishes.
    """
    if len(legs) != 3:
        raise ValueError("need three photon legs")
    theta = [leg.theta for leg in legs]
    phi = [leg.phi for leg in legs]
    kin = xsec.tc_kinematics(config, legs[0].omega, legs[1].omega, theta, phi)
    if not bool(kin.valid):
        raise KinematicsError("kinematically forbidden point")
    rho, kappa, valid = density_matrices(config, legs[0].omega, legs[1].omega, theta, phi, spin)
    if not bool(valid):
        raise DegenerateStateError("all amplitudes vanish")
    meta = {
        "omega0": config.omega0,
        "e_i": config.e_i,
        "cutoff": config.cutoff,
        "frame": config.frame,
        "omega": [float(w) for w in kin.omega],
        "theta": theta,
        "phi": phi,
        "spin": spin if spin == "summed" else list(spin),
    }
    return PolarizationDensityMatrix(np.asarray(rho), float(kappa), meta)


# -- linear algebra ---------------------------------------------------------------------


def _factor_axes(subset):
    if subset not in SUBSETS:
        raise ValueError(f"invalid subset {subset!r}; expected one of {SUBSETS}")
    return [int(c) - 1 for c in subset]


def partial_transpose(rho, subset):
    """Transpose the tensor factors named by ``subset`` (e.g. ``"3"`` or ``"12"``)."""
    rho = np.asarray(rho)
    axes = _factor_axes(subset)
    t = rho.reshape(rho.shape[:-2] + (2,) * 6)
    lead = rho.ndim - 2
    perm = list(range(lead + 6))
    for a in axes:
        perm[lead + a], perm[lead + 3 + a] = perm[lead + 3 + a], perm[lead + a]
    return t.transpose(perm).reshape(rho.shape)


def hermitian_eigensystem(a, tol=1e-15, max_sweeps=50):
    """Eigenvalues (ascending) and eigenvectors by cyclic complex Jacobi rotations.

    Raises
    ------
    ValueError
        If ``a`` is not Hermitian.
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    scale = max(np.max(np.abs(a)), np.finfo(float).tiny)
    if np.max(np.abs(a - a.conj().T)) > 1e-12 * scale:
        raise ValueError("matrix is not Hermitian")
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=complex)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(a - np.diag(np.diag(a))) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                app, aqq = a[p, p].real, a[q, q].real
                # real rotation zeroing |apq| of [[app, mag], [mag, aqq]]
                zeta = (aqq - app) / (2.0 * mag)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta)) if zeta != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # unitary acting on columns p, q
                cp = v[:, p].copy()
                v[:, p] = c * cp - s * np.conj(phase) * v[:, q]
                v[:, q] = s * phase * cp + c * v[:, q]
                ap = a[:, p].copy()
                a[:, p] = c * ap - s * np.conj(phase) * a[:, q]
                a[:, q] = s * phase * ap + c * a[:, q]
                ap = a[p, :].copy()
                a[p, :] = c * ap - s * phase * a[q, :]
                a[q, :] = s * np.conj(phase) * ap + c * a[q, :]
                a[p, q] = 0.0
                a[q, p] = 0.0
    w = np.real(np.diag(a))
    order = np.argsort(w)
    return w[order], v[:, order]


def von_neumann_entropy(rho):
    """``-sum u log2 u`` over the eigenvalues of ``rho`` (bits)."""
    w, _ = hermitian_eigensystem(rho)
    if np.any(w < -1e-8):
        raise InvalidStateError(f"negative eigenvalue {w.min():.3e}")
    w = w[w > 0]
    return float(max(-np.sum(w * np.log2(w)), 0.0))


def witness_expectation(rho, w):
    """``-tr(W rho)``; a lower bound on tau when ``W`` is a valid witness."""
    return float(-np.real(np.trace(np.asarray(w) @ np.asarray(rho))))


# -- witness SDP ------------------------------------------------------------------------


def _hermitian_basis(n=DIM):
    basis = []
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    r = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = e[j, i] = r
            basis.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = -1j * r
            e[j, i] = 1j * r
            basis.append(e)
    return np.array(basis)


_BASIS = _hermitian_basis()
# columns are vec(E_a) in row-major order
_U = _BASIS.reshape(DIM * DIM, DIM * DIM).T.copy()
_UH = _U.conj().T.copy()
_PT_MAPS = {
    s: np.real(np.einsum("aij,bji->ab", _BASIS, partial_transpose(_BASIS, s))) for s in SUBSETS
}


def _coords(x):
    return np.real(np.einsum("aij,ji->a", _BASIS, x))


def _matrix(c):
    return np.einsum("a,aij->ij", c, _BASIS)


def _hess_block(g):
    """``K_ab = tr(G E_a G E_b)`` for Hermitian ``G``."""
    # vec_row(G X G) = (G kron G^T) vec_row(X)
    return np.real(_UH @ np.kron(g, g.T) @ _U)


@dataclass
class WitnessDecomposition:
    """Certificate for ``tau``: ``W = P_s + Q_s^{T_s}`` with spectra in [0, 1]."""

    w: np.ndarray
    p: dict
    q: dict
    tau: float
    objective: float
    diagnostics: dict = field(default_factory=dict)

    def verify(self, tol=1e-8):
        """Independent check of every block; returns a dict of residuals and a verdict."""
        report = {"ok": True, "subsets": {}}
        for s in SUBSETS:
            p_eigs, _ = hermitian_eigensystem(self.p[s])
            q_eigs, _ = hermitian_eigensystem(self.q[s])
            recon = np.max(np.abs(self.w - (self.p[s] + partial_transpose(self.q[s], s))))
            ok = (
                p_eigs.min() >= -tol and p_eigs.max() <= 1 + tol
                and q_eigs.min() >= -tol and q_eigs.max() <= 1 + tol
                and recon <= tol
            )  # fmt: skip
            report["subsets"][s] = {
                "p_spectrum": [float(x) for x in p_eigs],
                "q_spectrum": [float(x) for x in q_eigs],
                "reconstruction": float(recon),
                "ok": bool(ok),
            }
            report["ok"] = report["ok"] and bool(ok)
        return report


_PT_STACK = np.stack([_PT_MAPS[s] for s in SUBSETS])  # (6, 64, 64)
_EYE_STACK = np.concatenate([np.zeros((6, DIM, DIM)), np.broadcast_to(np.eye(DIM), (6, DIM, DIM))] * 2)
_SIGNS = np.repeat([1.0, -1.0, 1.0, -1.0], 6)


def _block_coords(z):
    """Coordinates of the six ``P_s`` and six ``Q_s``, each (6, 64)."""
    q = z[64:].reshape(6, 64)
    return z[None, :64] - np.einsum("sab,sb->sa", _PT_STACK, q), q


def _lmi_stack(z, affine=True):
    """All 24 barrier matrices ``P, 1-P, Q, 1-Q`` (s-major within each group), (24, 8, 8).

    With ``affine=False`` the constant identity is dropped, which gives the
    matrices' directional derivative along ``z``.
    """
    p, q = _block_coords(z)
    pm = np.einsum("sa,aij->sij", p, _BASIS)
    qm = np.einsum("sa,aij->sij", q, _BASIS)
    stack = np.concatenate([pm, pm, qm, qm]) * _SIGNS[:, None, None]
    return stack + _EYE_STACK if affine else stack


def _lmi_inverses(z):
    """Inverse Cholesky factors and inverses of the 24 barrier matrices, and ``sum log det``.

    Returns ``(None, None)`` when any block is not positive definite.
    """
    try:
        chol = np.linalg.cholesky(_lmi_stack(z))
    except np.linalg.LinAlgError:
        return None, None
    logdet = 2.0 * float(np.sum(np.log(np.real(np.diagonal(chol, axis1=1, axis2=2)))))
    inv_l = np.linalg.inv(chol)
    return (inv_l, np.swapaxes(inv_l.conj(), 1, 2) @ inv_l), logdet


def _hess_blocks(g):
    """``K_ab = tr(G E_a G E_b)`` for a stack of Hermitian ``G``, (n, 64, 64)."""
    # vec_row(G X G) = (G kron G^T) vec_row(X)
    kron = np.einsum("nij,nlk->nikjl", g, g).reshape(g.shape[0], DIM * DIM, DIM * DIM)
    return np.real(_UH @ kron @ _U)


def _hess_block(g):
    return _hess_blocks(np.asarray(g)[None])[0]


def _newton_system(z, t, c, inverses):
    _, g_all = inverses
    n = z.size
    h = np.zeros((n, n))
    grad = np.zeros(n)
    grad[:64] = t * c
    # d(-log det F) = -G_F; the 1-P and 1-Q blocks enter with the opposite sign
    coords = np.real(np.einsum("aij,nji->na", _BASIS, g_all)) * _SIGNS[:, None]
    grad_p = -(coords[:6] + coords[6:12])
    grad_q = -(coords[12:18] + coords[18:])
    k_all = _hess_blocks(g_all)
    k_p = k_all[:6] + k_all[6:12]
    k_q = k_all[12:18] + k_all[18:]
    grad[:64] += grad_p.sum(axis=0)
    grad[64:] = (-np.einsum("sba,sb->sa", _PT_STACK, grad_p) + grad_q).ravel()
    kpm = k_p @ _PT_STACK
    h[:64, :64] = k_p.sum(axis=0)
    for k in range(6):
        sl = slice(64 * (k + 1), 64 * (k + 2))
        h[:64, sl] = -kpm[k]
        h[sl, :64] = -kpm[k].T
        h[sl, sl] = _PT_STACK[k].T @ kpm[k] + k_q[k]
    return grad, h


def _barrier_value(z, t, c):
    inverses, logdet = _lmi_inverses(z)
    if inverses is None:
        return np.inf, None
    return t * (c @ z[:64]) - logdet, inverses


def _max_step(inverses, step):
    """Largest ``alpha`` keeping every barrier matrix positive definite along ``step``."""
    inv_l, _ = inverses
    d = _lmi_stack(step, affine=False)
    m = inv_l @ d @ np.swapaxes(inv_l.conj(), 1, 2)
    lam = np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m.conj(), 1, 2))).min()
    return np.inf if lam >= 0 else -1.0 / lam


# Newton decrement targets: loose on the way, tight at the final barrier
# parameter where the certificate is read out.  Directions the objective leaves
# free (e.g. the degenerate GHZ blocks) are fixed only by the barrier.
_CENTERING_TOL = 1e-6
_FINAL_CENTERING_TOL = 1e-13
# a point with a larger decrement is too far from the central path for the gap bound
_CENTRALITY_FLAG = 1e-3


DEFAULT_GAP_TOL = 1e-6


def tau(rho, gap_tol=DEFAULT_GAP_TOL, mu=8.0, max_newton=80, max_outer=60, t0=1.0):
    """Genuine tripartite entanglement measure and its witness certificate.

    Parameters
    ----------
    rho : ndarray, shape (8, 8)
        Density matrix.
    gap_tol : float
        Target duality gap bound ``192 / t`` (24 barrier blocks of size 8).
        Beyond ``t ~ 1e9`` the barrier Hessian loses positive definiteness
        in double precision, so targets much below the default do not
        improve the result.
    mu : float
        Barrier parameter growth per outer iteration.
    max_newton, max_outer : int
        Iteration caps.

    Returns
    -------
    tau : float
        ``max(-tr(W rho), 0)``.
    WitnessDecomposition
        Strictly feasible certificate; ``diagnostics`` holds the raw
        objective, the final gap bound, the final Newton decrement and a
        ``flagged`` entry, set when the gap target was not reached or the
        final point is too far from the central path for the bound to hold.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (DIM, DIM):
        raise ValueError("rho must be 8x8")
    c = _coords(0.5 * (rho + rho.conj().T))
    z = np.zeros(64 * 7)
    z[:64] = _coords(np.eye(DIM))
    for k in range(6):
        z[64 * (k + 1) : 64 * (k + 2)] = _coords(0.5 * np.eye(DIM))
    n_barrier = 24 * DIM
    t = t0
    newton_steps = 0
    converged = False
    outer = 0
    decrement = np.inf
    for outer in range(max_outer):
        final = n_barrier / t < gap_tol
        tol = _FINAL_CENTERING_TOL if final else _CENTERING_TOL
        value, inverses = _barrier_value(z, t, c)
        for _ in range(max_newton):
            g, h = _newton_system(z, t, c, inverses)
            try:
                step = -np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(h, g, rcond=None)[0]
            decrement = -(g @ step)
            newton_steps += 1
            if decrement < tol:
                break
            # fraction-to-boundary start, then Armijo backtracking
            alpha = min(1.0, 0.99 * _max_step(inverses, step))
            while alpha > 1e-12:
                trial = z + alpha * step
                new_value, new_inv = _barrier_value(trial, t, c)
                if new_value <= value - 0.25 * alpha * decrement:
                    break
                alpha *= 0.5
            else:
                break  # no representable decrease left at this t
            z, value, inverses = trial, new_value, new_inv
        if final:
            converged = True
            break
        t *= mu
    flagged = not converged or not abs(decrement) < _CENTRALITY_FLAG
    w = _matrix(z[:64])
    p_blocks, q_blocks = {}, {}
    p_all, q_all = _block_coords(z)
    for k, s in enumerate(SUBSETS):
        q_blocks[s] = _matrix(q_all[k])
        p_blocks[s] = w - partial_transpose(q_blocks[s], s)
    objective = witness_expectation(rho, w)
    result = max(objective, 0.0)
    diagnostics = {
        "objective": objective,
        "gap_bound": n_barrier / t,
        "newton_steps": newton_steps,
        "outer_iterations": outer + 1,
        "final_decrement": float(decrement),
        "flagged": flagged,
    }
    return result, WitnessDecomposition(w, p_blocks, q_blocks, result, objective, diagnostics)


# -- standard states ---------------------------------------------------------------------


def ghz_state():
    psi = np.zeros(DIM, dtype=complex)
    psi[0] = psi[7] = 1.0 / np.sqrt(2.0)
    return np.outer(psi, psi.conj())


def ghz_witness():
    """``W_GHZ = 1 - (3/2) rho_GHZ``, optimal for the GHZ state (``-tr(W rho_GHZ) = 1/2``)."""
    return np.eye(DIM) - 1.5 * ghz_state()


def product_state(labels=(1, 1, 1)):
    psi = np.zeros(DIM, dtype=complex)
    psi[4 * (labels[0] - 1) + 2 * (labels[1] - 1) + (labels[2] - 1)] = 1.0
    return np.outer(psi, psi.conj())


# -- JSON ---------------------------------------------------------------------------------


def to_json(matrix, metadata=None):
    """Serialize an 8x8 complex matrix row-major as ``[re, im]`` pairs."""
    rho = matrix.rho if isinstance(matrix, PolarizationDensityMatrix) else np.asarray(matrix)
    meta = dict(matrix.metadata) if isinstance(matrix, PolarizationDensityMatrix) else {}
    if isinstance(matrix, PolarizationDensityMatrix):
        meta["kappa"] = matrix.kappa
    meta.update(metadata or {})
    data = [[float(x.real), float(x.imag)] for x in np.asarray(rho, dtype=complex).ravel()]
    return json.dumps({"schema": SCHEMA, "shape": [DIM, DIM], "data": data, "metadata": meta}, indent=1)


def from_json(text):
    """Inverse of :func:`to_json`; returns ``(rho, metadata)``."""
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    if doc.get("shape") != [DIM, DIM] or len(doc["data"]) != DIM * DIM:
        raise ValueError("density matrix must be 8x8")
    pairs = np.asarray(doc["data"], dtype=float)
    rho = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(DIM, DIM)
    return rho, doc.get("metadata", {})
