import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tricompton import entanglement as ent
from tricompton.constants import ELECTRON_MASS as M
from tricompton.kinematics import KinematicsError, PhotonLeg, ScatterConfig

seeds = st.integers(0, 2**32 - 1)
BELL = 0.5 * np.outer([1, 0, 0, 1], [1, 0, 0, 1])


def random_hermitian(rng, n=8):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


def random_state(rng, rank=8):
    a = rng.normal(size=(8, rank)) + 1j * rng.normal(size=(8, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_local_unitary(rng):
    out = np.eye(1)
    for _ in range(3):
        q, r = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        out = np.kron(out, q * (np.diag(r) / np.abs(np.diag(r))))
    return out


def tc_legs(theta=0.5, w1=0.05, w2=0.06):
    phis = 2 * np.pi / 3 * np.arange(1, 4)
    return [PhotonLeg(w, theta, p) for w, p in zip((w1, w2, 0.0), phis)]


# -- linear algebra -----------------------------------------------------------------


@given(seed=seeds, subset=st.sampled_from(ent.SUBSETS))
def test_partial_transpose_properties(seed, subset):
    rng = np.random.default_rng(seed)
    a, b = random_hermitian(rng), random_hermitian(rng)
    pt = ent.partial_transpose(a, subset)
    assert np.allclose(ent.partial_transpose(pt, subset), a)
    assert np.trace(pt) == pytest.approx(np.trace(a))
    assert np.allclose(pt, pt.conj().T)
    assert np.trace(pt @ b) == pytest.approx(np.trace(a @ ent.partial_transpose(b, subset)))


def test_partial_transpose_of_full_set_is_transpose(rng):
    a = random_hermitian(rng)
    both = ent.partial_transpose(ent.partial_transpose(a, "12"), "3")
    assert np.allclose(both, a.T)
    with pytest.raises(ValueError):
        ent.partial_transpose(a, "123")


def test_partial_transpose_on_product_basis():
    # |l1 l2 l3><m1 m2 m3| with T_1 swaps l1 and m1
    a = np.zeros((8, 8))
    a[0b011, 0b101] = 1.0
    pt = ent.partial_transpose(a, "1")
    assert pt[0b111, 0b001] == 1.0 and np.count_nonzero(pt) == 1


@given(seed=seeds)
def test_jacobi_eigensystem_matches_numpy(seed):
    rng = np.random.default_rng(seed)
    a = random_hermitian(rng)
    w, v = ent.hermitian_eigensystem(a)
    assert np.allclose(w, np.linalg.eigvalsh(a), atol=1e-12)
    assert np.allclose(a @ v, v * w, atol=1e-11)
    assert np.allclose(v.conj().T @ v, np.eye(8), atol=1e-12)


def test_jacobi_rejects_non_hermitian():
    with pytest.raises(ValueError):
        ent.hermitian_eigensystem(np.triu(np.ones((8, 8))))


def test_entropy_anchors(rng):
    assert ent.von_neumann_entropy(np.eye(8) / 8) == pytest.approx(3.0, abs=1e-12)
    assert ent.von_neumann_entropy(ent.ghz_state()) < 1e-10
    assert ent.von_neumann_entropy(ent.product_state((2, 1, 2))) < 1e-10
    assert 0 < ent.von_neumann_entropy(random_state(rng)) < 3
    with pytest.raises(ent.InvalidStateError):
        ent.von_neumann_entropy(np.diag([1.5, -0.5, 0, 0, 0, 0, 0, 0]))


# -- witness ------------------------------------------------------------------------


def test_tau_ghz_anchor_and_certificate():
    value, cert = ent.tau(ent.ghz_state())
    assert value == pytest.approx(0.5, abs=1e-6)
    assert not cert.diagnostics["flagged"]
    report = cert.verify()
    assert report["ok"]
    for s in ent.SUBSETS:
        p = np.array(report["subsets"][s]["p_spectrum"])
        q = np.array(report["subsets"][s]["q_spectrum"])
        assert np.all(np.min(np.abs(p[:, None] - np.array([0.0, 0.5])), axis=1) < 1e-6)
        assert np.all(np.min(np.abs(q[:, None] - np.array([0.0, 0.5, 1.0])), axis=1) < 1e-6)


@pytest.mark.parametrize(
    "rho",
    [ent.product_state((1, 1, 1)), np.eye(8) / 8, np.kron(BELL, np.diag([1.0, 0.0]))],
    ids=["product", "maximally-mixed", "bell-times-product"],
)
def test_tau_vanishes_on_biseparable_states(rho):
    value, cert = ent.tau(rho)
    assert value == pytest.approx(0.0, abs=1e-6)
    assert cert.verify()["ok"]


def test_ghz_witness_is_a_lower_bound():
    rng = np.random.default_rng(3)
    for _ in range(2):
        rho = 0.7 * ent.ghz_state() + 0.3 * random_state(rng)
        value, cert = ent.tau(rho)
        assert value >= ent.witness_expectation(rho, ent.ghz_witness()) - 1e-6
        assert cert.verify()["ok"]
        assert cert.objective == pytest.approx(ent.witness_expectation(rho, cert.w))


@settings(max_examples=2)
@given(seed=seeds)
def test_tau_local_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    rho = 0.8 * ent.ghz_state() + 0.2 * random_state(rng)
    u = random_local_unitary(rng)
    a, _ = ent.tau(rho)
    b, _ = ent.tau(u @ rho @ u.conj().T)
    assert a == pytest.approx(b, abs=1e-5)


def test_tau_rejects_bad_shape():
    with pytest.raises(ValueError):
        ent.tau(np.eye(4))


def test_ghz_witness_expectation():
    assert ent.witness_expectation(ent.ghz_state(), ent.ghz_witness()) == pytest.approx(0.5)


# -- density matrices ------------------------------------------------------------------


def test_density_matrix_is_a_state():
    config = ScatterConfig(0.18, M, 0.0036, 1)
    dm = ent.density_matrix(config, tc_legs())
    rho = dm.rho
    assert np.allclose(rho, rho.conj().T, atol=1e-14)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-13)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    assert np.linalg.matrix_rank(rho, tol=1e-10) <= 4
    assert dm.kappa > 0
    assert dm.metadata["omega"][2] > config.cutoff


def test_fixed_spin_density_matrix_is_pure():
    config = ScatterConfig(0.18, M, 0.0036, 1)
    rho = ent.density_matrix(config, tc_legs(), spin=(1, 2)).rho
    assert ent.von_neumann_entropy(rho) < 1e-10


def test_density_matrices_vectorized_matches_point():
    config = ScatterConfig(0.18, M, 0.0036, 1)
    legs = tc_legs()
    theta = np.array([leg.theta for leg in legs])
    phi = np.array([leg.phi for leg in legs])
    w1 = np.array([0.05, 0.001, 0.17])
    rho, kappa, valid = ent.density_matrices(config, w1, 0.06, theta, phi)
    assert list(valid) == [True, False, False]
    assert np.allclose(rho[0], ent.density_matrix(config, legs).rho, atol=1e-15)
    assert np.all(np.isnan(rho[1])) and np.isnan(kappa[2])


def test_density_matrix_forbidden_point():
    config = ScatterConfig(0.18, M, 0.0036, 1)
    with pytest.raises(KinematicsError):
        ent.density_matrix(config, tc_legs(w1=0.001))
    with pytest.raises(ValueError):
        ent.density_matrix(config, tc_legs()[:2])


def test_json_round_trip():
    config = ScatterConfig(0.18, M, 0.0036, 1)
    dm = ent.density_matrix(config, tc_legs())
    text = ent.to_json(dm, {"note": "x"})
    rho, meta = ent.from_json(text)
    assert np.array_equal(rho, dm.rho)
    assert meta["kappa"] == dm.kappa and meta["note"] == "x"
    doc = json.loads(text)
    doc["schema"] = "other/1"
    with pytest.raises(ValueError):
        ent.from_json(json.dumps(doc))
    doc = json.loads(text)
    doc["data"] = doc["data"][:10]
    with pytest.raises(ValueError):
        ent.from_json(json.dumps(doc))
