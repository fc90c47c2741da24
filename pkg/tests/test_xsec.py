import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tricompton import xsec
from tricompton.constants import ELECTRON_MASS as M
from tricompton.kinematics import ScatterConfig, mercedes


def rest_config(omega0=0.5, cutoff=None, pol=1):
    return ScatterConfig(omega0, M, cutoff or omega0 / 50, pol)


# -- single Compton --------------------------------------------------------------


@given(
    theta=st.floats(0.01, np.pi - 0.01),
    phi=st.floats(0.0, 2 * np.pi),
    omega0=st.floats(1e-3, 20.0),
    a=st.sampled_from([1, 2]),
    b=st.sampled_from([1, 2]),
)
def test_numeric_single_compton_matches_klein_nishina(theta, phi, omega0, a, b):
    config = rest_config(omega0, cutoff=1e-6)
    numeric = xsec.dsigma_sc_grid(config, [theta], [phi], channel=f"{a}{b}")
    analytic = xsec.dsigma_sc_analytic(config, theta, a, b, phi1=phi)
    assert numeric == pytest.approx(analytic, rel=1e-9)


def test_klein_nishina_integrates_to_total():
    config = rest_config(1.0)
    x, wx = np.polynomial.legendre.leggauss(200)
    theta = np.arccos(x)
    integrand = xsec.dsigma_sc_analytic_summed(config, theta)
    total = 2 * np.pi * np.sum(wx * integrand)
    assert total == pytest.approx(xsec.sigma_sc_total(1.0), rel=1e-10)


def test_thomson_limit():
    assert xsec.sigma_sc_total(1e-6) == pytest.approx(0.6652, rel=5e-3)


def test_total_series_is_continuous_at_switch():
    w = 1e-2 * M
    below = xsec.sigma_sc_total(w * (1 - 1e-12))
    above = xsec.sigma_sc_total(w * (1 + 1e-12))
    assert below == pytest.approx(above, rel=1e-10)


def test_total_high_energy_limit():
    w0 = 1e5
    assert xsec.sigma_sc_total(w0) == pytest.approx(xsec.sigma_sc_high_energy(w0), rel=0.05)


def test_total_rejects_nonpositive_energy():
    with pytest.raises(ValueError):
        xsec.sigma_sc_total(0.0)


def test_er_formula_reduces_to_single_compton():
    assert xsec.sigma_er(10.0, 0, 5) == xsec.sigma_sc_total(10.0)
    ratio = xsec.sigma_er(10.0, 2, 5) / xsec.sigma_er(10.0, 1, 5)
    base = xsec.ALPHA / np.pi * np.log(20.0 / M) * np.log(5)
    assert ratio == pytest.approx(base / 2, rel=1e-12)
    with pytest.raises(ValueError):
        xsec.sigma_er(10.0, -1, 5)


def test_nr_scaling_laws():
    assert xsec.sigma_dc_nr(2e-2) / xsec.sigma_dc_nr(1e-2) == pytest.approx(4.0)
    assert xsec.sigma_tc_nr(2e-2) / xsec.sigma_tc_nr(1e-2) == pytest.approx(16.0)


# -- channels --------------------------------------------------------------------


@pytest.mark.parametrize(
    "channel,n,expected",
    [
        ("summed", 3, ("both", None)),
        ("final-summed", 2, ("config", None)),
        ("121", 3, ("config", (0, 1, 0))),
        ("2121", 3, (1, (0, 1, 0))),
        ("12", 1, (0, (1,))),
    ],
)
def test_parse_channel(channel, n, expected):
    assert xsec.parse_channel(channel, n) == expected


@pytest.mark.parametrize("channel,n", [("13", 2), ("1", 3), ("11111", 3), ("abc", 2)])
def test_parse_channel_rejects(channel, n):
    with pytest.raises(ValueError):
        xsec.parse_channel(channel, n)


def mercedes_angles(theta):
    theta, phi = np.array(mercedes(theta)).T
    return theta, phi


def tc_point(config):
    theta, phi = mercedes_angles(1.2)
    return 0.05 * config.omega0, 0.08 * config.omega0, np.array(theta), np.array(phi)


def test_summed_channels_are_sums_of_explicit_channels():
    config = rest_config(0.5)
    w1, w2, theta, phi = tc_point(config)
    explicit = [
        xsec.dsigma_tc_grid(config, w1, w2, theta, phi, channel=f"{a}{b}{c}{d}")
        for a in "12" for b in "12" for c in "12" for d in "12"
    ]
    total = xsec.dsigma_tc_grid(config, w1, w2, theta, phi, channel="summed")
    assert total == pytest.approx(sum(explicit), rel=1e-12)
    final = xsec.dsigma_tc_grid(config, w1, w2, theta, phi, channel="final-summed")
    assert final == pytest.approx(sum(explicit[:8]), rel=1e-12)


def test_spin_modes():
    config = rest_config(0.5)
    w1, w2, theta, phi = tc_point(config)
    avg = xsec.dsigma_tc_grid(config, w1, w2, theta, phi, spin="averaged")
    summed = xsec.dsigma_tc_grid(config, w1, w2, theta, phi, spin="summed")
    parts = [xsec.dsigma_tc_grid(config, w1, w2, theta, phi, spin=(a, b)) for a in (1, 2) for b in (1, 2)]
    assert summed == pytest.approx(2 * avg, rel=1e-14)
    assert summed == pytest.approx(sum(parts), rel=1e-12)


def test_point_wrappers_return_units_and_closed_energy():
    config = rest_config(0.5)
    w1, w2, theta, phi = tc_point(config)
    from tricompton.kinematics import PhotonLeg

    legs = [PhotonLeg(w, t, p) for w, t, p in zip((w1, w2, 0.0), theta, phi)]
    point = xsec.dsigma_tc(config, legs)
    assert point.units == "b MeV^-2 sr^-3"
    assert point.value == pytest.approx(float(xsec.dsigma_tc_grid(config, w1, w2, theta, phi)))
    assert point.point["omega"][2] > config.cutoff
    dc = xsec.dsigma_dc(config, legs[:2])
    assert dc.units == "b MeV^-1 sr^-2" and dc.value > 0
    sc = xsec.dsigma_sc(config, 1.0)
    assert sc.value == pytest.approx(sum(xsec.dsigma_sc_analytic(config, 1.0, 1, b) for b in (1, 2)), rel=1e-9)


def test_outside_region_is_zero_and_masked():
    config = rest_config(0.18, cutoff=0.0036)
    theta, phi = mercedes_angles(0.5)
    omega = np.array([0.001, 0.05, 0.17])
    value = xsec.dsigma_tc_grid(config, omega[:, None], omega[None, :], theta, phi)
    assert value[0, 1] == 0.0  # below the cutoff
    assert value[2, 2] == 0.0  # beyond the energy budget
    assert value[1, 1] > 0.0
    s = xsec.s_grid(config, omega[:, None], omega[None, :], theta, phi, "111")
    assert s.mask[0, 1] and s.mask[2, 2] and not s.mask[1, 1]
    assert xsec.s_bar_grid(config, omega[:, None], omega[None, :], theta, phi)[1, 1] > s[1, 1]


# -- rest-frame evaluation --------------------------------------------------------


def test_lab_cross_section_equals_rest_frame_over_jacobian(rng):
    config = ScatterConfig(0.3, 3 * M, 0.01, 1)
    checked = 0
    while checked < 20:
        theta = np.arccos(rng.uniform(-1, 1, 3))
        phi = rng.uniform(0, 2 * np.pi, 3)
        w1, w2 = rng.uniform(0.02, 0.3, 2)
        lab = xsec.dsigma_tc_grid(config, w1, w2, theta, phi, channel="summed")
        if lab <= 0:
            continue
        via_rest, w3 = xsec.dsigma_tc_via_rest_frame(config, w1, w2, theta, phi, channel="summed")
        assert via_rest == pytest.approx(lab, rel=1e-8)
        assert np.isfinite(w3)
        checked += 1


def test_rest_frame_evaluation_requires_lab_config():
    config = rest_config(0.5)
    from tricompton.kinematics import boost_config_to_rest_frame

    rest, _ = boost_config_to_rest_frame(ScatterConfig(0.3, 3 * M, 0.01, 1))
    with pytest.raises(xsec.KinematicsError):
        xsec.dsigma_tc_via_rest_frame(rest, 0.01, 0.01, [1, 1, 1], [0, 2, 4])
    assert config.frame == "lab"


def test_s_value_masks_nonpositive():
    s = xsec.s_value([1e-3, 0.0, -1.0])
    assert s[0] == pytest.approx(-3.0)
    assert list(s.mask) == [False, True, True]
