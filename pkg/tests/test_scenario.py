import copy
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tricompton.constants import ELECTRON_MASS as M
from tricompton.scenario import (
    Range,
    ScenarioError,
    grid_bounds,
    load_scenario,
    parse_angle,
    parse_energy,
    parse_range,
    parse_scenario,
    validation_report,
)

SCENARIOS = sorted((Path(__file__).parent.parent / "scenarios").glob("fig*.yaml"))

BASE = {
    "schema": 1,
    "task": "grid-S",
    "process": "TC",
    "beam": {"omega0": "180 keV", "e_i": "m", "cutoff": "omega0/50", "polarization": "x"},
    "detector": {"preset": "mercedes", "theta": 0.5},
    "grid": {"omega1": {"min": "cutoff", "max": "180 keV", "points": 5},
             "omega2": {"min": "cutoff", "max": "auto", "points": 5}},  # fmt: skip
    "channels": ["111"],
}


def doc(**changes):
    out = copy.deepcopy(BASE)
    for path, value in changes.items():
        node = out
        keys = path.split("__")
        for key in keys[:-1]:
            node = node[key]
        if value is None:
            node.pop(keys[-1])
        else:
            node[keys[-1]] = value
    return out


def error_field(d):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(d)
    return info.value.field


# -- scalars ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "text,expected",
    [("2.5 eV", 2.5e-6), ("180 keV", 0.18), ("180keV", 0.18), ("3.2 MeV", 3.2), ("50 GeV", 5e4), (0.5, 0.5),
     ("1e-3", 1e-3), ("m", M), ("2.5e3 eV", 2.5e-3)],
)  # fmt: skip
def test_parse_energy_units(text, expected):
    assert parse_energy(text, "x") == expected


@given(value=st.floats(1e-6, 1e6), unit=st.sampled_from([("eV", 1e-6), ("keV", 1e-3), ("MeV", 1.0), ("GeV", 1e3)]))
def test_parse_energy_scales(value, unit):
    assert parse_energy(f"{value!r} {unit[0]}", "x") == pytest.approx(value * unit[1], rel=1e-15)


@pytest.mark.parametrize("bad", ["3 TeV", "fast", True, None, "1.2.3 MeV"])
def test_parse_energy_rejects(bad):
    with pytest.raises(ScenarioError) as info:
        parse_energy(bad, "beam.omega0")
    assert info.value.field == "beam.omega0"


def test_parse_angle():
    assert parse_angle("pi", "a") == np.pi
    assert parse_angle("pi - 4e-5", "a") == np.pi - 4e-5
    assert parse_angle(0.5, "a") == 0.5
    with pytest.raises(ScenarioError):
        parse_angle("2 pi", "a")


def test_parse_range_forms():
    r = parse_range({"min": 1, "max": 100, "points": 3, "spacing": "log"}, "r", lambda v, w: float(v))
    assert np.allclose(r.resolve(), [1, 10, 100])
    r = parse_range([1, 2, 5], "r", lambda v, w: float(v))
    assert list(r.resolve()) == [1.0, 2.0, 5.0]
    r = parse_range({"min": "cutoff", "max": 1.0, "points": 2}, "r", parse_energy, symbols=("cutoff",))
    assert list(r.resolve(0.5)) == [0.5, 1.0]
    assert isinstance(r, Range)


@pytest.mark.parametrize(
    "spec,where",
    [({"min": 2, "max": 1, "points": 3}, "r"), ({"min": 1, "points": 3}, "r.max"),
     ({"min": 0, "max": 1, "points": 3, "spacing": "log"}, "r.min"),
     ({"min": 0, "max": 1, "points": 3, "spacing": "cubic"}, "r.spacing"),
     ({"min": 0, "max": 1, "points": 3, "step": 1}, "r.step"), ([], "r")],
)  # fmt: skip
def test_parse_range_errors(spec, where):
    with pytest.raises(ScenarioError) as info:
        parse_range(spec, "r", lambda v, w: float(v))
    assert info.value.field == where


# -- documents ------------------------------------------------------------------------


def test_base_document_parses():
    sc = parse_scenario(BASE)
    assert sc.beam.omega0 == 0.18
    config = sc.beam.config()
    assert config.cutoff == pytest.approx(0.0036)
    assert sc.frame_for(config) == "lab"
    theta, phi = sc.angles(3)
    assert np.allclose(theta, 0.5) and np.allclose(phi, 2 * np.pi * np.arange(1, 4) / 3)
    assert sc.channels == {"TC": ("111",)}
    assert grid_bounds(config) == pytest.approx((0.0036, 0.18 - 0.0072))


@pytest.mark.parametrize(
    "changes,where",
    [
        ({"colour": "red"}, "colour"),
        ({"beam__spin": 1}, "beam.spin"),
        ({"grid__omega1__step": 2}, "grid.omega1.step"),
        ({"schema": 2}, "schema"),
        ({"task": "grid-T"}, "task"),
        ({"process": "DC"}, "process"),
        ({"beam__e_i": "0.3 MeV"}, "beam.e_i"),
        ({"beam__omega0": "-1 MeV"}, "beam.omega0"),
        ({"beam__cutoff": "omega0/0"}, "beam.cutoff"),
        ({"beam__polarization": "z"}, "beam.polarization"),
        ({"detector__preset": "ring"}, "detector.preset"),
        ({"detector__theta": None}, "detector.theta"),
        ({"grid": None}, "grid"),
        ({"channels": ["13"]}, "channels[0]"),
        ({"spin": "up"}, "spin"),
        ({"numerics": {"samples": 10}}, "numerics.samples"),
        ({"numerics": {"gap_tol": -1}}, "numerics.gap_tol"),
        ({"numerics": {"seeds": 1}}, "numerics.seeds"),
        ({"output": {"format": "xml"}}, "output.format"),
        ({"output": {"file": "x"}}, "output.file"),
    ],
)
def test_invalid_documents_name_the_field(changes, where):
    assert error_field(doc(**changes)) == where


def test_channel_forms():
    base = doc(task="angular-sweep", process=["SC", "DC", "TC"], grid=None, channels=None,
               detector={"preset": "mercedes", "theta": {"min": 0.1, "max": 3.0, "points": 4}})  # fmt: skip
    sc = parse_scenario(dict(base, channels="all"))
    assert len(sc.channels["SC"]) == 4 and len(sc.channels["DC"]) == 8 and len(sc.channels["TC"]) == 16
    sc = parse_scenario(dict(base, channels={"DC": ["121", "112"]}))
    assert sc.channels == {"SC": ("final-summed",), "DC": ("121", "112"), "TC": ("final-summed",)}
    assert error_field(dict(base, channels={"QC": "all"})) == "channels.QC"
    assert parse_scenario(dict(base, task="angular-sweep")).sweep(1.0)[1][0] == "theta"


def test_gamma_sweep_and_auto_frame():
    d = doc(task="angular-sweep", process="TC", grid=None,
            beam={"omega0": "2.5 eV", "e_i": "50 GeV", "cutoff": "e_i/100"},
            detector={"preset": "mercedes", "gamma_pi_minus_theta": {"min": 0.5, "max": 2, "points": 4}})  # fmt: skip
    sc = parse_scenario(d)
    config = sc.beam.config()
    assert config.cutoff == pytest.approx(500.0)
    assert sc.frame_for(config) == "rest"
    theta, (name, x) = sc.sweep(config.gamma)
    assert name == "gamma_pi_minus_theta"
    assert np.allclose(config.gamma * (np.pi - theta), x)


def test_rest_frame_request_at_rest_falls_back_to_lab():
    assert parse_scenario(doc(compute_frame="rest")).compute_frame == "lab"


def test_single_point_requires_energies():
    d = doc(task="single-point", grid=None, detector={"legs": [{"theta": 1, "phi": 0}] * 3})
    assert error_field(d) == "detector.legs"


def test_validation_report_for_high_energy_beam():
    d = doc(beam={"omega0": "2.5 eV", "e_i": "50 GeV", "cutoff": "e_i/100"},
            grid={"omega1": {"min": "cutoff", "max": "6 GeV", "points": 3},
                  "omega2": {"min": "cutoff", "max": "6 GeV", "points": 3}})  # fmt: skip
    report = validation_report(parse_scenario(d))
    assert report["gamma_i"] == pytest.approx(5e4 / M)
    assert report["compute_frame"] == "rest"
    assert report["omega0_rest_MeV"] == pytest.approx(2 * report["gamma_i"] * 2.5e-6, rel=1e-9)
    assert report["warnings"] == []


def test_validation_report_warns_about_empty_grids():
    d = doc(beam={"omega0": "10 keV", "e_i": "m", "cutoff": "4 keV"})
    report = validation_report(parse_scenario(d))
    assert any("all grids empty" in w for w in report["warnings"])


def test_below_mass_electron_names_field():
    assert error_field(doc(beam__e_i="0.5 MeV")) == "beam.e_i"


def test_cutoff_beyond_budget_names_field():
    with pytest.raises(ScenarioError) as info:
        parse_scenario(doc(beam__cutoff="1 MeV")).beam.config()
    assert info.value.field == "beam.cutoff"


@pytest.mark.parametrize("path", SCENARIOS, ids=[p.stem for p in SCENARIOS])
def test_shipped_scenarios_validate(path):
    sc = load_scenario(path)
    report = validation_report(sc)
    assert report["warnings"] == []


def test_shipped_scenarios_cover_every_figure():
    assert [p.stem for p in SCENARIOS] == [f"fig{i}" for i in range(2, 9)]


def test_load_scenario_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema: [1\n")
    with pytest.raises(ScenarioError) as info:
        load_scenario(bad)
    assert info.value.field == "<file>"
    with pytest.raises(OSError):
        load_scenario(tmp_path / "missing.yaml")
