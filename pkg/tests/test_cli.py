import csv
import io
import json

import numpy as np
import pytest
import yaml

from tricompton import cli, entanglement, xsec
from tricompton.constants import ELECTRON_MASS as M
from tricompton.kinematics import ScatterConfig


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def write_scenario(tmp_path, doc, name="s.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


GRID = {
    "schema": 1,
    "task": "grid-S",
    "process": "TC",
    "beam": {"omega0": "180 keV", "e_i": "m", "cutoff": "omega0/50", "polarization": "x"},
    "detector": {"preset": "mercedes", "theta": 0.5},
    "grid": {"omega1": {"min": "cutoff", "max": "180 keV", "points": 6},
             "omega2": {"min": "cutoff", "max": "180 keV", "points": 6}},  # fmt: skip
    "channels": ["111", "221"],
}


def read_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], dtype=float)


def test_grid_run_matches_library(tmp_path):
    path = write_scenario(tmp_path, GRID)
    out_path = tmp_path / "out" / "grid.csv"
    code, _, err = run(["run", path, "--output", str(out_path)])
    assert code == 0, err
    header, rows = read_csv(out_path.read_text())
    assert header == ["omega1", "omega2", "omega3", "S_111", "S_221"]
    assert rows.shape == (36, 5)
    config = ScatterConfig(0.18, M, 0.0036, 1)
    theta = np.full(3, 0.5)
    phi = 2 * np.pi / 3 * np.arange(1, 4)
    for w1, w2, _, s111, _ in rows:
        expected = xsec.s_grid(config, w1, w2, theta, phi, "111")
        if np.ma.is_masked(expected):
            assert s111 == cli.SENTINEL
        else:
            assert s111 == pytest.approx(float(expected), rel=1e-12)
    assert (rows[:, 3] == cli.SENTINEL).any() and (rows[:, 3] != cli.SENTINEL).any()
    meta = json.loads((tmp_path / "out" / "grid.csv.meta.json").read_text())
    assert meta["masked_sentinel"] == cli.SENTINEL
    assert meta["columns"][3] == {"name": "S_111", "unit": "log10(b MeV^-2 sr^-3)"} or meta["columns"][3]["name"] == "S_111"
    assert meta["scenario"]["task"] == "grid-S"


def strip_volatile(text):
    doc = json.loads(text)
    doc["metadata"].pop("timestamp")
    doc["metadata"].pop("wall_time_s")
    return doc


def test_runs_are_deterministic(tmp_path):
    doc = {"schema": 1, "task": "total-vs-omega0", "process": ["SC", "DC"],
           "beam": {"omega0": ["0.3 MeV", "1 MeV"], "e_i": "m", "cutoff": "omega0/50"},
           "numerics": {"seed": 4, "samples": 1000}, "output": {"format": "json"}}  # fmt: skip
    path = write_scenario(tmp_path, doc)
    first = run(["run", path, "--allow-flagged"])
    second = run(["run", path, "--allow-flagged", "--threads", "2"])
    assert first[0] == 0 and second[0] == 0
    a, b = strip_volatile(first[1]), strip_volatile(second[1])
    assert a["rows"] == b["rows"]
    csv_a = tmp_path / "a.csv"
    csv_b = tmp_path / "b.csv"
    run(["run", path, "--allow-flagged", "--format", "csv", "-o", str(csv_a)])
    run(["run", path, "--allow-flagged", "--format", "csv", "-o", str(csv_b)])
    assert csv_a.read_bytes() == csv_b.read_bytes()
    header, rows = read_csv(csv_a.read_text())
    assert header[:4] == ["omega0", "cutoff", "sigma_SC", "sigma_SC_err"]
    assert rows[0, 2] == xsec.sigma_sc_total(0.3)


def test_seed_flag_changes_monte_carlo(tmp_path):
    argv = ["total", "--process", "DC", "--omega0", "0.3 MeV", "--cutoff", "omega0/50", "--samples", "1000",
            "--allow-flagged"]  # fmt: skip
    a = json.loads(run(argv + ["--seed", "1"])[1])
    b = json.loads(run(argv + ["--seed", "2"])[1])
    assert a["rows"][0][2] != b["rows"][0][2]
    assert a["metadata"]["seed"] == 1 and a["metadata"]["samples"] == 1000


def test_validate_prints_derived_quantities(tmp_path):
    code, out, _ = run(["validate", "scenarios/fig5.yaml"])
    assert code == 0
    report = json.loads(out)
    assert report["gamma_i"] == pytest.approx(97847.56, rel=1e-6)
    assert report["compute_frame"] == "rest"


@pytest.mark.parametrize(
    "argv",
    [
        ["run"],
        ["frobnicate"],
        ["total", "--process", "TC", "--omega0", "3 TeV", "--cutoff", "omega0/50"],
        ["total", "--process", "TC", "--omega0", "1 MeV", "--e-i", "0.3 MeV", "--cutoff", "omega0/50"],
        ["total", "--process", "DC", "--omega0", "1 MeV", "--cutoff", "omega0/50", "--samples", "10"],
        ["point", "--process", "DC", "--omega0", "1 MeV", "--cutoff", "omega0/50", "--theta", "1", "--phi", "0"],
    ],
)
def test_validation_errors_exit_1(argv):
    code, _, err = run(argv)
    assert code == cli.EXIT_VALIDATION
    assert "validation error" in err


def test_below_mass_electron_reports_field(tmp_path):
    doc = dict(GRID, beam=dict(GRID["beam"], e_i="0.4 MeV"))
    code, _, err = run(["validate", write_scenario(tmp_path, doc)])
    assert code == 1 and "beam.e_i" in err


def test_unknown_key_reports_field(tmp_path):
    doc = dict(GRID, numerics={"sead": 1})
    code, _, err = run(["run", write_scenario(tmp_path, doc)])
    assert code == 1 and "numerics.sead" in err


def test_missing_file_exits_3(tmp_path):
    code, _, err = run(["run", str(tmp_path / "nope.yaml")])
    assert code == cli.EXIT_IO and "I/O error" in err


def test_unwritable_output_exits_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, _ = run(["run", write_scenario(tmp_path, GRID), "-o", str(blocker / "x.csv")])
    assert code == cli.EXIT_IO


def test_numerical_flag_exits_2(tmp_path):
    doc = {"schema": 1, "task": "total-vs-omega0", "process": "DC",
           "beam": {"omega0": "3 MeV", "e_i": "m", "cutoff": "omega0/50"},
           "numerics": {"samples": 1000, "total_max_level": 2, "total_rel_tol": 1e-12}}  # fmt: skip
    path = write_scenario(tmp_path, doc)
    code, _, err = run(["run", path, "-o", "-"])
    assert code == cli.EXIT_FLAGGED and "numerical flag" in err
    code, out, _ = run(["run", path, "-o", "-", "--allow-flagged"])
    assert code == 0 and out.startswith("omega0,")


def test_point_subcommand_with_entanglement():
    argv = ["point", "--process", "TC", "--omega0", "180 keV", "--cutoff", "omega0/50",
            "--omega", "0.05", "0.06", "--theta", "0.5", "0.5", "0.5",
            "--phi", str(2 * np.pi / 3), str(4 * np.pi / 3), str(2 * np.pi), "--channel", "111", "--channel", "summed"]  # fmt: skip
    code, out, err = run(argv)
    assert code == 0, err
    doc = json.loads(out)
    config = ScatterConfig(0.18, M, 0.0036, 1)
    theta = np.full(3, 0.5)
    phi = 2 * np.pi / 3 * np.arange(1, 4)
    assert doc["values"][0]["value"] == pytest.approx(float(xsec.dsigma_tc_grid(config, 0.05, 0.06, theta, phi, "111")))
    rho, meta = entanglement.from_json(json.dumps(doc["density_matrix"]))
    assert np.trace(rho).real == pytest.approx(1.0)
    assert doc["entanglement"]["certificate"]["ok"]
    assert 0 <= doc["entanglement"]["tau"] <= 0.5 + 1e-6
    assert doc["metadata"]["schema"] == cli.RESULT_SCHEMA


def test_point_subcommand_single_compton():
    argv = ["point", "--process", "SC", "--omega0", "1 MeV", "--cutoff", "1 keV", "--theta", "1.0", "--phi", "0",
            "--channel", "12"]  # fmt: skip
    code, out, _ = run(argv)
    assert code == 0
    config = ScatterConfig(1.0, M, 1e-3, 1)
    value = json.loads(out)["values"][0]["value"]
    assert value == pytest.approx(float(xsec.dsigma_sc_analytic(config, 1.0, 1, 2)), rel=1e-9)


def test_point_rejects_csv():
    argv = ["point", "--process", "SC", "--omega0", "1 MeV", "--cutoff", "1 keV", "--theta", "1.0", "--phi", "0",
            "--format", "csv"]  # fmt: skip
    assert run(argv)[0] == cli.EXIT_VALIDATION


def test_angular_sweep_degeneracy(tmp_path):
    doc = {"schema": 1, "task": "angular-sweep", "process": ["SC", "DC"],
           "beam": {"omega0": "0.5 MeV", "e_i": "m", "cutoff": "omega0/50"},
           "detector": {"preset": "mercedes", "theta": {"min": 0.5, "max": 2.5, "points": 3}},
           "channels": {"SC": ["11"], "DC": ["121", "112"]}}  # fmt: skip
    code, out, err = run(["run", write_scenario(tmp_path, doc), "-o", "-"])
    assert code == 0, err
    header, rows = read_csv(out)
    assert header == ["theta", "SC_11", "DC_121", "DC_112"]
    np.testing.assert_allclose(rows[:, 2], rows[:, 3], rtol=1e-9)
    config = ScatterConfig(0.5, M, 0.01, 1)
    expected = xsec.dsigma_sc_analytic(config, rows[:, 0], 1, 1, phi1=2 * np.pi / 3)
    np.testing.assert_allclose(rows[:, 1], expected, rtol=1e-9)


def test_tau_grid_small(tmp_path):
    doc = {"schema": 1, "task": "grid-tau-Q", "process": "TC",
           "beam": {"omega0": "180 keV", "e_i": "m", "cutoff": "omega0/50"},
           "detector": {"preset": "mercedes", "theta": 0.5},
           "grid": {"omega1": {"min": "40 keV", "max": "80 keV", "points": 2},
                    "omega2": {"min": "40 keV", "max": "80 keV", "points": 2}}}  # fmt: skip
    code, out, err = run(["run", write_scenario(tmp_path, doc), "-o", "-"])
    assert code == 0, err
    header, rows = read_csv(out)
    assert header[:5] == ["omega1", "omega2", "omega3", "tau", "Q"]
    assert np.all((rows[:, 3] >= 0) & (rows[:, 3] <= 0.5))
    assert np.all((rows[:, 4] >= 0) & (rows[:, 4] <= 2 + 1e-9))
