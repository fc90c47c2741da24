"""Scenario files: parsing, unit normalization and validation.

A scenario is a YAML mapping with ``schema: 1``.  Energies accept a unit
suffix (``eV``, ``keV``, ``MeV``, ``GeV``; bare numbers are MeV) and the
symbol ``m`` for the electron mass.  Angles are radians and accept
``pi`` and ``pi - x``.  Unknown keys are rejected with the dotted path of
the offending field.  The full schema is described in README.md.
"""

import math
import re
from dataclasses import dataclass, field

import numpy as np
import yaml

from .constants import ELECTRON_MASS
from .kinematics import KinematicsError, ScatterConfig, beta_from_gamma, doppler_to_rest

SCHEMA_VERSION = 1
TASKS = ("grid-S", "grid-Sbar", "grid-tau-Q", "angular-sweep", "total-vs-omega0", "single-point")
PROCESSES = {"SC": 1, "DC": 2, "TC": 3}
REST_FRAME_GAMMA = 10.0  # compute_frame "auto" switches to the rest frame above this

_UNITS = {"ev": (1.0, 1e6), "kev": (1.0, 1e3), "mev": (1.0, 1.0), "gev": (1e3, 1.0)}  # (multiply, divide)
_ENERGY_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([a-zA-Z]*)\s*$")
_ANGLE_RE = re.compile(r"^\s*pi\s*(?:-\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))?\s*$")
_CUTOFF_RE = re.compile(r"^\s*(omega0|e_i)\s*/\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*$", re.I)

_TOP_KEYS = {"schema", "name", "description", "task", "process", "beam", "compute_frame", "detector",
             "grid", "channels", "spin", "numerics", "output"}  # fmt: skip
_BEAM_KEYS = {"omega0", "e_i", "cutoff", "polarization"}
_DETECTOR_KEYS = {"preset", "theta", "gamma_pi_minus_theta", "legs"}
_LEG_KEYS = {"theta", "phi", "omega"}
_RANGE_KEYS = {"min", "max", "points", "spacing"}
_GRID_KEYS = {"omega1", "omega2"}
_NUMERIC_KEYS = {"seed", "samples", "rel_tol", "max_level", "total_rel_tol", "total_max_level", "gap_tol",
                 "shards", "er_ratio"}  # fmt: skip
_OUTPUT_KEYS = {"path", "format"}


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


# -- scalar parsers -----------------------------------------------------------------


def parse_energy(value, where, m=ELECTRON_MASS):
    """Energy in MeV from a number or a string with a unit suffix.

    >>> parse_energy("2.5 eV", "beam.omega0")
    2.5e-06
    """
    if isinstance(value, bool):
        raise ScenarioError(where, "expected an energy")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        if value.strip().lower() == "m":
            return m
        match = _ENERGY_RE.match(value)
        if match:
            unit = match.group(2).lower() or "mev"
            if unit in _UNITS:
                mul, div = _UNITS[unit]
                return float(match.group(1)) * mul / div
            raise ScenarioError(where, f"unknown energy unit {match.group(2)!r} (use eV, keV, MeV, GeV)")
    raise ScenarioError(where, f"cannot parse energy {value!r}")


def parse_angle(value, where):
    """Angle in radians: a number, ``"pi"`` or ``"pi - x"``."""
    if isinstance(value, bool):
        raise ScenarioError(where, "expected an angle")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        match = _ANGLE_RE.match(value)
        if match:
            return math.pi - float(match.group(1) or 0.0)
        try:
            return float(value)
        except ValueError:
            pass
    raise ScenarioError(where, f"cannot parse angle {value!r}")


def _int(value, where, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(where, "expected an integer")
    if minimum is not None and value < minimum:
        raise ScenarioError(where, f"must be >= {minimum}")
    return value


def _float(value, where, positive=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(where, "expected a number")
    if positive and not value > 0:
        raise ScenarioError(where, "must be positive")
    return float(value)


def _mapping(value, where, allowed):
    if not isinstance(value, dict):
        raise ScenarioError(where, "expected a mapping")
    for key in value:
        if key not in allowed:
            raise ScenarioError(f"{where}.{key}" if where else str(key), "unknown key")
    return value


# -- ranges -------------------------------------------------------------------------------


@dataclass(frozen=True)
class Range:
    """Sampling of a scalar axis; ``min``/``max`` may be symbolic (``"cutoff"``, ``"auto"``)."""

    lo: object
    hi: object
    points: int
    spacing: str = "linear"
    values: tuple = ()

    def resolve(self, lo=None, hi=None):
        """Numeric sample points with symbolic ends replaced by ``lo``/``hi``."""
        if self.values:
            return np.asarray(self.values, dtype=float)
        a = lo if isinstance(self.lo, str) else self.lo
        b = hi if isinstance(self.hi, str) else self.hi
        if self.spacing == "log":
            return np.geomspace(a, b, self.points)
        return np.linspace(a, b, self.points)


def parse_range(value, where, scalar, symbols=()):
    """A single value, a list of values or ``{min, max, points, spacing}``."""
    if isinstance(value, (int, float, str)) and not isinstance(value, bool):
        value = [value]
    if isinstance(value, list):
        if not value:
            raise ScenarioError(where, "empty list")
        return Range(None, None, len(value), values=tuple(scalar(v, f"{where}[{i}]") for i, v in enumerate(value)))
    spec = _mapping(value, where, _RANGE_KEYS)
    for key in ("min", "max", "points"):
        if key not in spec:
            raise ScenarioError(f"{where}.{key}", "missing")
    ends = []
    for key in ("min", "max"):
        v = spec[key]
        ends.append(v if isinstance(v, str) and v in symbols else scalar(v, f"{where}.{key}"))
    points = _int(spec["points"], f"{where}.points", 1)
    spacing = spec.get("spacing", "linear")
    if spacing not in ("linear", "log"):
        raise ScenarioError(f"{where}.spacing", "must be 'linear' or 'log'")
    lo, hi = ends
    if not isinstance(lo, str) and not isinstance(hi, str):
        if points > 1 and not hi > lo:
            raise ScenarioError(where, "max must exceed min")
        if spacing == "log" and not lo > 0:
            raise ScenarioError(f"{where}.min", "log spacing needs a positive minimum")
    return Range(lo, hi, points, spacing)


# -- scenario -------------------------------------------------------------------------------


@dataclass(frozen=True)
class Beam:
    omega0: object  # float, or Range for total-vs-omega0
    e_i: float
    cutoff: tuple  # ("abs", MeV) | ("omega0", divisor) | ("e_i", divisor)
    polarization: int = 1

    def cutoff_for(self, omega0):
        kind, value = self.cutoff
        if kind == "abs":
            return value
        return (omega0 if kind == "omega0" else self.e_i) / value

    def config(self, omega0=None):
        w0 = self.omega0 if omega0 is None else omega0
        try:
            return ScatterConfig(w0, self.e_i, self.cutoff_for(w0), self.polarization)
        except KinematicsError as exc:
            text = str(exc)
            where = "beam.e_i" if "E_i" in text else "beam.cutoff" if "cutoff" in text else "beam.omega0"
            raise ScenarioError(where, text) from None


@dataclass(frozen=True)
class Scenario:
    """A validated scenario with energies in MeV and angles in radians."""

    task: str
    processes: tuple
    beam: Beam
    compute_frame: str = "auto"
    detector: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    channels: dict = field(default_factory=dict)
    spin: str = "averaged"
    numerics: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    name: str = ""
    description: str = ""
    raw: dict = field(default_factory=dict)

    @property
    def process(self):
        return self.processes[0]

    def frame_for(self, config):
        """Frame in which the computation runs: ``"lab"`` or ``"rest"``."""
        if self.compute_frame == "auto":
            return "rest" if config.gamma > REST_FRAME_GAMMA else "lab"
        return self.compute_frame

    def angles(self, n):
        """Fixed detector angles ``(theta, phi)``, each length ``n``."""
        det = self.detector
        if "legs" in det:
            legs = det["legs"][:n]
            return np.array([leg["theta"] for leg in legs]), np.array([leg["phi"] for leg in legs])
        theta = det["theta"]
        return np.full(n, theta), 2.0 * np.pi * np.arange(1, n + 1) / 3.0

    def sweep(self, gamma):
        """Lab polar angles of an angular sweep and the plotted abscissa ``(name, values)``."""
        det = self.detector
        if "gamma_pi_minus_theta" in det:
            x = det["gamma_pi_minus_theta"].resolve()
            return np.pi - x / gamma, ("gamma_pi_minus_theta", x)
        theta = det["theta"].resolve()
        return theta, ("theta", theta)


_CHANNEL_DIGITS = {1: 2, 2: 3, 3: 4}


def _all_channels(n):
    return tuple(format(i, f"0{n + 1}b").translate(str.maketrans("01", "12")) for i in range(2 ** (n + 1)))


def _parse_channels(value, processes, where="channels"):
    def one(spec, proc, loc):
        n = PROCESSES[proc]
        if spec in ("all",):
            return _all_channels(n)
        if spec in ("summed", "final-summed"):
            return (spec,)
        if not isinstance(spec, list) or not spec:
            raise ScenarioError(loc, "expected 'all', 'summed', 'final-summed' or a non-empty list")
        out = []
        for i, ch in enumerate(spec):
            text = str(ch)
            if text not in ("summed", "final-summed") and (
                not set(text) <= {"1", "2"} or len(text) not in (n, n + 1)
            ):
                raise ScenarioError(f"{loc}[{i}]", f"invalid channel {ch!r} for {proc}")
            out.append(text)
        return tuple(out)

    if value is None:
        return {p: ("final-summed",) for p in processes}
    if isinstance(value, dict):
        _mapping(value, where, set(processes))
        return {p: one(value.get(p, "final-summed"), p, f"{where}.{p}") for p in processes}
    return {p: one(value, p, where) for p in processes}


def _parse_beam(spec, task):
    spec = _mapping(spec, "beam", _BEAM_KEYS)
    for key in ("omega0", "e_i", "cutoff"):
        if key not in spec:
            raise ScenarioError(f"beam.{key}", "missing")
    e_i = parse_energy(spec["e_i"], "beam.e_i")
    if e_i < ELECTRON_MASS * (1.0 - 1e-12):
        raise ScenarioError("beam.e_i", f"E_i = {e_i} MeV is below the electron mass {ELECTRON_MASS} MeV")
    if task == "total-vs-omega0":
        omega0 = parse_range(spec["omega0"], "beam.omega0", parse_energy)
        if min(omega0.resolve()) <= 0:
            raise ScenarioError("beam.omega0", "must be positive")
    else:
        omega0 = parse_energy(spec["omega0"], "beam.omega0")
        if not omega0 > 0:
            raise ScenarioError("beam.omega0", "must be positive")
    raw = spec["cutoff"]
    match = _CUTOFF_RE.match(raw) if isinstance(raw, str) else None
    if match:
        divisor = float(match.group(2))
        if not divisor > 0:
            raise ScenarioError("beam.cutoff", "divisor must be positive")
        cutoff = (match.group(1).lower(), divisor)
    else:
        value = parse_energy(raw, "beam.cutoff")
        if not value > 0:
            raise ScenarioError("beam.cutoff", "must be positive")
        cutoff = ("abs", value)
    pol = spec.get("polarization", 1)
    pol = {"x": 1, "y": 2, 1: 1, 2: 2, "1": 1, "2": 2}.get(pol)
    if pol is None:
        raise ScenarioError("beam.polarization", "must be x, y, 1 or 2")
    return Beam(omega0, e_i, cutoff, pol)


def _parse_detector(spec, task):
    spec = _mapping(spec, "detector", _DETECTOR_KEYS)
    out = {}
    preset = spec.get("preset")
    if "legs" in spec:
        if preset is not None or "theta" in spec:
            raise ScenarioError("detector.legs", "legs excludes preset and theta")
        legs = spec["legs"]
        if not isinstance(legs, list) or not 1 <= len(legs) <= 3:
            raise ScenarioError("detector.legs", "expected a list of one to three legs")
        parsed = []
        for i, leg in enumerate(legs):
            loc = f"detector.legs[{i}]"
            leg = _mapping(leg, loc, _LEG_KEYS)
            for key in ("theta", "phi"):
                if key not in leg:
                    raise ScenarioError(f"{loc}.{key}", "missing")
            entry = {"theta": parse_angle(leg["theta"], f"{loc}.theta"), "phi": parse_angle(leg["phi"], f"{loc}.phi")}
            if "omega" in leg:
                entry["omega"] = parse_energy(leg["omega"], f"{loc}.omega")
            parsed.append(entry)
        out["legs"] = parsed
        return out
    if preset != "mercedes":
        raise ScenarioError("detector.preset", "expected 'mercedes' (or give explicit legs)")
    out["preset"] = preset
    if task == "angular-sweep":
        if ("theta" in spec) == ("gamma_pi_minus_theta" in spec):
            raise ScenarioError("detector", "angular-sweep needs exactly one of theta, gamma_pi_minus_theta")
        if "theta" in spec:
            out["theta"] = parse_range(spec["theta"], "detector.theta", parse_angle)
        else:
            out["gamma_pi_minus_theta"] = parse_range(
                spec["gamma_pi_minus_theta"], "detector.gamma_pi_minus_theta", lambda v, w: _float(v, w, False)
            )
        return out
    if "gamma_pi_minus_theta" in spec:
        raise ScenarioError("detector.gamma_pi_minus_theta", "only valid for angular-sweep")
    if "theta" not in spec:
        raise ScenarioError("detector.theta", "missing")
    out["theta"] = parse_angle(spec["theta"], "detector.theta")
    return out


def parse_scenario(doc):
    """Validate a scenario mapping; returns a :class:`Scenario`.

    Raises
    ------
    ScenarioError
        Names the dotted path of the first offending field.
    """
    doc = _mapping(doc, "", _TOP_KEYS)
    if doc.get("schema") != SCHEMA_VERSION:
        raise ScenarioError("schema", f"expected schema: {SCHEMA_VERSION}")
    task = doc.get("task")
    if task not in TASKS:
        raise ScenarioError("task", f"expected one of {', '.join(TASKS)}")
    procs = doc.get("process", "TC")
    procs = [procs] if isinstance(procs, str) else procs
    if not isinstance(procs, list) or not procs or any(p not in PROCESSES for p in procs):
        raise ScenarioError("process", "expected SC, DC, TC or a list of them")
    if len(set(procs)) != len(procs):
        raise ScenarioError("process", "duplicate process")
    if task in ("grid-S", "grid-Sbar", "grid-tau-Q") and procs != ["TC"]:
        raise ScenarioError("process", f"{task} is defined for TC only")
    if task == "single-point" and len(procs) != 1:
        raise ScenarioError("process", "single-point takes one process")
    if "beam" not in doc:
        raise ScenarioError("beam", "missing")
    beam = _parse_beam(doc["beam"], task)

    frame = doc.get("compute_frame", "auto")
    if frame not in ("auto", "lab", "rest"):
        raise ScenarioError("compute_frame", "expected auto, lab or rest")
    if frame == "rest" and beam.e_i - ELECTRON_MASS <= 1e-12 * ELECTRON_MASS:
        frame = "lab"  # electron already at rest

    detector = {}
    if task != "total-vs-omega0":
        if "detector" not in doc:
            raise ScenarioError("detector", "missing")
        detector = _parse_detector(doc["detector"], task)
        n_max = max(PROCESSES[p] for p in procs)
        if "legs" in detector and len(detector["legs"]) < n_max:
            raise ScenarioError("detector.legs", f"need {n_max} legs")
    elif "detector" in doc:
        raise ScenarioError("detector", "not used by total-vs-omega0")

    grid = {}
    if task.startswith("grid-"):
        spec = _mapping(doc.get("grid"), "grid", _GRID_KEYS)
        for key in ("omega1", "omega2"):
            if key not in spec:
                raise ScenarioError(f"grid.{key}", "missing")
            grid[key] = parse_range(spec[key], f"grid.{key}", parse_energy, symbols=("cutoff", "auto"))
    elif "grid" in doc:
        raise ScenarioError("grid", f"not used by {task}")

    if task == "single-point":
        legs = detector.get("legs")
        n = PROCESSES[procs[0]]
        if legs is None or any("omega" not in leg for leg in legs[: n - 1]):
            raise ScenarioError("detector.legs", "single-point needs legs with omega for all but the last photon")

    channels = _parse_channels(doc.get("channels"), procs)
    if task == "grid-Sbar":
        channels = {"TC": ("summed",)}
    spin = doc.get("spin", "summed" if task == "grid-tau-Q" else "averaged")
    if spin not in ("averaged", "summed"):
        raise ScenarioError("spin", "expected averaged or summed")

    num = _mapping(doc.get("numerics", {}), "numerics", _NUMERIC_KEYS)
    numerics = {}
    if "seed" in num:
        numerics["seed"] = _int(num["seed"], "numerics.seed", 0)
    if "samples" in num:
        numerics["samples"] = _int(num["samples"], "numerics.samples", 1000)
    if "shards" in num:
        numerics["shards"] = _int(num["shards"], "numerics.shards", 1)
    for key in ("max_level", "total_max_level"):
        if key in num:
            numerics[key] = _int(num[key], f"numerics.{key}", 2)
    for key in ("rel_tol", "total_rel_tol", "gap_tol", "er_ratio"):
        if key in num:
            numerics[key] = _float(num[key], f"numerics.{key}")

    out = _mapping(doc.get("output", {}), "output", _OUTPUT_KEYS)
    fmt = out.get("format")
    if fmt is not None and fmt not in ("csv", "json"):
        raise ScenarioError("output.format", "expected csv or json")

    return Scenario(
        task=task,
        processes=tuple(procs),
        beam=beam,
        compute_frame=frame,
        detector=detector,
        grid=grid,
        channels=channels,
        spin=spin,
        numerics=numerics,
        output=dict(out),
        name=str(doc.get("name", "")),
        description=str(doc.get("description", "")),
        raw=doc,
    )


def load_scenario(path):
    """Read and validate a scenario file.

    Raises
    ------
    OSError
        The file cannot be read.
    ScenarioError
        Parse or validation failure.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("<file>", f"YAML parse error: {exc}") from None
    return parse_scenario(doc)


def grid_bounds(config):
    """Symbolic grid ends: ``"cutoff"`` = eps and ``"auto"`` = the energy left after two threshold photons."""
    return config.cutoff, config.omega0 + config.e_i - config.m - 2.0 * config.cutoff


# -- validation report ------------------------------------------------------------------


def validation_report(scenario):
    """Derived quantities and warnings; performs no cross-section evaluation."""
    beam = scenario.beam
    omegas = beam.omega0.resolve() if isinstance(beam.omega0, Range) else np.array([beam.omega0])
    configs = [beam.config(float(w)) for w in omegas]
    cfg = configs[0]
    gamma = cfg.gamma
    omega0_rest, _ = doppler_to_rest(np.asarray(cfg.omega0), np.asarray(0.0), gamma)
    frame = scenario.frame_for(cfg)
    n_max = max(PROCESSES[p] for p in scenario.processes)
    report = {
        "task": scenario.task,
        "processes": list(scenario.processes),
        "gamma_i": gamma,
        "beta_i": beta_from_gamma(gamma),
        "omega0_MeV": [float(c.omega0) for c in configs],
        "omega0_rest_MeV": float(omega0_rest) if len(configs) == 1 else None,
        "cutoff_MeV": [float(c.cutoff) for c in configs],
        "compute_frame": frame,
        "threshold_regime": (
            "lab cutoff mapped per leg to the rest frame: eps / [gamma (1 - beta cos theta')]"
            if frame == "rest" else "lab cutoff applied directly to every emitted photon"
        ),  # fmt: skip
        "warnings": [],
    }
    for c in configs:
        budget = c.omega0 + c.e_i - c.m
        if n_max * c.cutoff >= budget:
            report["warnings"].append(
                f"omega0={c.omega0!r} MeV: {n_max} photons above eps={c.cutoff!r} MeV exceed the available "
                f"energy {budget!r} MeV; all grids empty"
            )
    if scenario.grid:
        lo, budget = grid_bounds(cfg)
        for key, rng in scenario.grid.items():
            vals = rng.resolve(lo, budget)
            if np.all(vals >= budget) or np.all(vals < cfg.cutoff):
                report["warnings"].append(f"grid.{key}: every point lies outside [eps, {budget!r}] MeV; grid empty")
    return report
