"""Declarative scenarios: YAML schema, defaults, validation, digest, and
construction of the solver objects a scenario describes.

Schema (every section optional except ``params.p`` and ``params.q``)::

    name: str
    problem: scalar | wang | morgan | system | kinetic
    params:   {p, q, sigma (default: critical value), mu (float or "auto"),
               n, d, big_m, x0}
    geometry: {kind: interval | radial, lo, hi (float or "auto"), nodes,
               bc: neumann | dirichlet | cauchy}
    a_spec:   {kind: power | one_minus_cos | constant | tabulated | none,
               scale, value, table, zero_set, zero_order}
    system:   {d1, d2, m, f: {kind, lam, h0, l, table}, v0, v_mode}
    initial_data: expression in x, or "lower_solution(t0, scale)"
    horizon: float
    solver:   SolverControls fields
    monitors: [comparison]
    kinetics: {xi: [start, stop, num], eta: [start, stop, num], horizon, u_kin}
    profile:  {source: golden | search | path, path}
    checks:   {t_star_bound, tol_cells, rate_target, rate_tol, cmp_c, transform_rtol}
    strict: bool

``mu: auto`` resolves to ``M^{(p-1)/(q-1)} μ0`` of the profile and
``hi: auto`` to the support radius ``r0 sqrt(-t0)`` of the seed.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import expr
from .kinetics import KineticLaw, KineticSpec
from .lower import LowerSolution
from .profile import Profile, SearchControls, find_profile
from .rds import ComparisonMonitor, Field, Geometry, ScalarProblem, SolverControls, SystemProblem
from .scaling import ParameterError, ProblemParams, check_hypotheses, critical_sigma

PROBLEMS = ("scalar", "wang", "morgan", "system", "kinetic")
A_KINDS = ("power", "one_minus_cos", "constant", "tabulated", "none")
GOLDEN_PROFILE = "profile_p2_q3_s2_n1.json"
_LOWER_RE = re.compile(r"^\s*lower_solution\s*\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)\s*$")


class ScenarioError(ValueError):
    """Configuration error; ``where`` names the offending field or position."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


SECTION_DEFAULTS = {
    "params": {"mu": 1.0, "n": 1, "d": 1.0, "big_m": 1.0, "x0": [0.0]},
    "geometry": {"kind": "interval", "lo": 0.0, "hi": 1.0, "nodes": 201, "bc": "neumann"},
    "a_spec": {"kind": "power", "scale": 1.0, "value": 0.0, "table": [], "zero_set": None,
               "zero_order": None},
    "system": {"d1": 0.0, "d2": 0.0, "m": 3.0, "f": {"kind": "linear", "lam": 1.0},
               "v0": "0", "v_mode": "integrated"},
    "kinetics": {"xi": [0.0, 10.0, 11], "eta": [0.0, 10.0, 11], "horizon": 50.0,
                 "u_kin": 1e6},
    "profile": {"source": "golden", "path": None},
    "checks": {"t_star_bound": 1.05, "tol_cells": 2.0, "rate_target": None, "rate_tol": 0.1,
               "cmp_c": 1.0, "transform_rtol": 1e-6},
}

# problem-specific defaults layered under the user's values
PROBLEM_DEFAULTS = {
    "wang": {"a_spec": {"kind": "one_minus_cos"}, "params": {"d": 0.01}},
    "morgan": {"params": {"sigma": 1.0},
               "system": {"d1": 1.0 / math.pi ** 2, "d2": 0.0, "m": 3.0,
                          "f": {"kind": "linear", "lam": 1.0}, "v0": "3*cos(pi*x)",
                          "v_mode": "stationary"},
               "a_spec": {"kind": "none", "zero_set": [0.0]}},
    "system": {"a_spec": {"kind": "none"}},
    "kinetic": {"a_spec": {"kind": "none"}},
}

TOP_KEYS = ("name", "problem", "params", "geometry", "a_spec", "system", "initial_data",
            "horizon", "solver", "monitors", "kinetics", "profile", "checks", "strict")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(sec: dict, key: str, where: str, allow_auto=False, integer=False):
    v = sec.get(key)
    if allow_auto and v == "auto":
        return v
    if isinstance(v, str):
        # YAML 1.1 reads exponents without a sign ("1.0e6") as strings
        try:
            v = float(v)
        except ValueError:
            pass
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{where}.{key}", f"expected a number, got {v!r}")
    if integer:
        if float(v) != int(v):
            raise ScenarioError(f"{where}.{key}", f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _choice(sec: dict, key: str, where: str, options):
    v = sec.get(key)
    if v not in options:
        raise ScenarioError(f"{where}.{key}", f"expected one of {list(options)}, got {v!r}")
    return v


@dataclass
class Scenario:
    """Fully resolved scenario. ``data`` is the canonical nested dict; the
    remaining fields are derived from it."""

    data: dict
    hypotheses: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    source: str | None = None

    def __getitem__(self, key):
        return self.data[key]

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def problem(self) -> str:
        return self.data["problem"]

    @property
    def digest(self) -> str:
        return scenario_digest(self.data)

    @property
    def horizon(self) -> float:
        return self.data["horizon"]

    @property
    def strict(self) -> bool:
        return self.data["strict"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def replace(self, **sections) -> "Scenario":
        return resolve(_merge(self.data, sections), strict=None)

    def params(self, mu=None) -> ProblemParams:
        p = dict(self.data["params"])
        if p["mu"] == "auto":
            p["mu"] = 1.0 if mu is None else mu
        elif mu is not None:
            p["mu"] = mu
        return ProblemParams.from_dict(p)

    def solver_controls(self) -> SolverControls:
        d = dict(self.data["solver"])
        if "rate_window" in d:
            d["rate_window"] = tuple(d["rate_window"])
        return SolverControls(**d)

    def zero_order(self) -> float:
        a = self.data["a_spec"]
        if a["zero_order"] is not None:
            return float(a["zero_order"])
        if self.problem in ("morgan", "system"):
            return 2.0 * self.data["params"]["sigma"]
        if a["kind"] == "one_minus_cos":
            return 2.0
        return float(self.data["params"]["sigma"])

    def zero_set(self) -> list:
        a = self.data["a_spec"]
        if a["zero_set"] is not None:
            return [float(z) for z in a["zero_set"]]
        if a["kind"] == "one_minus_cos":
            g = self.data["geometry"]
            lo, hi = g["lo"], (g["hi"] if g["hi"] != "auto" else 0.0)
            return [2.0 * k for k in range(math.ceil(lo / 2.0), math.floor(hi / 2.0) + 1)]
        return [float(self.data["params"]["x0"][0])]

    def kinetic_spec(self) -> KineticSpec:
        s, p, k = self.data["system"], self.data["params"], self.data["kinetics"]
        mu = 1.0 if p["mu"] == "auto" else p["mu"]
        return KineticSpec(p=p["p"], q=p["q"], mu=mu, m=s["m"], sigma=p["sigma"],
                           law=KineticLaw.from_dict(s["f"]), u_kin=k["u_kin"])

    def kinetic_grid(self):
        k = self.data["kinetics"]
        return (np.linspace(k["xi"][0], k["xi"][1], int(k["xi"][2])),
                np.linspace(k["eta"][0], k["eta"][1], int(k["eta"][2])))

    def seed(self):
        """``(t0, scale)`` when the initial data is a lower-solution seed."""
        m = _LOWER_RE.match(str(self.data["initial_data"]))
        if not m:
            return None
        return float(m.group(1)), float(m.group(2))


def scenario_digest(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


def resolve(raw: dict, strict: bool | None = None, source: str | None = None) -> Scenario:
    """Apply defaults, validate every field, attach the hypothesis report."""
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "scenario must be a mapping")
    unknown = set(raw) - set(TOP_KEYS)
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown top-level key")
    problem = raw.get("problem", "scalar")
    if problem not in PROBLEMS:
        raise ScenarioError("problem", f"expected one of {list(PROBLEMS)}, got {problem!r}")
    base = {k: copy.deepcopy(v) for k, v in SECTION_DEFAULTS.items()}
    base = _merge(base, PROBLEM_DEFAULTS.get(problem, {}))
    data = _merge(base, {k: v for k, v in raw.items() if v is not None})
    data["problem"] = problem
    data.setdefault("name", problem)
    data.setdefault("initial_data", "0")
    data.setdefault("horizon", 1.0)
    data.setdefault("monitors", [])
    data.setdefault("strict", False)
    data["solver"] = SolverControls(**_solver_kwargs(data.get("solver") or {})).to_dict()
    if strict is not None:
        data["strict"] = bool(strict)

    pr = data["params"]
    for key in ("p", "q"):
        if key not in pr:
            raise ScenarioError(f"params.{key}", "missing required field")
    pr["p"] = _num(pr, "p", "params")
    pr["q"] = _num(pr, "q", "params")
    try:
        sc = critical_sigma(pr["p"], pr["q"])
    except ParameterError as exc:
        raise ScenarioError("params", str(exc)) from None
    pr.setdefault("sigma", sc)
    pr["sigma"] = _num(pr, "sigma", "params")
    pr["mu"] = _num(pr, "mu", "params", allow_auto=True)
    pr["n"] = _num(pr, "n", "params", integer=True)
    pr["d"] = _num(pr, "d", "params")
    pr["big_m"] = _num(pr, "big_m", "params")
    x0 = pr["x0"]
    pr["x0"] = [float(c) for c in (x0 if isinstance(x0, (list, tuple)) else [x0])]
    try:
        ProblemParams.from_dict({**pr, "mu": 1.0 if pr["mu"] == "auto" else pr["mu"]})
    except ParameterError as exc:
        raise ScenarioError("params", str(exc)) from None

    g = data["geometry"]
    _choice(g, "kind", "geometry", ("interval", "radial"))
    _choice(g, "bc", "geometry", ("neumann", "dirichlet", "cauchy"))
    g["lo"] = _num(g, "lo", "geometry")
    g["hi"] = _num(g, "hi", "geometry", allow_auto=True)
    g["nodes"] = _num(g, "nodes", "geometry", integer=True)
    if g["nodes"] < 3:
        raise ScenarioError("geometry.nodes", "need at least 3 nodes")
    if g["kind"] == "radial" and g["lo"] != 0.0:
        raise ScenarioError("geometry.lo", "radial grids start at 0")
    if g["hi"] != "auto" and not g["hi"] > g["lo"]:
        raise ScenarioError("geometry.hi", "must exceed geometry.lo")

    a = data["a_spec"]
    _choice(a, "kind", "a_spec", A_KINDS)
    a["scale"] = _num(a, "scale", "a_spec")
    a["value"] = _num(a, "value", "a_spec")
    if a["kind"] == "tabulated":
        tab = np.asarray(a["table"], float) if a["table"] else np.empty((0, 2))
        if tab.ndim != 2 or tab.shape[0] < 2 or tab.shape[1] != 2 or np.any(np.diff(tab[:, 0]) <= 0):
            raise ScenarioError("a_spec.table", "need >= 2 rows of increasing (x, a) pairs")
        a["table"] = tab.tolist()
    if a["zero_order"] is not None:
        a["zero_order"] = _num(a, "zero_order", "a_spec")
    if a["zero_set"] is not None:
        a["zero_set"] = [float(z) for z in a["zero_set"]]

    s = data["system"]
    for key in ("d1", "d2", "m"):
        s[key] = _num(s, key, "system")
    _choice(s, "v_mode", "system", ("integrated", "stationary"))
    try:
        s["f"] = KineticLaw.from_dict(s["f"]).to_dict()
    except (ParameterError, TypeError) as exc:
        raise ScenarioError("system.f", str(exc)) from None
    _check_expr(s["v0"], "system.v0")

    init = str(data["initial_data"])
    data["initial_data"] = init
    if not _LOWER_RE.match(init):
        _check_expr(init, "initial_data")
    else:
        m = _LOWER_RE.match(init)
        try:
            t0, scale = float(m.group(1)), float(m.group(2))
        except ValueError:
            raise ScenarioError("initial_data", "lower_solution arguments must be numbers") from None
        if not t0 < 0 or scale < 0:
            raise ScenarioError("initial_data", "need t0 < 0 and scale >= 0")
    if (pr["mu"] == "auto" or g["hi"] == "auto") and not _LOWER_RE.match(init):
        raise ScenarioError("initial_data", "'auto' values need a lower_solution seed")

    data["horizon"] = _num(data, "horizon", "<root>")
    if not data["horizon"] > 0:
        raise ScenarioError("horizon", "must be positive")
    if not isinstance(data["monitors"], list) or any(m not in ("comparison",) for m in data["monitors"]):
        raise ScenarioError("monitors", "only 'comparison' is supported")
    if "comparison" in data["monitors"] and not _LOWER_RE.match(init):
        raise ScenarioError("monitors", "the comparison monitor needs a lower_solution seed")

    k = data["kinetics"]
    for key in ("xi", "eta"):
        v = k[key]
        if not (isinstance(v, (list, tuple)) and len(v) == 3):
            raise ScenarioError(f"kinetics.{key}", "expected [start, stop, num]")
        k[key] = [float(v[0]), float(v[1]), int(v[2])]
        if min(v[0], v[1]) < 0 or int(v[2]) < 1:
            raise ScenarioError(f"kinetics.{key}", "values must be non-negative, num >= 1")
    k["horizon"] = _num(k, "horizon", "kinetics")
    k["u_kin"] = _num(k, "u_kin", "kinetics")

    _choice(data["profile"], "source", "profile", ("golden", "search", "path"))
    if data["profile"]["source"] == "path" and not data["profile"]["path"]:
        raise ScenarioError("profile.path", "required when source is 'path'")

    c = data["checks"]
    for key in ("t_star_bound", "tol_cells", "rate_tol", "cmp_c", "transform_rtol"):
        c[key] = _num(c, key, "checks")
    if c["rate_target"] is not None:
        c["rate_target"] = _num(c, "rate_target", "checks")
    data["name"] = str(data["name"])
    data["strict"] = bool(data["strict"])

    scn = Scenario(data=data, source=source)
    _attach_hypotheses(scn)
    return scn


def _solver_kwargs(d: dict) -> dict:
    known = SolverControls.__dataclass_fields__
    bad = set(d) - set(known)
    if bad:
        raise ScenarioError(f"solver.{sorted(bad)[0]}", "unknown solver control")
    out = dict(d)
    if "rate_window" in out:
        out["rate_window"] = tuple(out["rate_window"])
    return out


def _check_expr(text, where):
    try:
        expr.parse(text)
    except expr.ExpressionError as exc:
        raise ScenarioError(where, str(exc)) from None


def _attach_hypotheses(scn: Scenario) -> None:
    params = scn.params()
    rep = check_hypotheses(params, sigma=scn.zero_order())
    hyp = {"pde": rep.to_dict()}
    if scn.problem in ("morgan", "system", "kinetic"):
        hyp["kinetic"] = scn.kinetic_spec().hypotheses()
    g = scn.data["geometry"]
    if scn.problem != "kinetic" and g["bc"] == "neumann" and scn.data["a_spec"]["kind"] != "none":
        hyp["neumann_boundary_slope"] = _neumann_slope_ok(scn)
    scn.hypotheses = hyp
    if not rep.ok:
        msg = f"hypotheses fail: {', '.join(rep.failed)}"
        if scn.strict:
            raise ScenarioError("params", msg)
        scn.warnings.append(msg)
        warnings.warn(msg, stacklevel=3)


def _neumann_slope_ok(scn: Scenario) -> bool:
    """At each end of the interval either a = 0 or its outward slope <= 0;
    scenarios violating this are permitted but flagged."""
    g = scn.data["geometry"]
    if g["hi"] == "auto":
        return True
    lo, hi = g["lo"], g["hi"]
    h = (hi - lo) * 1e-6
    x = np.array([lo, lo + h, hi - h, hi])
    a = absorption(scn, x)
    tol = 1e-3 * max(float(np.max(np.abs(a))), 1.0) / (hi - lo)
    left = a[0] == 0 or (a[0] - a[1]) / h <= tol
    right = a[3] == 0 or (a[3] - a[2]) / h <= tol
    return bool(left and right)


# ---------------------------------------------------------------- loading

def load_scenario(path, strict: bool | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(str(path), f"cannot read: {exc.strerror}") from None
    return loads(text, strict=strict, source=str(path))


def loads(text: str, strict: bool | None = None, source: str | None = None) -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "<parse>"
        raise ScenarioError(where, f"YAML parse error: {getattr(exc, 'problem', exc)}") from None
    return resolve(raw, strict=strict, source=source)


def dumps(scn: Scenario) -> str:
    return yaml.safe_dump(scn.to_dict(), sort_keys=False, default_flow_style=None)


def save_scenario(scn: Scenario, path) -> None:
    Path(path).write_text(dumps(scn))


def preset_names() -> list[str]:
    root = resources.files("blowlab") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_path(name: str):
    path = resources.files("blowlab") / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ScenarioError("preset", f"unknown preset {name!r}; have {preset_names()}")
    return path


def load_preset(name: str, strict: bool | None = None) -> Scenario:
    return loads(preset_path(name).read_text(), strict=strict, source=f"preset:{name}")


def golden_profile() -> Profile:
    return Profile.load(resources.files("blowlab") / "data" / GOLDEN_PROFILE)


# ---------------------------------------------------------------- building

def absorption(scn: Scenario, x) -> np.ndarray:
    """``a(x)`` on node coordinates (distance to x0 for radial grids)."""
    a = scn.data["a_spec"]
    x = np.asarray(x, float)
    kind = a["kind"]
    if kind == "none":
        return np.zeros_like(x)
    if kind == "constant":
        return np.full_like(x, a["value"])
    if kind == "one_minus_cos":
        return a["scale"] * (1.0 - np.cos(np.pi * x))
    if kind == "tabulated":
        tab = np.asarray(a["table"], float)
        return np.interp(x, tab[:, 0], tab[:, 1])
    pr = scn.data["params"]
    rad = x if scn.data["geometry"]["kind"] == "radial" else np.abs(x - pr["x0"][0])
    return a["scale"] * pr["big_m"] * rad ** pr["sigma"]


@dataclass
class Setup:
    scenario: Scenario
    geometry: Geometry
    problem: object
    initial: Field
    controls: SolverControls
    horizon: float
    lower: LowerSolution | None = None
    profile: Profile | None = None
    monitor: ComparisonMonitor | None = None
    tol_cmp: float | None = None
    notes: dict = field(default_factory=dict)


def resolve_profile(scn: Scenario, search: SearchControls | None = None) -> Profile:
    src = scn.data["profile"]
    pr = scn.data["params"]
    if src["source"] == "path":
        return Profile.load(src["path"])
    if src["source"] == "golden":
        prof = golden_profile()
        pp = prof.params
        if (pp.p, pp.q, pp.sigma, pp.n) == (pr["p"], pr["q"], pr["sigma"], pr["n"]):
            return prof
    template = ProblemParams(p=pr["p"], q=pr["q"], sigma=pr["sigma"], n=pr["n"])
    return find_profile(template, search)


def build(scn: Scenario, nodes: int | None = None, horizon: float | None = None,
          profile: Profile | None = None) -> Setup:
    """Construct geometry, problem, initial field and monitor. ``nodes``
    and ``horizon`` override the scenario values (refinement studies)."""
    if scn.problem == "kinetic":
        raise ScenarioError("problem", "kinetic scenarios have no PDE to build")
    d = scn.data
    g, pr = d["geometry"], d["params"]
    seed = scn.seed()
    lower = None
    if seed is not None:
        profile = profile or resolve_profile(scn)
        t0, _ = seed
        lower = LowerSolution(profile, t0=t0, big_m=pr["big_m"],
                              x0=tuple(pr["x0"]) if g["kind"] == "interval" else (0.0,))
    mu = pr["mu"]
    if mu == "auto":
        mu = lower.mu_required
    hi = g["hi"]
    if hi == "auto":
        hi = lower.support_radius(seed[0])
        if g["kind"] == "interval":
            hi = pr["x0"][0] + hi
    lo = g["lo"]
    if g["kind"] == "interval" and g["hi"] == "auto":
        lo = pr["x0"][0] - (hi - pr["x0"][0])
    geom = Geometry(kind=g["kind"], lo=lo, hi=hi, nodes=nodes or g["nodes"], dim=pr["n"],
                    bc="dirichlet" if g["bc"] == "cauchy" else g["bc"],
                    cauchy=g["bc"] == "cauchy")
    x = geom.x

    if seed is not None:
        t0, scale = seed
        if g["kind"] == "radial":
            u0 = scale * np.asarray(lower.radial(x, t0), float)
        else:
            u0 = scale * np.asarray(lower.evaluate(x, t0), float)
    else:
        u0 = expr.evaluate(d["initial_data"], x)
    if np.any(u0 < 0):
        raise ScenarioError("initial_data", "initial data must be non-negative")

    notes = {"mu": mu, "h": geom.h}
    if scn.problem in ("scalar", "wang"):
        problem = ScalarProblem(geom, mu, pr["p"], pr["q"], a=absorption(scn, x), d=pr["d"])
        initial = Field(geom, u0)
    else:
        s = d["system"]
        law = KineticLaw.from_dict(s["f"])
        v0 = expr.evaluate(s["v0"], x)
        if s["v_mode"] == "stationary":
            # v frozen at v0; valid when v0 is an equilibrium of the v-equation
            resid = s["d1"] * geom.laplacian(v0) + law(v0)
            resid[geom.pinned] = 0.0
            notes["v0_discrete_residual"] = float(np.max(np.abs(resid)))
            a_x = np.abs(s["m"] - v0) ** pr["sigma"]
            problem = ScalarProblem(geom, mu, pr["p"], pr["q"], a=a_x, d=s["d2"])
            initial = Field(geom, u0)
        else:
            problem = SystemProblem(geom, mu, pr["p"], pr["q"], pr["sigma"], s["m"], law,
                                    s["d1"], s["d2"], f_rate=law.rate)
            initial = Field(geom, np.vstack([v0, u0]))
    monitor = tol = None
    if "comparison" in d["monitors"]:
        tol = d["checks"]["cmp_c"] * geom.h ** 2
        monitor = ComparisonMonitor(lower, x0=pr["x0"][0], tol_cmp=tol)
    return Setup(scenario=scn, geometry=geom, problem=problem, initial=initial,
                 controls=scn.solver_controls(), horizon=horizon or d["horizon"],
                 lower=lower, profile=lower.profile if lower else profile,
                 monitor=monitor, tol_cmp=tol, notes=notes)
