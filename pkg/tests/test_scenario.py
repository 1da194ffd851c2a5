import numpy as np
import pytest

from blowlab import expr
from blowlab.scenario import (ScenarioError, absorption, build, dumps, load_preset, load_scenario,
                              loads, preset_names, save_scenario)

pytestmark = pytest.mark.filterwarnings("ignore:hypotheses fail")


@pytest.mark.parametrize("text,x,value", [
    ("1 + x", 2.0, 3.0),
    ("20*exp(-(x/0.05)**2)", 0.0, 20.0),
    ("3*cos(pi*x)", 1.0, -3.0),
    ("abs(-r) - -1", 2.0, 3.0),
    ("+x**2/4", 2.0, 1.0),
])
def test_expression_accepts(text, x, value):
    assert expr.evaluate(text, np.array([x]))[0] == pytest.approx(value)


@pytest.mark.parametrize("text", [
    "__import__('os')", "x.real", "sin(x)", "y + 1", "x if x else 1", "'a'", "cos(x, x)",
    "x +", "[x]", "x // 2", "True", "1/x",
])
def test_expression_rejects(text):
    with pytest.raises(expr.ExpressionError):
        expr.evaluate(text, np.array([0.0, 1.0]))


def test_expression_error_column():
    with pytest.raises(expr.ExpressionError) as e:
        expr.parse("1 + foo")
    assert e.value.col == 4


def test_minimal_scenario_defaults():
    scn = loads("params: {p: 2, q: 3}")
    assert scn.problem == "scalar"
    assert scn.data["params"]["sigma"] == 2.0
    assert scn.data["geometry"]["nodes"] == 201
    assert scn.data["solver"]["u_cap"] == 1e8
    assert scn.hypotheses["pde"]["ok"]


@pytest.mark.parametrize("text,where", [
    ("params: {p: 2}", "params.q"),
    ("params: {q: 3}", "params.p"),
    ("params: {p: 2, q: 3}\ngeometry: {nodes: 2}", "geometry.nodes"),
    ("params: {p: 2, q: 3}\ninitial_data: sin(x)", "initial_data"),
    ("params: {p: 2, q: 3}\nsolver: {warp: 9}", "solver.warp"),
    ("params: {p: 2, q: 3}\nbogus: 1", "bogus"),
    ("params: {p: 2, q: 3}\nmonitors: [comparison]", "monitors"),
    ("params: {p: 2, q: 3}\nhorizon: -1", "horizon"),
])
def test_field_errors(text, where):
    with pytest.raises(ScenarioError) as e:
        loads(text)
    assert e.value.where == where


def test_yaml_parse_position():
    with pytest.raises(ScenarioError) as e:
        loads("params: {p: 2, q: 3}\ngeometry: [unclosed\n")
    assert e.value.where.startswith("line 3")


def test_numeric_strings_accepted():
    scn = loads("params: {p: '2', q: 3.0e0}\nkinetics: {u_kin: 1.0e6}")
    assert scn.data["params"]["p"] == 2.0 and scn.data["kinetics"]["u_kin"] == 1e6


def test_strict_mode():
    text = "params: {p: 2, q: 3, sigma: 1}"
    scn = loads(text)
    assert scn.warnings and not scn.hypotheses["pde"]["ok"]
    with pytest.raises(ScenarioError):
        loads(text, strict=True)
    with pytest.raises(ScenarioError):
        loads(text + "\nstrict: true")


def test_wang_preset_fields():
    scn = load_preset("wang")
    assert scn.data["params"]["d"] == 0.01
    assert scn.data["geometry"]["nodes"] == 401
    assert scn.zero_set() == [0.0]
    x = np.array([0.0, 0.5, 1.0])
    np.testing.assert_allclose(absorption(scn, x), [0.0, 1.0, 2.0], atol=1e-15)
    assert scn.hypotheses["neumann_boundary_slope"]


@pytest.mark.parametrize("name", preset_names())
def test_preset_round_trip(name, tmp_path):
    scn = load_preset(name)
    path = tmp_path / f"{name}.yaml"
    save_scenario(scn, path)
    again = load_scenario(path)
    assert again.data == scn.data
    assert again.digest == scn.digest
    assert loads(dumps(scn)).digest == scn.digest


def test_presets_present():
    assert set(preset_names()) >= {"sigma-critical-ball", "wang", "morgan", "example-i", "rate-p3"}
    with pytest.raises(ScenarioError):
        load_preset("nope")


def test_digest_stability():
    a = loads("params: {p: 2, q: 3}\nhorizon: 1.0")
    b = loads("horizon: 1\nparams: {q: 3, p: 2.0}")
    assert a.digest == b.digest and len(a.digest) == 64
    assert a.replace(horizon=2.0).digest != a.digest


def test_build_seeded_ball(golden):
    scn = load_preset("sigma-critical-ball")
    setup = build(scn, nodes=21)
    assert setup.geometry.hi == pytest.approx(golden.r0)
    assert setup.problem.mu == pytest.approx(golden.mu0)
    assert setup.initial.values[0] == pytest.approx(golden.alpha0)
    assert setup.tol_cmp == pytest.approx(setup.geometry.h ** 2)


def test_build_morgan_stationary():
    setup = build(load_preset("morgan"))
    assert setup.problem.components == 1
    assert setup.problem.d == 0.0
