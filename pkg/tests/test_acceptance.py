"""Acceptance criteria. Each test prints one ``CRITERION n: PASS|FAIL``
line (visible in ``pytest -v`` output) and asserts the same condition."""
import json
import time

import numpy as np
import pytest

from blowlab.cli import main
from blowlab.kinetics import compare_forms, integrate, integrate_w_transform
from blowlab.lower import certification_report, interior_residual, jump_condition, sample_cone
from blowlab.rds import (Field, Geometry, ScalarProblem, SolverControls, Status, fit_blowup_rate,
                         run)
from blowlab.scenario import build, load_preset, loads, preset_names

pytestmark = pytest.mark.filterwarnings("ignore:hypotheses fail")


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


def test_criterion_1_closed_form_kinetic_blowup(capsys):
    t = time.perf_counter()
    scn = loads("params: {p: 2, q: 3, mu: 1, d: 0}\na_spec: {kind: none}\n"
                "geometry: {nodes: 11}\ninitial_data: 1\nhorizon: 2")
    setup = build(scn)
    res = run(setup.problem, setup.initial, setup.horizon, setup.controls)
    dt = time.perf_counter() - t
    ok = res.status is Status.BLOWUP and 0.99 <= res.t_star_hat <= 1.01 and dt < 5
    report(capsys, 1, ok, f"status={res.status.value} T={res.t_star_hat:.6f} runtime={dt:.2f}s")


def test_criterion_2_profile_certification(capsys, tmp_path):
    t = time.perf_counter()
    code = main(["profile", "find", "--p", "2", "--q", "3", "--sigma", "2", "--n", "1",
                 "--out", str(tmp_path)])
    dt = time.perf_counter() - t
    rep = json.loads((tmp_path / "profile_report.json").read_text())
    prof = json.loads((tmp_path / "profile.json").read_text())
    w = np.asarray(prof["values"])
    bound = 1e-6 * (1 + rep["alpha0"] ** 3)
    checks = {
        "exit": code == 0,
        "positive": bool(np.all(w[:-1] > 0)),
        "w_r0_zero": w[-1] == 0.0,
        "outflow": rep["wp_r0"] < 0,
        "residual": rep["residual_max"] <= bound,
        "r0_stable": rep["refinement"]["r0_rel_change"] <= 1e-6,
        "runtime": dt < 30,
    }
    report(capsys, 2, all(checks.values()),
           f"r0={rep['r0']:.10f} w'(r0)={rep['wp_r0']:.4f} residual={rep['residual_max']:.2e}"
           f"<= {bound:.2e} r0_rel_change={rep['refinement']['r0_rel_change']:.1e}"
           f" runtime={dt:.1f}s failed={[k for k, v in checks.items() if not v]}")


def test_criterion_3_lower_solution_identity(capsys, golden_lower):
    rng = np.random.default_rng(2024)
    x, t = sample_cone(golden_lower, 10_000, rng)
    res = interior_residual(golden_lower, x, t)
    times = -np.geomspace(1.0, 1e-3, 100)
    jumps = np.array([jump_condition(golden_lower, float(s)).total for s in times])
    ok = res.max_abs_scaled <= res.tol_cert and bool(np.all(jumps < 0))
    report(capsys, 3, ok, f"max|residual|={res.max_abs_scaled:.2e} <= tol_cert={res.tol_cert:.2e};"
           f" max jump={jumps.max():.3e} < 0 over {jumps.size} times")


def test_criterion_4_sigma_critical_ball(capsys, ball_runs):
    t = time.perf_counter()
    scn = load_preset("sigma-critical-ball")
    setup = build(scn)
    res = run(setup.problem, setup.initial, setup.horizon, setup.controls, setup.monitor)
    dt = time.perf_counter() - t
    cert = certification_report(setup.lower)
    min_cmp = float(np.nanmin(res.min_cmp))
    tol51, tol101 = ball_runs[51][0].tol_cmp, ball_runs[101][0].tol_cmp
    cmp51 = float(np.nanmin(ball_runs[51][1].min_cmp))
    ok = (res.status is Status.BLOWUP and res.t_star_hat <= 1.05 and cert["pass"]
          and min_cmp >= -setup.tol_cmp and cmp51 >= -tol51 and tol51 / tol101 >= 3 and dt < 60)
    report(capsys, 4, ok, f"status={res.status.value} T={res.t_star_hat:.5f}+-{res.ci:.1e} <= 1.05;"
           f" min(u-lower)={min_cmp:.2e} >= -{setup.tol_cmp:.2e}; coarse {cmp51:.2e} >= -{tol51:.2e};"
           f" tol ratio={tol51 / tol101:.2f}; runtime={dt:.1f}s")


def test_criterion_5_blowup_rate(capsys, ball_runs):
    res = ball_runs[101][1]
    slope = res.rate_fit.slope if res.rate_fit else float("nan")
    T = 0.37
    errs = []
    for target in (-1.0, -0.5):
        tt = T - np.geomspace(1e-1, 1e-9, 300)
        errs.append(abs(fit_blowup_rate(tt, 3.0 * (T - tt) ** target, T).slope - target))
    ok = abs(slope + 1.0) <= 0.1 and max(errs) <= 1e-6
    report(capsys, 5, ok, f"fitted slope={slope:.4f} (target -1 +-10%);"
           f" synthetic fitter error={max(errs):.1e}")


def test_criterion_6_localization(capsys, tmp_path):
    t = time.perf_counter()
    code = main(["experiment", "thm1.3", "--scenario", "wang", "--out", str(tmp_path)])
    dt = time.perf_counter() - t
    v = json.loads((tmp_path / "verdict.json").read_text())
    loc = json.loads((tmp_path / "localization.json").read_text())
    nodes = load_preset("wang").data["geometry"]["nodes"]
    ok = (code == 0 and v["checks"]["status"]["pass"] and loc["distance_cells"] <= 2
          and nodes == 401 and dt < 60)
    report(capsys, 6, ok, f"status={v['checks']['status']['value']} argmax={loc['cluster_x']}"
           f" distance={loc['distance_cells']} cells (<= 2) nodes={nodes} runtime={dt:.1f}s")


@pytest.mark.parametrize("preset", ["morgan", "example-i"])
def test_criterion_7_diffusion_induced_blowup(capsys, tmp_path, preset):
    code = main(["experiment", "dib", "--scenario", preset, "--out", str(tmp_path), "--jobs", "4"])
    v = json.loads((tmp_path / "verdict.json").read_text())
    c = v["checks"]
    scn = load_preset(preset)
    k = scn.data["kinetics"]
    grid_ok = k["xi"] == [0.0, 10.0, 11] and k["eta"] == [0.0, 10.0, 11] and k["horizon"] == 50
    t_star = c["pde_t_star"]["value"]
    ok = (code == 0 and v["verdict"] == "PASS" and grid_ok and c["kinetics_bounded"]["pass"]
          and t_star is not None and t_star < 10)
    report(capsys, 7, ok, f"[{preset}] kinetics={c['kinetics_bounded']['value']}"
           f" pde={c['pde_status']['value']} T={t_star} verdict={v['verdict']}")


def test_criterion_8_transform_consistency(capsys):
    scn = load_preset("example-i")
    spec = scn.kinetic_spec()
    xi, eta = scn.kinetic_grid()
    horizon = scn.data["kinetics"]["horizon"]
    worst, cases = 0.0, 0
    for a in xi:
        for b in eta[eta > 0]:  # eta = 0 gives u = 0 < 1e-3 throughout
            d = integrate(a, b, spec, horizon)
            w = integrate_w_transform(a, b, spec, horizon)
            worst = max(worst, compare_forms(d, w))
            cases += 1
    report(capsys, 8, worst <= 1e-6, f"max relative gap={worst:.2e} over {cases} trajectories")


def test_criterion_9_solver_hygiene(capsys):
    g = Geometry(kind="interval", nodes=101)
    u0 = 1.0 + 0.5 * np.cos(3 * np.pi * g.x) + g.x
    heat = run(ScalarProblem(g, mu=0.0, p=2, q=3, a=0.0), Field(g, u0), 1.0)
    mass_drift = abs(g.integrate(heat.final.u) - g.integrate(u0))

    g2 = Geometry(kind="interval", nodes=601)
    eig = run(ScalarProblem(g2, mu=0.0, p=2, q=3, a=0.0), Field(g2, np.cos(np.pi * g2.x)), 0.1,
              SolverControls(rtol=1e-9, atol=1e-12))
    eig_err = float(np.max(np.abs(eig.final.u - np.exp(-np.pi ** 2 * 0.1) * np.cos(np.pi * g2.x))))

    mins = {}
    for name in preset_names():
        scn = load_preset(name)
        if scn.problem == "kinetic":
            continue
        setup = build(scn)
        res = run(setup.problem, setup.initial, setup.horizon, setup.controls)
        mins[name] = res.diagnostics["min_value"]
    pos_ok = all(m >= -1e-12 for m in mins.values())
    ok = mass_drift <= 1e-8 and eig_err < 1e-6 and pos_ok
    report(capsys, 9, ok, f"mass drift={mass_drift:.1e} (<=1e-8 over t=1); eigenmode error="
           f"{eig_err:.1e}; min u per preset={ {k: f'{v:.1e}' for k, v in mins.items()} }")
