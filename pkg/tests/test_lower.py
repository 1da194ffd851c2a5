import math

import numpy as np
import pytest

from blowlab.lower import (LowerSolution, admissible_t0, certification_report, interior_residual,
                           jump_condition, sample_cone)
from blowlab.profile import find_profile
from blowlab.scaling import ParameterError, ProblemParams


@pytest.fixture(scope="module")
def supercritical():
    return find_profile(ProblemParams(p=2, q=3, sigma=3, n=1))


def test_admissible_t0():
    assert admissible_t0(ProblemParams(p=2, q=3, sigma=2)) == (-math.inf, 0.0)
    assert admissible_t0(ProblemParams(p=2, q=3, sigma=3)) == (-1.0, 0.0)
    with pytest.raises(ParameterError):
        admissible_t0(ProblemParams(p=2, q=3, sigma=1))


def test_t0_restriction_supercritical(supercritical):
    with pytest.raises(ParameterError):
        LowerSolution(supercritical, t0=-2.0)
    LowerSolution(supercritical, t0=-1.0)


def test_evaluate_examples(golden, golden_lower):
    ls = golden_lower
    r0 = golden.r0
    assert ls.evaluate(r0 * math.sqrt(0.5) * 1.0001, -0.5) == 0.0
    assert ls.evaluate(5.0, -0.5) == 0.0
    assert ls.evaluate(0.0, -0.3) == pytest.approx(golden.alpha0 / 0.3, rel=1e-14)
    assert ls.evaluate(0.0, -0.25) / ls.evaluate(0.0, -1.0) == pytest.approx(4.0, rel=1e-14)
    with pytest.raises(ParameterError):
        ls.evaluate(0.0, 0.0)
    with pytest.raises(ParameterError):
        ls.evaluate(0.0, -1.5)


def test_self_similarity(golden, rng):
    ls = LowerSolution(golden, t0=-10.0)
    y = rng.uniform(-1, 1, 200)
    t = -rng.uniform(0.1, 1.0, 200)
    for lam in (1.0, 0.5, 0.1, 0.01):
        lhs = ls.evaluate(math.sqrt(lam) * y, lam * t) * lam
        np.testing.assert_allclose(lhs, ls.evaluate(y, t), rtol=1e-10, atol=1e-12)


def test_sup_law_and_support(golden):
    ls = LowerSolution(golden, t0=-1.0, big_m=2.0)
    ts = -np.geomspace(1.0, 1e-4, 20)
    for t in ts:
        assert ls.sup(t) * (-t) == pytest.approx(2.0 ** -0.5 * golden.alpha0, rel=1e-13)
        assert ls.evaluate(0.0, t) == pytest.approx(ls.sup(t), rel=1e-13)
    radii = [ls.support_radius(t) for t in ts]
    assert np.all(np.diff(radii) < 0)


def test_multidimensional_evaluate():
    prof = find_profile(ProblemParams(p=2, q=3, sigma=2, n=2))
    ls = LowerSolution(prof, t0=-1.0, x0=(0.5, -0.5))
    x = np.array([[0.5, -0.5], [0.5 + 0.3, -0.5]])
    vals = ls.evaluate(x, -0.5)
    assert vals[0] == pytest.approx(prof.alpha0 / 0.5, rel=1e-13)
    assert 0 < vals[1] < vals[0]


def test_interior_residual_critical(golden_lower, rng):
    x, t = sample_cone(golden_lower, 10_000, rng)
    rep = interior_residual(golden_lower, x, t)
    assert rep.passed
    assert rep.min_scaled >= -1e-6
    assert rep.max_abs_scaled <= rep.tol_cert


def test_interior_residual_with_big_m(golden, rng):
    ls = LowerSolution(golden, t0=-3.0, big_m=5.0)
    x, t = sample_cone(ls, 2000, rng)
    rep = interior_residual(ls, x, t)
    assert rep.passed and rep.max_abs_scaled <= rep.tol_cert
    with pytest.raises(ParameterError):
        interior_residual(ls, x, t, mu=0.5 * ls.mu_required)


def test_interior_residual_supercritical_nonnegative(supercritical, rng):
    ls = LowerSolution(supercritical, t0=-1.0)
    x, t = sample_cone(ls, 5000, rng)
    rep = interior_residual(ls, x, t)
    assert rep.passed


def test_interior_residual_rejects_outside_cone(golden_lower):
    with pytest.raises(ParameterError):
        interior_residual(golden_lower, np.array([10.0]), np.array([-0.5]))


def test_jump_condition(golden):
    ls = LowerSolution(golden, t0=-1.0)
    ts = -np.geomspace(1.0, 1e-6, 50)
    vals = np.array([jump_condition(ls, t).total for t in ts])
    assert np.all(vals < 0)
    # divergence like (-t)^{-1/(p-1) - 1/2}
    slope = np.polyfit(np.log(-ts), np.log(-vals), 1)[0]
    assert slope == pytest.approx(-1.5, abs=1e-12)
    big = LowerSolution(golden, t0=-1.0, big_m=1e8)
    j = jump_condition(big, -0.5)
    assert j.negative and abs(j.total) < 1e-3 * abs(jump_condition(ls, -0.5).total)


def test_certification_report_shape(golden_lower):
    rep = certification_report(golden_lower, samples=10_000, jumps=100)
    for key in ("t0", "M", "min_residual", "samples", "jump_values", "pass"):
        assert key in rep
    assert rep["pass"] and rep["samples"] == 10_000 and len(rep["jump_values"]) == 100


def test_terms_match_finite_differences(golden_lower):
    ls = golden_lower
    x, t, h = 0.2, -0.5, 1e-4
    u, u_t, lap = ls.terms(np.array([x]), np.array([t]))
    fd_t = (ls.evaluate(x, t + h) - ls.evaluate(x, t - h)) / (2 * h)
    fd_xx = (ls.evaluate(x + h, t) - 2 * ls.evaluate(x, t) + ls.evaluate(x - h, t)) / h ** 2
    assert u_t[0] == pytest.approx(fd_t, rel=1e-6)
    assert lap[0] == pytest.approx(fd_xx, rel=1e-5)
