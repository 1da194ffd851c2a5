import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blowlab.scaling import (ParameterError, ProblemParams, SimilarityPoint, check_hypotheses,
                             critical_sigma, from_similarity, power, sigma_is_critical,
                             to_similarity)


@pytest.mark.parametrize("p,q,expected", [(2, 3, 2.0), (2, 2, 0.0), (3, 5, 2.0)])
def test_critical_sigma_examples(p, q, expected):
    assert critical_sigma(p, q) == expected


@pytest.mark.parametrize("p,q", [(1.0, 2.0), (0.5, 2.0), (3.0, 2.0)])
def test_critical_sigma_rejects(p, q):
    with pytest.raises(ParameterError):
        critical_sigma(p, q)


@given(st.floats(1.01, 10), st.floats(0, 5), st.floats(0.01, 5))
def test_critical_sigma_monotone_in_q(p, dq, step):
    assert critical_sigma(p, p + dq + step) > critical_sigma(p, p + dq)


@given(st.floats(1.01, 20))
def test_critical_sigma_at_2p_minus_1(p):
    assert math.isclose(critical_sigma(p, 2 * p - 1), 2.0, rel_tol=1e-12)


def test_hypotheses_critical_case():
    rep = check_hypotheses(ProblemParams(p=2, q=3, sigma=2, n=1))
    assert rep.ok and rep["sigma_critical"] and not rep["sigma_supercritical"]


def test_hypotheses_below_threshold():
    rep = check_hypotheses(ProblemParams(p=2, q=3, sigma=1, n=1))
    assert not rep["sigma_threshold"] and "sigma_threshold" in rep.failed


def test_hypotheses_sobolev_boundary():
    rep = check_hypotheses(ProblemParams(p=2, q=3, sigma=2, n=4, max_dim=4))
    assert not rep["sobolev_subcritical"] and not rep.ok


def test_hypotheses_supercritical_and_fujita():
    rep = check_hypotheses(ProblemParams(p=2, q=3, sigma=3, n=3))
    assert rep["sigma_supercritical"] and not rep["sigma_critical"]
    assert rep["fujita_range"] is False  # 2 > 1 + 2/3
    assert check_hypotheses(ProblemParams(p=2, q=3, sigma=3, n=1))["fujita_range"]


def test_hypotheses_pure():
    params = ProblemParams(p=2.5, q=4, sigma=3, n=2)
    assert check_hypotheses(params).to_dict() == check_hypotheses(params).to_dict()


def test_sigma_override_for_zero_order():
    params = ProblemParams(p=2, q=3, sigma=1)
    assert not check_hypotheses(params).ok
    assert check_hypotheses(params, sigma=2.0).ok


def test_q_equal_p_boundary_accepted():
    params = ProblemParams(p=2, q=2, sigma=0)
    assert params.sigma_crit == 0 and sigma_is_critical(0.0, 2, 2)


@pytest.mark.parametrize("kw", [dict(p=1), dict(q=1.5), dict(mu=0), dict(sigma=-1),
                                dict(big_m=0), dict(d=-1), dict(n=0), dict(n=4),
                                dict(n=1.5), dict(x0=(0.0, 1.0))])
def test_params_validation(kw):
    base = dict(p=2, q=3, sigma=2)
    base.update(kw)
    with pytest.raises(ParameterError):
        ProblemParams(**base)


def test_params_roundtrip_and_broadcast_x0():
    params = ProblemParams(p=2, q=3, sigma=2, n=3, x0=0.5)
    assert params.x0 == (0.5, 0.5, 0.5)
    assert ProblemParams.from_dict(params.to_dict()) == params


@pytest.mark.parametrize("e", [1, 2, 3, 4, 5])
def test_power_fast_paths_match_real_path(e):
    u = np.linspace(0, 7.3, 101)
    fast = power(u, e)
    slow = np.power(u, float(e) + 0.0)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=0)


def test_similarity_examples():
    assert to_similarity(0.0, -1.0).r == 0.0
    assert to_similarity([2.0, 0.0], -4.0, x0=[0.0, 0.0]).r == 1.0
    with pytest.raises(ParameterError):
        to_similarity(1.0, 0.0)
    with pytest.raises(ParameterError):
        SimilarityPoint(r=-1.0, t=-1.0)


def test_similarity_roundtrip(rng):
    for _ in range(100):
        n = int(rng.integers(1, 4))
        x0 = rng.normal(size=n)
        x = rng.normal(size=n) * 3
        t = -rng.uniform(1e-3, 10)
        pt = to_similarity(x, t, x0)
        back = np.atleast_1d(from_similarity(pt, x0, x - x0 if np.any(x != x0) else 1.0))
        np.testing.assert_allclose(back, x, rtol=1e-12, atol=1e-12)


@settings(max_examples=50)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(1e-3, 50))
def test_similarity_roundtrip_property(x, x0, s):
    pt = to_similarity(x, -s, x0)
    direction = 1.0 if x >= x0 else -1.0
    assert math.isclose(from_similarity(pt, x0, direction), x, rel_tol=1e-12, abs_tol=1e-12)
