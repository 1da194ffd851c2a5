import numpy as np
import pytest

from blowlab.lower import LowerSolution
from blowlab.rds import run
from blowlab.scenario import build, golden_profile, load_preset


@pytest.fixture(scope="session")
def golden():
    return golden_profile()


@pytest.fixture(scope="session")
def golden_lower(golden):
    return LowerSolution(golden, t0=-1.0)


@pytest.fixture(scope="session")
def ball_runs():
    """Dirichlet-ball seeded runs at two resolutions (h and h/2)."""
    scn = load_preset("sigma-critical-ball")
    out = {}
    for nodes in (51, 101):
        setup = build(scn, nodes=nodes)
        res = run(setup.problem, setup.initial, setup.horizon, setup.controls, setup.monitor)
        out[nodes] = (setup, res)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
