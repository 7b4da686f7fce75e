import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from csun.channel import ScenarioConfig, generate_scenario, preset_constraints  # noqa: E402
from csun.model import ConstraintSet, Scenario  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def desk_scenarios():
    return [generate_scenario(ScenarioConfig.preset("desk", seed=s)) for s in range(20)]


@pytest.fixture(scope="session")
def desk_constraints():
    return preset_constraints("desk").build(4)


def tiny_scenario(rng, N=1, U=2, G=3, K=2, S=1, M=2, occupancy=0.5, noise=1e-13):
    """Random small scenario with gains spread over two decades."""
    gain = 10.0 ** rng.uniform(-6.0, -5.0, (N, U, G, K))
    gain_sat = 10.0 ** rng.uniform(-7.0, -6.0, (N, S, G, K))
    occ = (rng.random((N, S, G)) < occupancy).astype(np.int8)
    return Scenario(M, (U,) * N, noise, gain, gain_sat, occ)


def loose_constraints(K, eps_p=1.0, e=1e3, p_max=0.3, t_total=100.0, t_max=7.5):
    return ConstraintSet(eps_p, np.full(K, e), p_max, t_total, t_max)


ACCEPTANCE = {}


def record(num, ok, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    line = f"AC{num:02d} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[num] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
