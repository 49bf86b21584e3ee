"""Shared fixtures.

Every trajectory produced by ``sim.run`` during the session is kept in a
registry so the structural-invariant audit can sweep all of them at the end.
"""

import threading

import numpy as np
import pytest

import conformity_dynamics
import conformity_dynamics.sim as sim
from conformity_dynamics import (
    AdditiveBias,
    LogitParams,
    MultiplicativeBias,
    PIMechanism,
    SaturatedPIMechanism,
    Scenario,
)

RECORDED = []
_lock = threading.Lock()
_original_run = sim.run


def _recording_run(scenario):
    traj = _original_run(scenario)
    with _lock:
        RECORDED.append(traj)
    return traj


sim.run = _recording_run
conformity_dynamics.run = _recording_run

# criterion id -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


def pytest_collection_modifyitems(config, items):
    # the whole-suite invariant audit has to see every other test's runs
    last = [it for it in items if it.get_closest_marker("audit_last")]
    rest = [it for it in items if not it.get_closest_marker("audit_last")]
    items[:] = rest + last


def pytest_configure(config):
    config.addinivalue_line("markers", "audit_last: run after every other test")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# --- scenario builders shared by several test modules ----------------------

PI_STAR = (0.2, 0.3, 0.5)


def pi_additive_scenario(seed=0, kappa=2.0, horizon=200.0, step=0.01, record_interval=0.1,
                      slope=1.0, beta=1.0):
    return Scenario(
        params=LogitParams(1.0, beta, 3),
        bias=AdditiveBias.affine(3, 1.0, slope),
        mechanism=PIMechanism(1.0, kappa),
        pi_star=PI_STAR,
        horizon=horizon,
        step=step,
        record_interval=record_interval,
        seed=seed,
    )


def saturated_multiplicative_scenario(seed=0, kappa=1.0, horizon=150.0, step=0.01, record_interval=0.01,
                      v_high=0.05):
    # w_k(x) = 1 + v - v x: w_low = 1, v_high = v
    return Scenario(
        params=LogitParams(1.0, 1.0, 3),
        bias=MultiplicativeBias.affine(3, 1.0 + v_high, v_high),
        mechanism=SaturatedPIMechanism(1.0, kappa, 1.0, 1.0),
        pi_star=PI_STAR,
        horizon=horizon,
        step=step,
        record_interval=record_interval,
        seed=seed,
    )
