"""Shared, session-scoped artifacts: the desk-scale planner table and a fitted inverse model."""
from __future__ import annotations

import pytest
from hypothesis import settings

from goalreach import config as C
from goalreach.actuator import generate_dataset
from goalreach.neural import fit
from goalreach.planner.training import train
from goalreach.sim import InverseModel

# numba compiles kernels on first use, so wall-clock deadlines would be flaky
settings.register_profile("goalreach", deadline=None)
settings.load_profile("goalreach")


@pytest.fixture(scope="session")
def desk_cfg():
    return C.load_config("desk")


@pytest.fixture(scope="session")
def desk_table(desk_cfg):
    """Planner table trained with the shipped desk profile (same as ``train-planner --config desk``)."""
    q, _ = train(C.train_config(desk_cfg), C.planner_env(desk_cfg))
    return q


@pytest.fixture(scope="session")
def actuator_dataset(desk_cfg):
    a = desk_cfg["actuator_data"]
    return generate_dataset(a["excitation"], C.plant_params(desk_cfg), a["duration"], a["dt"],
                            a["seed"], a["period"])


@pytest.fixture(scope="session")
def fitted_model(desk_cfg, actuator_dataset):
    fc, split = C.fit_config(desk_cfg)
    return fit(actuator_dataset, split, fc)


@pytest.fixture(scope="session")
def desk_inverse(fitted_model):
    return InverseModel.from_network(fitted_model[0])


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: list[str] = []


def record_acceptance(name: str, ok: bool, detail: str) -> bool:
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'} | {name} | {detail}"
    print(line)
    ACCEPTANCE.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
