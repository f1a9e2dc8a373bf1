import numpy as np
import pytest
from hypothesis import settings

from proxcontact import kinematics as kin
from proxcontact.simworld import load_scenario, run_scenario

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")

_CRITERIA: dict = {}


@pytest.fixture(scope="session")
def planar():
    return kin.load_model("planar2")


@pytest.fixture(scope="session")
def arm():
    return kin.load_model("redundant7")


@pytest.fixture(scope="session")
def scenario_run():
    """Memoised ``run_scenario`` on bundled scenarios, shared across test modules."""
    cache = {}

    def get(name, seed=0, **kw):
        key = (name, seed, tuple(sorted(kw.items())))
        if key not in cache:
            cache[key] = run_scenario(load_scenario(name), seed=seed, **kw)
        return cache[key]

    return get


@pytest.fixture
def record_criterion():
    """Print and keep one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _CRITERIA[number] = line
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])


def single_capsule_model(a=(0, 0, 0), b=(1, 0, 0), radius=0.1):
    return kin.model_from_dict({
        "schema": 1, "name": "stick",
        "joints": [{"axis": [0, 0, 1]}],
        "joint_limits": [[-np.pi, np.pi]],
        "capsules": [{"link": 0, "a": list(a), "b": list(b), "radius": radius}],
    })
