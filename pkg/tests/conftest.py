import json
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from elastorecon.experiments import ExperimentConfig, forward_fields
from elastorecon.mesh import FeSpace, build_mesh

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def frozen():
    return json.loads((DATA / "frozen.json").read_text())


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("forward-cache"))


def _scenario(cache_dir, **kw):
    cfg = ExperimentConfig(cache_dir=cache_dir, precond="lu", **kw).validate()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return cfg, forward_fields(cfg)


@pytest.fixture(scope="session")
def static40(cache_dir):
    return _scenario(cache_dir, scenario="static", nx=40)


@pytest.fixture(scope="session")
def frequency40(cache_dir):
    return _scenario(cache_dir, scenario="frequency", nx=40)


@pytest.fixture(scope="session")
def static20(cache_dir):
    return _scenario(cache_dir, scenario="static", nx=20)


@pytest.fixture
def space4():
    return FeSpace(build_mesh(nx=4), 5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
