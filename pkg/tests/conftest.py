import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qtraj.linalg import random_state
from qtraj.models import bundled_models, core_models

settings.register_profile("qtraj", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("qtraj")

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def models():
    return bundled_models()


@pytest.fixture(scope="session")
def core():
    return core_models()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def state(rng):
    return random_state(rng, 2)


@pytest.fixture(scope="session")
def acceptance_log():
    """Criterion number -> (passed, detail); printed in the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
