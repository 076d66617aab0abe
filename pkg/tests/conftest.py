import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blobs_small():
    """Three separated Gaussian blobs in 5-D, 300 points."""
    r = np.random.default_rng(7)
    centers = np.array([[0.0] * 5, [10.0] + [0.0] * 4, [5.0, 8.66] + [0.0] * 3])
    y = np.repeat(np.arange(3), 100)
    X = centers[y] + r.standard_normal((300, 5))
    return X.astype(np.float32), y


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
