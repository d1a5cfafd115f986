import os

import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

#: acceptance outcomes, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def out_dir(tmp_path):
    d = tmp_path / "out"
    d.mkdir()
    return d


#: seed shared by the acceptance curve and the regression baseline
CURVE_SEED = (20261015, 0)
CURVE_THETAS = (0.4, 0.6, 0.8, 1.0, 1.4, 2.0)


@pytest.fixture(scope="session")
def acceptance_curve():
    """The full lambda-hat curve at 1e5 trials; returns ``(curve, seconds)``."""
    import time

    from slowpoints.exponent import lambda_curve

    t0 = time.perf_counter()
    curve = lambda_curve(CURVE_THETAS, budget=100_000, seed=CURVE_SEED)
    return curve, time.perf_counter() - t0
