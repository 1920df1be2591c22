import pytest
from hypothesis import HealthCheck, settings

from causal_kit import experiments

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def vaccine():
    return experiments.vaccine_toy()


@pytest.fixture(scope="session")
def vaccine_data(vaccine):
    from causal_kit.sampling import ancestral_sample

    return ancestral_sample(vaccine, 100_000, 11)


# one verdict line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
