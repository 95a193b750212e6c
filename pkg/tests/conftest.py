import numpy as np
import pytest

from telewatch import synthgen
from telewatch.estimator import TelemetryAnomalyDetector

LOADINGS = np.array([0.9, 0.7, 0.95, -0.9, 0.8, -0.6])


def latent_telemetry(n, seed=0, noise=0.25):
    """Stationary standardized-scale telemetry driven by one shared load factor."""
    rng = np.random.default_rng(seed)
    load = rng.standard_normal((n, 1))
    return load * LOADINGS + noise * rng.standard_normal((n, 6))


def ar_telemetry(n, seed=0, phi=0.95):
    """Slowly varying load (AR(1)) so the next sample is predictable from the window."""
    rng = np.random.default_rng(seed)
    load = np.zeros(n)
    for t in range(1, n):
        load[t] = phi * load[t - 1] + np.sqrt(1 - phi**2) * rng.standard_normal()
    return load[:, None] * LOADINGS + 0.1 * rng.standard_normal((n, 6))


@pytest.fixture(scope="session")
def baseline():
    return synthgen.baseline_run(seed=0)


@pytest.fixture(scope="session")
def small_detector(baseline):
    """Quickly trained detector (short window, few epochs) for API-level tests."""
    return TelemetryAnomalyDetector(window=5, hidden_size=8, epochs=3, percentile=99, cooldown_s=0).fit(baseline)


@pytest.fixture(scope="session")
def full_detector(baseline):
    """Detector with the default architecture, trained and calibrated on the benign baseline."""
    return TelemetryAnomalyDetector(percentile=99).fit(baseline)


# PASS/FAIL lines from the acceptance module, echoed after the test session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
