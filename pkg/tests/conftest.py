import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from wavefront.heteroclinic import compute_heteroclinic, fit_decay  # noqa: E402
from wavefront.models import Chemostat, fisher_kpp_delay, logistic_no_delay  # noqa: E402
from wavefront.profile import solve_profile, wave_params  # noqa: E402
from wavefront.spectrum import analyze  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FISHER_SPEEDS = [4.0, 6.0, 10.0, 12.0, 24.0]


class Pipeline:
    """Spectrum, heteroclinic and profiles for one model, computed once."""

    def __init__(self, model, speeds):
        self.model = model
        self.spectrum = analyze(model, speeds)
        self.het = compute_heteroclinic(model, self.spectrum.lambda0, self.spectrum.v)
        self.fit = fit_decay(self.het, K=model.K)
        self._profiles = {}

    def params(self, c):
        return wave_params(c, self.model, self.spectrum)

    def profile(self, c):
        if c not in self._profiles:
            p = self.params(c)
            self._profiles[c] = (solve_profile(self.model, c, self.het, self.fit, params=p), p)
        return self._profiles[c]


@pytest.fixture(scope="session")
def fisher():
    return Pipeline(fisher_kpp_delay(), FISHER_SPEEDS)


@pytest.fixture(scope="session")
def chemostat():
    return Pipeline(Chemostat(), [10.0, 15.0, 20.0])


@pytest.fixture(scope="session")
def logistic():
    return Pipeline(logistic_no_delay(), [6.0])


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
