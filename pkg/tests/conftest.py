import numpy as np
import pytest

from disastertoll.calibration import calibrated_dataset, synthetic_covariates
from disastertoll.data_model import covariate_panel
from disastertoll.pipeline import prepare_inputs


@pytest.fixture(scope="session")
def covariates():
    return synthetic_covariates()


@pytest.fixture(scope="session")
def panel(covariates):
    return covariate_panel(covariates, (1960, 2019))


@pytest.fixture(scope="session")
def flood_inputs():
    # published sample size: 3658 positive-death floods, 84.0 per year
    data = calibrated_dataset(seed=2020, types=("flood",), counts="fixed")
    return prepare_inputs(data.events, data.covariates, (1960, 2019), 2019, ("flood",))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
