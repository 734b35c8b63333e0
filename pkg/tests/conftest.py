import numpy as np
import pytest

from pbsid.simulate import prbs_like_inputs, random_stable_model, simulate_lti


def lti_data(seed, n=3, m=4, r=7, n_ident=180, n_valid=120, sigma=0.0, gain=0.0):
    """Identification/validation records from one random stable model."""
    model = random_stable_model(n, m, r, seed=seed, gain=gain)
    u = prbs_like_inputs(m, n_ident + n_valid, seed=seed + 1000)
    ds = simulate_lti(model, np.zeros(n), u, innovation_sigma=sigma, seed=seed + 2000)
    return model, ds.slice(0, n_ident), ds.slice(n_ident)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def noiseless_3state():
    return lti_data(3)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
