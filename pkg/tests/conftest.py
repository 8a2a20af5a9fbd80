import numpy as np
import pytest

from robustgp.kernels import Dataset, Hyperparameters


def random_instance(rng, n, d=None, rho_density=0.5, mean_const=0.0):
    """Random dataset, ARD hyperparameters and sparse positive robust variances."""
    d = d or int(rng.integers(1, 4))
    X = rng.uniform(0, 1, (n, d))
    y = rng.standard_normal(n)
    hyper = Hyperparameters(
        lengthscales=rng.uniform(0.2, 1.5, d),
        outputscale=float(rng.uniform(0.5, 2.0)),
        noise=float(rng.uniform(0.05, 0.5)),
        mean_const=mean_const,
    )
    rho = np.where(rng.uniform(size=n) < rho_density, rng.uniform(0.1, 2.0, n), 0.0)
    return Dataset(X, y), hyper, rho


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
