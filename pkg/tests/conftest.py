import numpy as np
import pytest


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_diff(objective, array, h=1e-5):
    """Central finite differences of a scalar objective w.r.t. an array in place."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    grad_flat = grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        fplus = objective()
        flat[j] = orig - h
        fminus = objective()
        flat[j] = orig
        grad_flat[j] = (fplus - fminus) / (2.0 * h)
    return grad


def max_rel_err(analytic, numeric, floor=1e-6):
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))
