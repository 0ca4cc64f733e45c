import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from collapsesim.qstate import Grid, PhysicalConstants, make_gaussian, make_superposition

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def grid():
    return Grid(40.0, 1024)


@pytest.fixture
def unit_constants():
    return PhysicalConstants.from_lambda0(1.0)


def two_packets(grid, R, sigma=1.0, c_right=np.sqrt(0.5)):
    """``c- phi(-R) + c+ phi(+R)`` with real coefficients."""
    c_left = np.sqrt(1.0 - c_right**2)
    return make_superposition(grid, [make_gaussian(grid, -R, sigma), make_gaussian(grid, R, sigma)],
                              [c_left, c_right])


def random_state(rng, grid, k_max=3, spread=4.0, widths=(0.6, 1.5)):
    """Superposition of 1..k_max random Gaussians with random phases and momenta."""
    k = int(rng.integers(1, k_max + 1))
    packets = [make_gaussian(grid, rng.uniform(-spread, spread), rng.uniform(*widths), rng.uniform(-1, 1))
               for _ in range(k)]
    coef = rng.uniform(0.3, 1.0, k) * np.exp(1j * rng.uniform(0, 2 * np.pi, k))
    return make_superposition(grid, packets, coef)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


def record(criterion, ok, detail):
    line = f"{criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:].split()[0])):
            terminalreporter.write_line(ACCEPTANCE[key])
