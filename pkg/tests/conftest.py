import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([[1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                     [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                     [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]])


def random_tet(rng, scale=1.0, center=None, min_quality=0.05):
    """Positively oriented tet with bounded aspect ratio."""
    center = np.zeros(3) if center is None else np.asarray(center, float)
    while True:
        p = rng.normal(size=(4, 3)) * scale
        e = p[1:] - p[0]
        vol = np.linalg.det(e) / 6
        edge = max(np.linalg.norm(p[i] - p[j]) for i in range(4) for j in range(i + 1, 4))
        if abs(vol) > min_quality * edge ** 3 / (6 * np.sqrt(2)):
            if vol < 0:
                p[[1, 2]] = p[[2, 1]]
            return p - p.mean(axis=0) + center


def inside_tet(pts, x, tol=0.0):
    """Barycentric point-in-tet test for many points x (n, 3)."""
    e = (pts[1:] - pts[0]).T
    lam = np.linalg.solve(e, (np.atleast_2d(x) - pts[0]).T).T
    w = np.concatenate([1 - lam.sum(axis=1, keepdims=True), lam], axis=1)
    return np.all(w >= -tol, axis=1)


seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@functools.lru_cache(maxsize=None)
def coin_run(eps0=1.0, **overrides):
    """Coin spin-down record, shared between test modules."""
    from hydrostep.experiments.runner import run_scenario
    from hydrostep.experiments.scenario import coin_scenario
    return run_scenario(coin_scenario(eps0, **overrides))


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    """Store one acceptance line; all lines are printed in the terminal summary."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
