import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from micstokes.grid import FieldSet, make_uniform_grid  # noqa: E402


def random_fields(nx, ny, seed=0, xsize=1.0, ysize=1.0, eta_range=(0.5, 2.0)):
    g = make_uniform_grid(nx, ny, xsize, ysize)
    rng = np.random.default_rng(seed)
    f = FieldSet.allocate(g)
    f.vx[...] = rng.standard_normal(g.shape)
    f.vy[...] = rng.standard_normal(g.shape)
    f.p[...] = rng.standard_normal(g.shape)
    f.etab[...] = rng.uniform(*eta_range, g.shape)
    f.etap[...] = rng.uniform(*eta_range, g.shape)
    return g, f


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one PASS/FAIL line per acceptance criterion."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
