import numpy as np
import pytest

from patrecon.grid import build_detectors, build_grid, build_timegrid
from patrecon.phantom import gaussian_phantom, rasterize
from patrecon.wavesim import simulate


@pytest.fixture(scope="session")
def small_setup():
    """Coarse Gaussian-phantom problem shared by the fast reconstruction tests."""
    grid = build_grid(65, 1.0, (0.0, 0.0))
    geom = build_detectors(1.0, (0.0, 0.0), grid.dx)
    tg = build_timegrid(2.0, 4e-3)
    spec = gaussian_phantom()
    field = rasterize(spec, grid)
    d, n = simulate(field, geom, tg)
    return {"grid": grid, "geom": geom, "tg": tg, "spec": spec, "field": field, "d": d, "n": n}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(pytestconfig):
    """Record one ``CRITERION n: PASS/FAIL ...`` line; all lines are repeated in the summary."""
    lines = pytestconfig.stash.setdefault(ACCEPTANCE, [])

    def report(number, passed, text):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {text}"
        lines.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
