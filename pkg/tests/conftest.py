import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from otreg.measures import DiscreteMeasure  # noqa: E402

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")


def random_measure(rng, n, dim=2, mass_range=(0.2, 1.0)):
    pos = rng.uniform(0.0, 1.0, (n, dim))
    dirs = rng.normal(size=(n, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return DiscreteMeasure(pos, dirs, rng.uniform(*mass_range, n))


def rel_err(a, b, floor=1e-12):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rho_label(rho):
    return "inf" if math.isinf(rho) else f"{rho:g}"


class RawMeasure:
    """Unvalidated stand-in for DiscreteMeasure, used to perturb directions off the sphere."""

    def __init__(self, positions, directions, masses):
        self.positions = np.asarray(positions, float)
        self.directions = np.asarray(directions, float)
        self.masses = np.asarray(masses, float)

    @property
    def dim(self):
        return self.positions.shape[1]


ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Store a one-line verdict for an acceptance criterion; printed at the end of the run."""
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
