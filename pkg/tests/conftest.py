import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from forest_transfer.core import ForestType, Plot, PlotTable  # noqa: E402

ACCEPTANCE_LINES = []


def make_table(X, y, types=None, name="t", schema=None, xy=None):
    """PlotTable from arrays; ids are zero-padded positions."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    schema = schema or tuple(f"f{j}" for j in range(p))
    types = np.ones(n, dtype=int) if types is None else np.asarray(types)
    xy = np.zeros((n, 2)) if xy is None else np.asarray(xy, dtype=float)
    plots = tuple(Plot(f"p{i:05d}", float(xy[i, 0]), float(xy[i, 1]), float(y[i]),
                       tuple(float(v) for v in X[i]), ForestType(int(types[i])))
                  for i in range(n))
    return PlotTable(tuple(schema), plots, name)


@pytest.fixture
def acceptance():
    """Record one printed pass/fail line per acceptance criterion."""
    def record(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {title} {detail}".rstrip())
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
