import numpy as np
import pytest

from colorshed.features import DEFAULT_COLORS, BinGrid, ColorFeatures, FrameFeatures, extract_features
from colorshed.synth import generate_corpus
from colorshed.utility import parse_query, train_utility_model

GRID = BinGrid()
RED = {"red": DEFAULT_COLORS["red"]}


def pf_features(grid=GRID, total=100, **per_color):
    """FrameFeatures built straight from ``{(i, j): mass}`` dicts per color."""
    out = {}
    for name, cells in per_color.items():
        pf = np.zeros(grid.shape)
        for (i, j), m in cells.items():
            pf[i, j] = m
        n = 1 if pf.sum() > 0 else 0
        out[name] = ColorFeatures(float(n), pf, n)
    return FrameFeatures(out, total, grid)


@pytest.fixture(scope="session")
def corpus():
    return generate_corpus(11, n_cameras=3, frames_per_camera=400)


@pytest.fixture(scope="session")
def red_model(corpus):
    frames = [(extract_features(r.hist, RED, GRID), r.labels(["red"])) for r in corpus]
    return train_utility_model(frames, RED, parse_query("red"), GRID)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
