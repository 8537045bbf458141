import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from catalogstitch.dataset import load_dataset  # noqa: E402
from catalogstitch.fixtures import generate_fixtures  # noqa: E402
from catalogstitch.raster import BBox, BinaryMask, RasterImage  # noqa: E402


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixtures_seed7")
    generate_fixtures(root, seed=7)
    return root


@pytest.fixture(scope="session")
def fixture_records(fixture_root):
    return load_dataset(fixture_root)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def solid(w, h, color):
    return RasterImage.filled(w, h, color)


def rect_mask(w, h, x, y, bw, bh):
    return BinaryMask.rect(w, h, BBox(x, y, bw, bh))


def random_image(rng, w, h, channels=3):
    return RasterImage(rng.integers(0, 256, size=(h, w, channels), dtype=np.uint8))


_ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
