import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flamezones.data_model import generate_synthetic_flame, normalize  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def flame():
    """Noise-free 64x48 synthetic flame: (normalized image, ground-truth mask)."""
    img, mask = generate_synthetic_flame(64, 48)
    return normalize(img), mask


@pytest.fixture
def noisy_flame():
    img, mask = generate_synthetic_flame(64, 48, noise=0.02, seed=3)
    return normalize(img), mask


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one acceptance verdict; the lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number, ok, detail):
        lines.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
