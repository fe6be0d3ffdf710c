from pathlib import Path

import numpy as np
import pytest

from damageid.config import load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def twin_cfg():
    return load_config(CONFIGS / "twin_1d.ini")


@pytest.fixture(scope="session")
def picard_cfg():
    return load_config(CONFIGS / "picard_1d.ini")


@pytest.fixture(scope="session")
def plate_cfg():
    return load_config(CONFIGS / "plate_2d.ini")


@pytest.fixture(scope="session")
def twin_model(twin_cfg):
    return twin_cfg.forward_model()


@pytest.fixture(scope="session")
def twin_truth(twin_cfg):
    return twin_cfg.truth()


@pytest.fixture(scope="session")
def twin_state(twin_model, twin_truth):
    return twin_model.solve(twin_truth)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record ``(number, ok, detail)`` for the end-of-run criteria summary."""
    lines = request.config.stash[ACCEPTANCE]

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
