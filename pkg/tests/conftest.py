import logging
from pathlib import Path

import numpy as np
import pytest

import fxt_multirate
from fxt_multirate.config import load_config

SCENARIO_DIR = Path(fxt_multirate.__file__).parent / "scenarios"


@pytest.fixture(autouse=True)
def _quiet_sim_warnings():
    logging.getLogger("fxt_multirate").setLevel(logging.ERROR)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scenario(name, overrides=None):
    return load_config(SCENARIO_DIR / f"{name}.cfg", overrides)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
