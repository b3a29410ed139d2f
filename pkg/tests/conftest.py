from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cascadesim import load_cascade

ROOT = Path(__file__).resolve().parents[1]
CASCADES = ROOT / "cascades"
CORPUS = sorted(p.name for p in CASCADES.glob("*.cas"))

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture
def cascade():
    return lambda name: load_cascade(CASCADES / name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cascade_path():
    return lambda name: CASCADES / f"{name}.cas"


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])
