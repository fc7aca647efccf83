"""
Pytest configuration and shared fixtures for the sidx tests.
"""

import pytest
import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli.run_log import RunLogger
from src.geometry.rects import Rect
from src.regularity.design import ScalePlan


# ============ Geometry Fixtures ============

@pytest.fixture
def center():
    """The set U0 = [0, (0.6, 0.6)] used by the localized estimators."""
    return Rect.of(0.6, 0.6)


@pytest.fixture
def ball_plan(center):
    """Dyadic radii 2^-2 .. 2^-10 around U0 with 64 random sets per radius."""
    return ScalePlan.dyadic(center)


# ============ CLI Fixtures ============

@pytest.fixture
def run_logger(tmp_path):
    """Create a run logger with a temporary directory."""
    log_dir = tmp_path / "runs"
    log_dir.mkdir(parents=True, exist_ok=True)
    return RunLogger(log_dir=log_dir)


@pytest.fixture
def clean_env(tmp_path, monkeypatch):
    """Run from an empty directory with no SIDX_* variables set."""
    for var in ("SIDX_SEED", "SIDX_REPS", "SIDX_THREADS", "SIDX_OUT", "SIDX_MAX_SETS",
                "SIDX_LOG_LEVEL"):
        monkeypatch.delenv(var, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path


def pytest_configure(config):
    """Configure pytest markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
    config.addinivalue_line(
        "markers", "unit: marks tests as unit tests"
    )
