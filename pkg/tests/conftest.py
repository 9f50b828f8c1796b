"""
Pytest configuration and shared fixtures for lipspline tests.
"""

import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Generator

import numpy as np
import pytest

# Add project root to path
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))


@pytest.fixture
def temp_config_file() -> Generator[Path, None, None]:
    """Create a temporary config file for testing."""
    with tempfile.NamedTemporaryFile(mode="w", suffix=".ini", delete=False) as f:
        f.write("""
[logging]
level = DEBUG
file = ./logs/test.log
max_bytes = 1048576
backup_count = 2
stderr = false

[tolerances]
knot = 1e-11
slope = 1e-11
classification = 1e-9
grid_error = 1e-8
unit_norm = 1e-8
boundary = 1e-11
lp_margin = 1e-8
constraint = 1e-8
lipschitz = 1e-11

[power_iteration]
rel_tol = 1e-10
max_iter = 500
seed = 3

[orthogonal]
tol = 1e-9
max_iter = 50

[enumeration]
max_neurons = 16
max_patterns = 65536

[grid]
points = 2000
margin = 2.5

[analysis]
max_sawtooth_depth = 12
max_hidden_width = 16
max_spline_knots = 5
workers = 2
""")
        f.flush()
        yield Path(f.name)
    os.unlink(f.name)


# Config globals that apply_config and tests may mutate.
_CONFIG_GLOBALS = [
    "LOG_LEVEL", "LOG_FILE", "LOG_MAX_BYTES", "LOG_BACKUP_COUNT", "LOG_TO_STDERR",
    "KNOT_TOLERANCE", "SLOPE_TOLERANCE", "CLASSIFICATION_TOLERANCE",
    "GRID_ERROR_TOLERANCE", "UNIT_NORM_TOLERANCE", "BOUNDARY_TOLERANCE",
    "LP_MARGIN", "CONSTRAINT_TOLERANCE", "LIPSCHITZ_TOLERANCE",
    "POWER_ITERATION_REL_TOL", "POWER_ITERATION_MAX_ITER", "POWER_ITERATION_SEED",
    "ORTHOGONAL_TOL", "ORTHOGONAL_MAX_ITER",
    "ENUMERATION_MAX_NEURONS", "ENUMERATION_MAX_PATTERNS",
    "GRID_POINTS", "GRID_MARGIN",
    "MAX_SAWTOOTH_DEPTH", "MAX_HIDDEN_WIDTH", "MAX_SPLINE_KNOTS", "ANALYSIS_WORKERS",
]


@pytest.fixture(autouse=False)
def save_restore_config():
    """Save config globals before a test and restore them afterwards."""
    from core import config as _cfg
    saved = {name: getattr(_cfg, name) for name in _CONFIG_GLOBALS}
    yield
    for name, value in saved.items():
        setattr(_cfg, name, value)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so random tests are reproducible."""
    return np.random.default_rng(20240607)


@pytest.fixture
def hat():
    """Hat function: knots -1, 0, 1, values 0, 1, 0, flat outside."""
    from core.cpwl1d import LinearSpline1D
    return LinearSpline1D(np.array([-1.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0]), 0.0, 0.0)


@pytest.fixture
def abs_spline():
    """|x| as a one-knot spline."""
    from core.cpwl1d import LinearSpline1D
    return LinearSpline1D(np.array([0.0]), np.array([0.0]), -1.0, 1.0)


@pytest.fixture
def tmp_json(tmp_path: Path) -> Callable[[str, object], Path]:
    """Write an object as JSON under tmp_path and return the path."""

    def _write(name: str, document: object) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return _write
