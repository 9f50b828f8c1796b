"""
Configuration management for lipspline.

Handles loading config from INI files, environment variables,
and provides default values for all tolerances and budgets.
"""

from __future__ import annotations

import configparser
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import Any, Optional


# ============================================================
# LOGGING DEFAULTS
# ============================================================
LOG_LEVEL = "INFO"
LOG_FILE = ""
LOG_MAX_BYTES = 5 * 1024 * 1024
LOG_BACKUP_COUNT = 3
LOG_TO_STDERR = True

CONFIG_PATH = os.environ.get("LIPSPLINE_CONFIG", "./config.ini")
LOG_FILE_ENV = os.environ.get("LIPSPLINE_LOG_FILE")


# ============================================================
# NUMERICAL TOLERANCES
# ============================================================
# Knot dedup is absolute (scaled by max(1, |x|)), slope equality is relative.
KNOT_TOLERANCE = 1e-12
SLOPE_TOLERANCE = 1e-12
CLASSIFICATION_TOLERANCE = 1e-10
GRID_ERROR_TOLERANCE = 1e-9
UNIT_NORM_TOLERANCE = 1e-9
BOUNDARY_TOLERANCE = 1e-12
LP_MARGIN = 1e-9
CONSTRAINT_TOLERANCE = 1e-9
LIPSCHITZ_TOLERANCE = 1e-12


# ============================================================
# LINEAR ALGEBRA
# ============================================================
POWER_ITERATION_REL_TOL = 1e-12
POWER_ITERATION_MAX_ITER = 10_000
POWER_ITERATION_SEED = 0

ORTHOGONAL_TOL = 1e-10
ORTHOGONAL_MAX_ITER = 100


# ============================================================
# REGION ENUMERATION BUDGET
# ============================================================
ENUMERATION_MAX_NEURONS = 24
ENUMERATION_MAX_PATTERNS = 2**24


# ============================================================
# GRID ORACLE
# ============================================================
GRID_POINTS = 10_000
GRID_MARGIN = 5.0


# ============================================================
# EXPERIMENTS
# ============================================================
SAWTOOTH_DEPTH_LIMIT = 20
MAX_SAWTOOTH_DEPTH = SAWTOOTH_DEPTH_LIMIT
MAX_HIDDEN_WIDTH = 32
MAX_SPLINE_KNOTS = 8
ANALYSIS_WORKERS = 1


# ============================================================
# HELPER FUNCTIONS
# ============================================================

def _as_bool(value: Any, default: bool) -> bool:
    """Parse a value as boolean."""
    if value is None:
        return default
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    return default


def _as_int(
    value: Any,
    default: int,
    min_value: Optional[int] = None,
    max_value: Optional[int] = None,
) -> int:
    """Parse a value as integer with optional bounds."""
    try:
        if value is None:
            return default
        parsed = int(value)
    except Exception:
        return default
    if min_value is not None:
        parsed = max(min_value, parsed)
    if max_value is not None:
        parsed = min(max_value, parsed)
    return parsed


def _as_float(
    value: Any,
    default: float,
    min_value: Optional[float] = None,
    max_value: Optional[float] = None,
) -> float:
    """Parse a value as float with optional bounds."""
    try:
        if value is None:
            return default
        parsed = float(value)
    except Exception:
        return default
    if parsed != parsed:
        return default
    if min_value is not None:
        parsed = max(min_value, parsed)
    if max_value is not None:
        parsed = min(max_value, parsed)
    return parsed


def _as_tolerance(value: Any, default: float) -> float:
    """Parse a strictly positive tolerance."""
    return _as_float(value, default, min_value=1e-300, max_value=1.0)


def load_config(path: Optional[str] = None) -> configparser.ConfigParser:
    """Load configuration from INI file."""
    if path is None:
        path = os.environ.get("LIPSPLINE_CONFIG", CONFIG_PATH)
    parser = configparser.ConfigParser()
    if path and os.path.exists(path):
        parser.read(path)
    return parser


def apply_config(parser: configparser.ConfigParser) -> None:
    """Apply loaded configuration to global settings."""
    global LOG_LEVEL, LOG_FILE, LOG_MAX_BYTES, LOG_BACKUP_COUNT, LOG_TO_STDERR
    global KNOT_TOLERANCE, SLOPE_TOLERANCE, CLASSIFICATION_TOLERANCE
    global GRID_ERROR_TOLERANCE, UNIT_NORM_TOLERANCE, BOUNDARY_TOLERANCE
    global LP_MARGIN, CONSTRAINT_TOLERANCE, LIPSCHITZ_TOLERANCE
    global POWER_ITERATION_REL_TOL, POWER_ITERATION_MAX_ITER, POWER_ITERATION_SEED
    global ORTHOGONAL_TOL, ORTHOGONAL_MAX_ITER
    global ENUMERATION_MAX_NEURONS, ENUMERATION_MAX_PATTERNS
    global GRID_POINTS, GRID_MARGIN
    global MAX_SAWTOOTH_DEPTH, MAX_HIDDEN_WIDTH, MAX_SPLINE_KNOTS, ANALYSIS_WORKERS

    if parser.has_section("logging"):
        LOG_LEVEL = parser.get("logging", "level", fallback=LOG_LEVEL)
        LOG_FILE = parser.get("logging", "file", fallback=LOG_FILE)
        LOG_MAX_BYTES = _as_int(
            parser.get("logging", "max_bytes", fallback=LOG_MAX_BYTES),
            LOG_MAX_BYTES,
            min_value=1024,
        )
        LOG_BACKUP_COUNT = _as_int(
            parser.get("logging", "backup_count", fallback=LOG_BACKUP_COUNT),
            LOG_BACKUP_COUNT,
            min_value=1,
        )
        LOG_TO_STDERR = _as_bool(
            parser.get("logging", "stderr", fallback=LOG_TO_STDERR), LOG_TO_STDERR
        )

    if parser.has_section("tolerances"):
        KNOT_TOLERANCE = _as_tolerance(
            parser.get("tolerances", "knot", fallback=KNOT_TOLERANCE), KNOT_TOLERANCE
        )
        SLOPE_TOLERANCE = _as_tolerance(
            parser.get("tolerances", "slope", fallback=SLOPE_TOLERANCE), SLOPE_TOLERANCE
        )
        CLASSIFICATION_TOLERANCE = _as_tolerance(
            parser.get(
                "tolerances", "classification", fallback=CLASSIFICATION_TOLERANCE
            ),
            CLASSIFICATION_TOLERANCE,
        )
        GRID_ERROR_TOLERANCE = _as_tolerance(
            parser.get("tolerances", "grid_error", fallback=GRID_ERROR_TOLERANCE),
            GRID_ERROR_TOLERANCE,
        )
        UNIT_NORM_TOLERANCE = _as_tolerance(
            parser.get("tolerances", "unit_norm", fallback=UNIT_NORM_TOLERANCE),
            UNIT_NORM_TOLERANCE,
        )
        BOUNDARY_TOLERANCE = _as_tolerance(
            parser.get("tolerances", "boundary", fallback=BOUNDARY_TOLERANCE),
            BOUNDARY_TOLERANCE,
        )
        LP_MARGIN = _as_tolerance(
            parser.get("tolerances", "lp_margin", fallback=LP_MARGIN), LP_MARGIN
        )
        CONSTRAINT_TOLERANCE = _as_tolerance(
            parser.get("tolerances", "constraint", fallback=CONSTRAINT_TOLERANCE),
            CONSTRAINT_TOLERANCE,
        )
        LIPSCHITZ_TOLERANCE = _as_tolerance(
            parser.get("tolerances", "lipschitz", fallback=LIPSCHITZ_TOLERANCE),
            LIPSCHITZ_TOLERANCE,
        )

    if parser.has_section("power_iteration"):
        POWER_ITERATION_REL_TOL = _as_tolerance(
            parser.get("power_iteration", "rel_tol", fallback=POWER_ITERATION_REL_TOL),
            POWER_ITERATION_REL_TOL,
        )
        POWER_ITERATION_MAX_ITER = _as_int(
            parser.get(
                "power_iteration", "max_iter", fallback=POWER_ITERATION_MAX_ITER
            ),
            POWER_ITERATION_MAX_ITER,
            min_value=1,
        )
        POWER_ITERATION_SEED = _as_int(
            parser.get("power_iteration", "seed", fallback=POWER_ITERATION_SEED),
            POWER_ITERATION_SEED,
            min_value=0,
        )

    if parser.has_section("orthogonal"):
        ORTHOGONAL_TOL = _as_tolerance(
            parser.get("orthogonal", "tol", fallback=ORTHOGONAL_TOL), ORTHOGONAL_TOL
        )
        ORTHOGONAL_MAX_ITER = _as_int(
            parser.get("orthogonal", "max_iter", fallback=ORTHOGONAL_MAX_ITER),
            ORTHOGONAL_MAX_ITER,
            min_value=1,
        )

    if parser.has_section("enumeration"):
        ENUMERATION_MAX_NEURONS = _as_int(
            parser.get("enumeration", "max_neurons", fallback=ENUMERATION_MAX_NEURONS),
            ENUMERATION_MAX_NEURONS,
            min_value=1,
            max_value=64,
        )
        ENUMERATION_MAX_PATTERNS = _as_int(
            parser.get(
                "enumeration", "max_patterns", fallback=ENUMERATION_MAX_PATTERNS
            ),
            ENUMERATION_MAX_PATTERNS,
            min_value=1,
        )

    if parser.has_section("grid"):
        GRID_POINTS = _as_int(
            parser.get("grid", "points", fallback=GRID_POINTS),
            GRID_POINTS,
            min_value=16,
            max_value=10_000_000,
        )
        GRID_MARGIN = _as_float(
            parser.get("grid", "margin", fallback=GRID_MARGIN),
            GRID_MARGIN,
            min_value=0.0,
        )

    if parser.has_section("analysis"):
        MAX_SAWTOOTH_DEPTH = _as_int(
            parser.get("analysis", "max_sawtooth_depth", fallback=MAX_SAWTOOTH_DEPTH),
            MAX_SAWTOOTH_DEPTH,
            min_value=1,
            max_value=SAWTOOTH_DEPTH_LIMIT,
        )
        MAX_HIDDEN_WIDTH = _as_int(
            parser.get("analysis", "max_hidden_width", fallback=MAX_HIDDEN_WIDTH),
            MAX_HIDDEN_WIDTH,
            min_value=1,
        )
        MAX_SPLINE_KNOTS = _as_int(
            parser.get("analysis", "max_spline_knots", fallback=MAX_SPLINE_KNOTS),
            MAX_SPLINE_KNOTS,
            min_value=0,
        )
        ANALYSIS_WORKERS = _as_int(
            parser.get("analysis", "workers", fallback=ANALYSIS_WORKERS),
            ANALYSIS_WORKERS,
            min_value=1,
            max_value=64,
        )

    if LOG_FILE_ENV:
        LOG_FILE = LOG_FILE_ENV


def configure_logging(level: Optional[str] = None) -> None:
    """Set up logging handlers based on configuration.

    Stdout carries JSON/CSV output, so the stream handler writes to stderr.
    """
    level_name = (level or LOG_LEVEL or "INFO").upper()
    log_level = getattr(logging, level_name, logging.INFO)
    formatter = logging.Formatter("%(asctime)s [%(levelname)s] %(message)s")

    root = logging.getLogger()
    root.setLevel(log_level)
    root.handlers = []

    if LOG_FILE:
        log_dir = os.path.dirname(LOG_FILE)
        try:
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            file_handler = RotatingFileHandler(
                LOG_FILE,
                maxBytes=LOG_MAX_BYTES,
                backupCount=LOG_BACKUP_COUNT,
            )
            file_handler.setFormatter(formatter)
            root.addHandler(file_handler)
        except OSError as exc:
            logging.warning("Failed to configure file logging: %s", exc)

    if LOG_TO_STDERR:
        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setFormatter(formatter)
        root.addHandler(stream_handler)

    logging.captureWarnings(True)
