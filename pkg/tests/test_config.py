"""
Tests for core/config.py - Configuration parsing and validation.
"""

import configparser
import logging
import os
import sys
from unittest.mock import patch

import pytest

# Import after path setup in conftest.py
from core import config


class TestConfigHelpers:
    """Test helper functions for config parsing."""

    def test_as_bool_true_values(self):
        """Test _as_bool recognizes true values."""
        for val in ("true", "True", "TRUE", "yes", "Yes", "1", "on", "On"):
            assert config._as_bool(val, False) is True

    def test_as_bool_false_values(self):
        """Test _as_bool recognizes false values."""
        for val in ("false", "False", "FALSE", "no", "No", "0", "off", "Off"):
            assert config._as_bool(val, True) is False

    def test_as_bool_default(self):
        """Test _as_bool returns default for invalid values."""
        assert config._as_bool("invalid", True) is True
        assert config._as_bool("", False) is False
        assert config._as_bool(None, True) is True

    def test_as_int_with_bounds(self):
        """Test _as_int respects min/max bounds."""
        assert config._as_int("100", 0, min_value=0, max_value=50) == 50
        assert config._as_int("-10", 0, min_value=0, max_value=50) == 0
        assert config._as_int("25", 0, min_value=0, max_value=50) == 25

    def test_as_int_default(self):
        """Test _as_int returns default for invalid values."""
        assert config._as_int("not_a_number", 42) == 42
        assert config._as_int("3.14", 0) == 0

    def test_as_float_scientific(self):
        """Test _as_float parses scientific notation."""
        assert config._as_float("1e-12", 0.0) == pytest.approx(1e-12)
        assert config._as_float("-2.5", 0.0) == pytest.approx(-2.5)

    def test_as_float_nan_is_default(self):
        """Test _as_float rejects NaN."""
        assert config._as_float("nan", 0.5) == 0.5

    def test_as_tolerance_stays_positive(self):
        """Test _as_tolerance clamps zero and negative values above zero."""
        assert config._as_tolerance("0", 1e-9) > 0.0
        assert config._as_tolerance("-1", 1e-9) > 0.0
        assert config._as_tolerance("5", 1e-9) == 1.0
        assert config._as_tolerance("garbage", 1e-9) == 1e-9


class TestLoadConfig:
    """Test config file loading."""

    def test_load_config_custom_path(self, temp_config_file):
        """Test loading config from custom path."""
        parser = config.load_config(str(temp_config_file))
        assert isinstance(parser, configparser.ConfigParser)
        assert parser.has_section("logging")
        assert parser.has_section("tolerances")
        assert parser.has_section("enumeration")

    def test_load_config_missing_file(self, tmp_path):
        """Test loading non-existent config returns empty parser."""
        parser = config.load_config(str(tmp_path / "nonexistent.ini"))
        assert isinstance(parser, configparser.ConfigParser)
        assert parser.sections() == []

    def test_load_config_env_override(self, temp_config_file):
        """Test LIPSPLINE_CONFIG env var overrides default path."""
        with patch.dict(os.environ, {"LIPSPLINE_CONFIG": str(temp_config_file)}):
            parser = config.load_config()
            assert parser.has_section("grid")

    def test_repository_config_parses(self):
        """Test the shipped config.ini has every section."""
        from conftest import PROJECT_ROOT

        parser = config.load_config(str(PROJECT_ROOT / "config.ini"))
        for section in ("logging", "tolerances", "power_iteration", "orthogonal",
                        "enumeration", "grid", "analysis"):
            assert parser.has_section(section)


class TestApplyConfig:
    """Test config application to global variables."""

    def test_apply_config_sets_globals(self, temp_config_file, save_restore_config):
        """Test apply_config sets module-level variables."""
        config.apply_config(config.load_config(str(temp_config_file)))

        assert config.LOG_LEVEL == "DEBUG"
        assert config.LOG_TO_STDERR is False
        assert config.GRID_ERROR_TOLERANCE == pytest.approx(1e-8)
        assert config.UNIT_NORM_TOLERANCE == pytest.approx(1e-8)
        assert config.POWER_ITERATION_MAX_ITER == 500
        assert config.POWER_ITERATION_SEED == 3
        assert config.ORTHOGONAL_MAX_ITER == 50
        assert config.ENUMERATION_MAX_NEURONS == 16
        assert config.ENUMERATION_MAX_PATTERNS == 65536
        assert config.GRID_POINTS == 2000
        assert config.GRID_MARGIN == pytest.approx(2.5)
        assert config.MAX_SAWTOOTH_DEPTH == 12
        assert config.ANALYSIS_WORKERS == 2

    def test_apply_config_bounds_checking(self, tmp_path, save_restore_config):
        """Test apply_config enforces bounds on values."""
        config_file = tmp_path / "test.ini"
        config_file.write_text("""
[grid]
points = 3

[analysis]
max_sawtooth_depth = 1000
workers = 0

[tolerances]
grid_error = -1
""")
        config.apply_config(config.load_config(str(config_file)))

        assert config.GRID_POINTS >= 16
        assert config.MAX_SAWTOOTH_DEPTH == 20
        assert config.ANALYSIS_WORKERS >= 1
        assert config.GRID_ERROR_TOLERANCE > 0.0

    def test_apply_config_invalid_text_keeps_default(self, tmp_path, save_restore_config):
        """Test unparsable values leave the previous setting."""
        config_file = tmp_path / "test.ini"
        config_file.write_text("[tolerances]\nunit_norm = tiny\n")
        before = config.UNIT_NORM_TOLERANCE
        config.apply_config(config.load_config(str(config_file)))
        assert config.UNIT_NORM_TOLERANCE == before

    def test_log_file_env_overrides(self, save_restore_config):
        """Test LIPSPLINE_LOG_FILE wins over the INI setting."""
        with patch.object(config, "LOG_FILE_ENV", "/tmp/lipspline-test.log"):
            config.apply_config(configparser.ConfigParser())
        assert config.LOG_FILE == "/tmp/lipspline-test.log"


class TestConfigureLogging:
    """Test logging setup."""

    def test_stream_handler_uses_stderr(self, save_restore_config):
        """Test log records go to stderr so stdout stays clean."""
        root = logging.getLogger()
        saved = (root.level, list(root.handlers))
        try:
            config.LOG_FILE = ""
            config.LOG_TO_STDERR = True
            config.configure_logging("debug")
            assert root.level == logging.DEBUG
            streams = [getattr(h, "stream", None) for h in root.handlers]
            assert sys.stderr in streams
            assert sys.stdout not in streams
        finally:
            root.setLevel(saved[0])
            root.handlers = saved[1]

    def test_rotating_file_handler(self, tmp_path, save_restore_config):
        """Test a log file gets a rotating handler."""
        from logging.handlers import RotatingFileHandler

        root = logging.getLogger()
        saved = (root.level, list(root.handlers))
        try:
            config.LOG_FILE = str(tmp_path / "logs" / "run.log")
            config.LOG_TO_STDERR = False
            config.configure_logging("INFO")
            handlers = [h for h in root.handlers if isinstance(h, RotatingFileHandler)]
            assert len(handlers) == 1
            assert handlers[0].maxBytes == config.LOG_MAX_BYTES
            for handler in handlers:
                handler.close()
        finally:
            root.setLevel(saved[0])
            root.handlers = saved[1]


class TestConfigDefaults:
    """Test default configuration values."""

    def test_default_tolerances(self):
        """Test documented tolerance defaults."""
        assert config.KNOT_TOLERANCE <= 1e-10
        assert 0.0 < config.UNIT_NORM_TOLERANCE <= 1e-6
        assert 0.0 < config.GRID_ERROR_TOLERANCE <= 1e-6

    def test_default_budgets(self):
        """Test enumeration and experiment budgets."""
        assert config.ENUMERATION_MAX_PATTERNS == 2**24
        assert config.MAX_SAWTOOTH_DEPTH == 20
        assert config.MAX_HIDDEN_WIDTH == 32
