"""
Tests for utils/helpers.py utility functions.
"""

import csv
import json
import threading
import time
from unittest import mock

import pytest

from core.errors import SchemaError
from utils import helpers


class TestEnvelope:
    """Tests for the schema/seed/version header."""

    def test_envelope_adds_header(self):
        """Test the header fields are present."""
        document = helpers.envelope("spline.v1", {"knots": []}, seed=7)
        assert document["schema"] == "spline.v1"
        assert document["seed"] == 7
        assert document["version"] == helpers.VERSION
        assert document["knots"] == []

    def test_envelope_does_not_mutate_payload(self):
        """Test the payload mapping is copied."""
        payload = {"a": 1}
        helpers.envelope("report.v1", payload)
        assert payload == {"a": 1}

    def test_dumps_json_is_canonical(self):
        """Test sorted keys and two-space indentation."""
        text = helpers.dumps_json({"b": 1, "a": [1, 2]})
        assert text == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'

    def test_dumps_json_rejects_nan(self):
        """Test NaN never reaches a document."""
        with pytest.raises(ValueError):
            helpers.dumps_json({"x": float("nan")})


class TestJsonIO:
    """Tests for read_json / write_json."""

    def test_write_then_read(self, tmp_path):
        """Test a written document reads back unchanged."""
        path = tmp_path / "nested" / "doc.json"
        document = helpers.envelope("points.v1", {"p": "inf"}, seed=1)
        helpers.write_json(str(path), document)
        assert helpers.read_json(str(path)) == document

    def test_write_json_without_path_returns_text(self):
        """Test no file is needed to get the text."""
        text = helpers.write_json(None, {"schema": "report.v1"})
        assert json.loads(text) == {"schema": "report.v1"}

    def test_read_json_reports_position(self, tmp_path):
        """Test malformed JSON keeps its line and column."""
        path = tmp_path / "bad.json"
        path.write_text('{\n  "knots": [1, 2,\n}\n')
        with pytest.raises(json.JSONDecodeError) as info:
            helpers.read_json(str(path))
        assert info.value.lineno == 3

    def test_read_json_requires_object(self, tmp_path):
        """Test a top-level list is a schema error."""
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(SchemaError):
            helpers.read_json(str(path))


class TestSchemaDetection:
    """Tests for expect_schema and detect_schema."""

    def test_expect_schema_accepts_headerless(self):
        """Test documents without a header are taken as the expected schema."""
        assert helpers.expect_schema({"knots": []}, "spline.v1") == "spline.v1"

    def test_expect_schema_rejects_mismatch(self):
        """Test a wrong header raises with the schema field."""
        with pytest.raises(SchemaError) as info:
            helpers.expect_schema({"schema": "net.v1"}, "spline.v1")
        assert info.value.field == "schema"

    @pytest.mark.parametrize(
        "document, expected",
        [
            ({"factors": []}, "chain.v1"),
            ({"layers": []}, "net.v1"),
            ({"groups": [], "d": 1}, "lattice.v1"),
            ({"points": [], "p": 2}, "points.v1"),
            ({"affine": {"slope": 1, "value_at_zero": 0}}, "spline.v1"),
            ({"schema": "report.v1"}, "report.v1"),
        ],
    )
    def test_detect_schema(self, document, expected):
        """Test schema detection from header or shape."""
        assert helpers.detect_schema(document) == expected

    def test_detect_schema_unknown(self):
        """Test an unrecognisable document raises."""
        with pytest.raises(SchemaError):
            helpers.detect_schema({"foo": 1})


class TestCsv:
    """Tests for CSV grid output."""

    def test_full_precision(self, tmp_path):
        """Test 17 significant digits and a header row."""
        path = tmp_path / "grid.csv"
        helpers.write_csv_grid(str(path), ["x", "f"], [[0.1, 2.0], [1.0 / 3.0, -1.0]])
        lines = path.read_text().splitlines()
        assert lines[0] == "x,f"
        assert lines[1] == "0.10000000000000001,0.33333333333333331"
        assert lines[2] == "2,-1"

    def test_readable_by_csv_module(self, tmp_path):
        """Test header names with commas are quoted and rows parse back."""
        path = tmp_path / "grid.csv"
        helpers.write_csv_grid(str(path), ["x", "f(x, y)"], [[1.5], [-2.0]])
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        assert rows == [["x", "f(x, y)"], ["1.5", "-2"]]
        assert path.read_bytes().endswith(b"\n")
        assert b"\r" not in path.read_bytes()

    def test_column_mismatch(self, tmp_path):
        """Test unequal columns are rejected."""
        with pytest.raises(ValueError):
            helpers.write_csv_grid(str(tmp_path / "bad.csv"), ["x", "f"], [[1.0], [1.0, 2.0]])


class TestRunTrials:
    """Tests for the concurrent trial runner."""

    def test_sequential_order(self):
        """Test results are indexed by trial."""
        assert helpers.run_trials(lambda i: i * i, 5, workers=1) == [0, 1, 4, 9, 16]

    def test_concurrent_results_are_indexed(self):
        """Test completion order does not change the result list."""

        def slow_first(index: int) -> int:
            time.sleep(0.02 * (4 - index))
            return index

        assert helpers.run_trials(slow_first, 5, workers=4) == [0, 1, 2, 3, 4]

    def test_uses_threads(self):
        """Test more than one worker thread runs trials."""
        seen = set()
        barrier = threading.Barrier(2, timeout=5)

        def record(index: int) -> int:
            seen.add(threading.get_ident())
            barrier.wait()
            return index

        helpers.run_trials(record, 2, workers=2)
        assert len(seen) == 2

    def test_zero_trials(self):
        """Test no trials gives an empty list."""
        assert helpers.run_trials(lambda i: i, 0) == []

    def test_trial_exception_propagates(self):
        """Test a failing trial is logged and re-raised."""

        def boom(index: int) -> int:
            if index == 2:
                raise RuntimeError("trial failed")
            return index

        with mock.patch("logging.exception") as mock_log:
            with pytest.raises(RuntimeError):
                helpers.run_trials(boom, 4, workers=2)
            mock_log.assert_called()


class TestLogReportSummary:
    """Tests for log_report_summary."""

    @mock.patch("logging.info")
    def test_logs_scalar_fields_only(self, mock_log):
        """Test nested values are left out of the summary line."""
        helpers.log_report_summary("tv2", {"tv2": 4.0, "slopes": [0, 1], "passed": True})
        mock_log.assert_called_once()
        line = mock_log.call_args[0][2]
        assert "tv2=4.0" in line
        assert "passed=True" in line
        assert "slopes" not in line
