"""Utility modules for JSON/CSV IO, trial running and report logging."""

__all__ = [
    "VERSION",
    "envelope",
    "dumps_json",
    "write_json",
    "read_json",
    "expect_schema",
    "detect_schema",
    "format_float",
    "write_csv_grid",
    "run_trials",
    "log_report_summary",
]

from .helpers import (
    VERSION,
    envelope,
    dumps_json,
    write_json,
    read_json,
    expect_schema,
    detect_schema,
    format_float,
    write_csv_grid,
    run_trials,
    log_report_summary,
)
