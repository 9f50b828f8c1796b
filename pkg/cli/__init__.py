"""Command line surface: argument parsing, subcommand handlers and summary tables."""

__all__ = [
    "HANDLERS",
    "UsageError",
    "apply_overrides",
    "build_parser",
    "print_summary",
    "render_table",
]

from .commands import HANDLERS, UsageError, apply_overrides, build_parser
from .tables import print_summary, render_table
