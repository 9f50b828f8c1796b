"""Plain-text summary tables written to stderr."""

from __future__ import annotations

import sys
from typing import Any, Mapping, Optional, TextIO


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    if value is None:
        return "-"
    return str(value)


def render_table(title: str, rows: Mapping[str, Any]) -> str:
    width = max((len(key) for key in rows), default=0)
    lines = [title, "-" * max(len(title), width + 14)]
    for key, value in rows.items():
        if isinstance(value, (list, dict)):
            continue
        lines.append(f"{key.ljust(width)}  {_cell(value)}")
    return "\n".join(lines) + "\n"


def print_summary(title: str, rows: Mapping[str, Any], stream: Optional[TextIO] = None) -> None:
    (stream or sys.stderr).write(render_table(title, rows))
