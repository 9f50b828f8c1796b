"""
Utility functions for lipspline.

Includes JSON/CSV IO with the versioned schema envelope, a concurrent trial
runner and report logging.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

VERSION = "1.0.0"


def envelope(schema: str, payload: Mapping[str, Any], seed: Optional[int] = None) -> dict[str, Any]:
    """Wrap a payload with the schema/seed/version header."""
    document = dict(payload)
    document["schema"] = schema
    document["seed"] = seed
    document["version"] = VERSION
    return document


def dumps_json(document: Mapping[str, Any]) -> str:
    """Canonical text: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: Optional[str], document: Mapping[str, Any]) -> str:
    """Write a document to ``path`` or return the text when path is None or '-'."""
    text = dumps_json(document)
    if path and path != "-":
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
        logging.debug("Wrote %s document to %s", document.get("schema"), path)
    return text


def read_json(path: str) -> dict[str, Any]:
    """Load a JSON object. JSONDecodeError propagates with its line and column."""
    from core.errors import SchemaError

    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise SchemaError("$", "expected a JSON object at top level")
    return data


def expect_schema(data: Mapping[str, Any], *schemas: str) -> str:
    """Return the document schema, accepting documents without a header."""
    from core.errors import SchemaError

    schema = data.get("schema")
    if schema is None:
        return schemas[0]
    if schema not in schemas:
        raise SchemaError("schema", f"expected {' or '.join(schemas)}, got {schema!r}")
    return schema


def detect_schema(data: Mapping[str, Any]) -> str:
    """Schema of an input document, from its header or its shape."""
    from core.errors import SchemaError

    schema = data.get("schema")
    if isinstance(schema, str):
        return schema
    if "factors" in data:
        return "chain.v1"
    if "layers" in data:
        return "net.v1"
    if "groups" in data:
        return "lattice.v1"
    if "points" in data:
        return "points.v1"
    if "knots" in data or "affine" in data:
        return "spline.v1"
    raise SchemaError("schema", "cannot tell the document type")


def format_float(value: float) -> str:
    """Full double precision (17 significant digits)."""
    return format(float(value), ".17g")


def write_csv_grid(
    path: str,
    header: Sequence[str],
    columns: Iterable[Sequence[float]],
) -> None:
    """Write equal-length numeric columns as CSV with a header row."""
    arrays = [np.asarray(column, dtype=float).reshape(-1) for column in columns]
    if len(arrays) != len(header):
        raise ValueError("one header entry per column is required")
    if len({a.size for a in arrays}) > 1:
        raise ValueError("CSV columns must have equal length")
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([format_float(v) for v in row] for row in zip(*arrays))
    logging.debug("Wrote %d CSV rows to %s", arrays[0].size if arrays else 0, path)


def run_trials(
    fn: Callable[[int], T],
    count: int,
    workers: Optional[int] = None,
) -> list[T]:
    """Run fn(0..count-1) and return results indexed by trial.

    With more than one worker, trials run on a thread pool; the result list
    does not depend on completion order.
    """
    from core import config

    workers = config.ANALYSIS_WORKERS if workers is None else int(workers)
    count = int(count)
    if count <= 0:
        return []
    if workers <= 1:
        return [fn(index) for index in range(count)]

    results: list[Optional[T]] = [None] * count
    max_workers = min(workers, count)
    logging.info("Running %d trials concurrently (workers=%d)...", count, max_workers)
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = {executor.submit(fn, index): index for index in range(count)}
        for future in as_completed(futures):
            index = futures[future]
            try:
                results[index] = future.result()
            except Exception:
                logging.exception("Exception in trial %d", index)
                raise
    return results  # type: ignore[return-value]


def log_report_summary(name: str, report: Mapping[str, Any]) -> None:
    """Log scalar fields of a report on one line."""
    parts = [
        f"{key}={value}"
        for key, value in sorted(report.items())
        if isinstance(value, (bool, int, float, str)) or value is None
    ]
    logging.info("Report %s %s", name, " ".join(parts))
