#!/usr/bin/env python3
"""
lipspline - Command Line Entry Point

Exact CPWL spline algebra, Lipschitz-optimal interpolation, spline
decompositions and Lipschitz-constrained networks, exposed as subcommands.

Exit codes: 0 success, 1 usage/IO/schema error, 2 invariant violation.
"""

from __future__ import annotations

import json
import logging
import sys
from typing import Optional, Sequence

from cli import HANDLERS, UsageError, apply_overrides, build_parser
from core import config
from core.errors import LipsplineError, SchemaError


def _fail(message: str) -> int:
    sys.stderr.write(f"error: {message}\n")
    return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, load configuration and run one subcommand."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(sys.argv[1:] if argv is None else argv))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(str(exc))
    except SystemExit as exc:
        return int(exc.code or 0)

    # Load and apply configuration
    config_parser = config.load_config(args.config)
    config.apply_config(config_parser)
    config.configure_logging(args.log_level)
    logging.debug("Config loaded from %s", args.config or config.CONFIG_PATH)

    source = getattr(args, "input", None) or "<input>"
    try:
        apply_overrides(args)
        return HANDLERS[args.command](args)
    except UsageError as exc:
        return _fail(str(exc))
    except json.JSONDecodeError as exc:
        return _fail(f"{source}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    except SchemaError as exc:
        return _fail(f"{source}: {exc}")
    except OSError as exc:
        return _fail(f"{exc.filename or source}: {exc.strerror or exc}")
    except LipsplineError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
