"""
Subcommand handlers for the lipspline command line.

Every handler takes the parsed arguments and returns an exit code:
0 when all checked invariants held, 2 when a check found a violation.
Input, schema and usage problems raise and are mapped to 1 by main.py.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from typing import Any, Callable, Optional

import numpy as np

from cli.tables import print_summary
from core import config
from core.analysis import (
    SawtoothSpec,
    build_sawtooth,
    build_sawtooth_net,
    expected_sawtooth_tv2,
    sawtooth_restriction,
    tv2_bound_experiment,
    unit_piece_campaign,
)
from core.cpwl1d import (
    LinearSpline1D,
    evaluate,
    evaluation_grid,
    lipschitz,
    slope_profile,
    tv2,
)
from core.decompose import CompositionChain, decompose, verify_chain
from core.errors import EnumerationBudgetError, SchemaError
from core.lattice import (
    InterpolationProblem,
    LatticeCPWL,
    build_interpolant,
    evaluate_lattice,
    lattice_to_relu_net,
    format_norm_index,
    parse_norm_index,
    pnorm,
)
from core.lipnet import (
    ConstrainedNet,
    check_constraints,
    enumerate_regions,
    forward,
    unit_norm_pieces,
)
from utils.helpers import (
    detect_schema,
    envelope,
    expect_schema,
    log_report_summary,
    read_json,
    write_csv_grid,
    write_json,
)

EXPORT_CHECK_POINTS = 1000


class UsageError(Exception):
    """Raised by the argument parser instead of exiting with status 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


# ============================================================
# OUTPUT
# ============================================================

def _emit(args: argparse.Namespace, schema: str, payload: dict[str, Any], quiet: bool = False) -> None:
    """Write a document to --out, or to stdout unless ``quiet``."""
    document = envelope(schema, payload, args.seed)
    text = write_json(args.out, document)
    if not args.out and not quiet:
        sys.stdout.write(text)


def _spline_csv(args: argparse.Namespace, f: LinearSpline1D) -> None:
    if not args.csv:
        return
    grid = evaluation_grid(f)
    write_csv_grid(args.csv, ["x", "f"], [grid, evaluate(f, grid)])


def _no_grid(args: argparse.Namespace) -> None:
    if args.csv:
        logging.warning("--csv ignored: %s produces no grid", args.command)


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise UsageError(f"--x: cannot parse {text!r} as numbers") from exc


def _load_spline(path: str) -> LinearSpline1D:
    data = read_json(path)
    expect_schema(data, "spline.v1")
    return LinearSpline1D.from_dict(data)


# ============================================================
# LATTICE
# ============================================================

def cmd_interpolate(args: argparse.Namespace) -> int:
    data = read_json(args.input)
    expect_schema(data, "points.v1")
    problem = InterpolationProblem.from_dict(data)
    if args.p is not None:
        problem = InterpolationProblem(problem.points, problem.values, parse_norm_index(args.p))
    lattice = build_interpolant(problem)

    residual = float(np.max(np.abs(evaluate_lattice(lattice, problem.points) - problem.values)))
    scale = max(1.0, float(np.max(np.abs(problem.values))))
    _emit(args, "lattice.v1", lattice.to_dict())
    _no_grid(args)
    logging.info(
        "Interpolant: %d groups, %d pieces, L=%.6g, max residual %.3g",
        len(lattice.groups),
        lattice.piece_count,
        problem.lipschitz_constant,
        residual,
    )
    if residual > config.CLASSIFICATION_TOLERANCE * scale:
        logging.error("Interpolant misses the data by %.3g", residual)
        return 2
    return 0


def _export_deviation(lattice: LatticeCPWL, net: ConstrainedNet, seed: int) -> float:
    """Relative max deviation between net and lattice on seeded random points."""
    rng = np.random.default_rng(seed)
    points = 3.0 * rng.standard_normal((EXPORT_CHECK_POINTS, lattice.dimension))
    expected = evaluate_lattice(lattice, points)
    got = forward(net, points)[:, 0]
    return float(np.max(np.abs(got - expected))) / max(1.0, float(np.max(np.abs(expected))))


def cmd_to_relu(args: argparse.Namespace) -> int:
    data = read_json(args.input)
    expect_schema(data, "lattice.v1")
    lattice = LatticeCPWL.from_dict(data)
    net = lattice_to_relu_net(lattice)
    error = _export_deviation(lattice, net, args.seed)
    _emit(args, "net.v1", net.to_dict())
    _no_grid(args)
    logging.info("Exported %d layers, max deviation %.3g", len(net.layers), error)
    if error > config.CLASSIFICATION_TOLERANCE:
        logging.error("Exported net deviates from the lattice by %.3g", error)
        return 2
    return 0


# ============================================================
# DECOMPOSITION
# ============================================================

def cmd_decompose(args: argparse.Namespace) -> int:
    g = _load_spline(args.input)
    chain = decompose(g, compact=not args.no_compact)
    report = verify_chain(g, chain)
    payload = chain.to_dict()
    payload["report"] = report.to_dict()
    _emit(args, "chain.v1", payload)
    _spline_csv(args, g)
    print_summary("decompose", {"factors": len(chain), **report.to_dict()})
    return 0 if report.passed else 2


# ============================================================
# NETWORKS
# ============================================================

def _unit_piece_hypotheses(net: ConstrainedNet) -> bool:
    """Scalar output, p-norm constraint with p > 1 and ReLU-like activations."""
    if net.output_dim != 1 or net.constraint.kind != "pnorm":
        return False
    if net.constraint.norm_index <= 1.0:
        return False
    return all(
        layer.activation is None or layer.activation.kind in ("relu", "leaky_cpwl")
        for layer in net.layers
    )


def cmd_verify(args: argparse.Namespace) -> int:
    data = read_json(args.input)
    expect_schema(data, "net.v1")
    net = ConstrainedNet.from_dict(data)
    constraints = check_constraints(net)
    p = net.constraint.norm_index

    regions: Optional[dict[str, Any]] = None
    unit_pieces: Optional[int] = None
    try:
        report = enumerate_regions(net, p)
        regions = report.to_dict()
        unit_pieces = unit_norm_pieces(report)
    except EnumerationBudgetError as exc:
        logging.warning("Region enumeration skipped: %s", exc)

    hypotheses = _unit_piece_hypotheses(net) and constraints.passed
    unit_violation = hypotheses and unit_pieces is not None and unit_pieces > 1
    payload = {
        "kind": "verify",
        "constraints": constraints.to_dict(),
        "regions": regions,
        "unit_norm_pieces": unit_pieces,
        "unit_piece_hypotheses": hypotheses,
        "passed": constraints.passed and not unit_violation,
    }
    _emit(args, "report.v1", payload)
    _no_grid(args)
    print_summary(
        "verify",
        {
            "constraint": net.constraint.kind,
            "p": format_norm_index(p),
            "lipschitz_bound": constraints.lipschitz_bound,
            "constraints_passed": constraints.passed,
            "unit_norm_pieces": unit_pieces,
        },
    )
    if unit_violation:
        logging.error("Net has %d affine pieces with unit Jacobian norm", unit_pieces)
    return 0 if payload["passed"] else 2


# ============================================================
# EXPERIMENTS
# ============================================================

def cmd_sawtooth(args: argparse.Namespace) -> int:
    depth = args.depth
    sawtooth = build_sawtooth(depth)
    dim = args.dim
    if args.u:
        direction = _parse_point(args.u)
        if direction.size != dim:
            if args.dim_given:
                raise UsageError(f"--u has {direction.size} entries but --dim is {dim}")
            dim = direction.size
    else:
        direction = np.eye(dim)[0]
    spec = SawtoothSpec(depth, direction, args.p)
    net = build_sawtooth_net(spec)
    restriction = sawtooth_restriction(spec)
    constraints = check_constraints(net)

    expected = expected_sawtooth_tv2(depth)
    observed = tv2(sawtooth)
    scale = pnorm(spec.direction, spec.p)
    restriction_tv2 = tv2(restriction)
    restriction_ok = abs(restriction_tv2 - scale * expected) <= config.GRID_ERROR_TOLERANCE * max(
        1.0, scale * expected
    )
    passed = observed == expected and restriction_ok and constraints.passed

    if args.net_out:
        write_json(args.net_out, envelope("net.v1", net.to_dict(), args.seed))
    payload = {
        "kind": "sawtooth",
        "depth": depth,
        "dim": dim,
        "p": format_norm_index(spec.p),
        "direction": spec.direction.tolist(),
        "regions": sawtooth.region_count,
        "tv2": observed,
        "expected_tv2": expected,
        "restriction_tv2": restriction_tv2,
        "constraints_passed": constraints.passed,
        "spline": sawtooth.to_dict(),
        "passed": passed,
    }
    _emit(args, "report.v1", payload, quiet=args.emit_tv2)
    if args.emit_tv2:
        sys.stdout.write(f"{observed:.17g}\n")
    _spline_csv(args, sawtooth)
    print_summary("sawtooth", payload)
    return 0 if passed else 2


def cmd_tv2(args: argparse.Namespace) -> int:
    f = _load_spline(args.input)
    profile = slope_profile(f)
    payload = {
        "kind": "tv2",
        "tv2": tv2(f),
        "lipschitz": lipschitz(f),
        "region_count": profile.region_count,
        "slopes": list(profile.slopes),
        "breakpoints": list(profile.breakpoints),
    }
    _emit(args, "report.v1", payload)
    _spline_csv(args, f)
    log_report_summary("tv2", payload)
    return 0


def cmd_tv2_bound(args: argparse.Namespace) -> int:
    report = tv2_bound_experiment(
        args.p, args.trials, args.seed, activation=args.activation, workers=args.workers
    )
    payload = {"kind": "tv2-bound", **report.to_dict()}
    _emit(args, "report.v1", payload)
    _no_grid(args)
    print_summary("tv2-bound", payload)
    return 0 if report.passed else 2


def cmd_unit_pieces(args: argparse.Namespace) -> int:
    report = unit_piece_campaign(
        args.p,
        args.trials,
        args.seed,
        width_budget=args.width_budget,
        depth_budget=args.depth_budget,
        workers=args.workers,
    )
    payload = {"kind": "unit-pieces", **report.to_dict()}
    _emit(args, "report.v1", payload)
    _no_grid(args)
    print_summary("unit-pieces", payload)
    return 0 if report.passed else 2


# ============================================================
# EVALUATION
# ============================================================

def cmd_eval(args: argparse.Namespace) -> int:
    data = read_json(args.input)
    schema = detect_schema(data)
    points = [_parse_point(text) for text in args.x]

    if schema in ("spline.v1", "chain.v1"):
        fn: Callable[[np.ndarray], Any]
        if schema == "spline.v1":
            spline = LinearSpline1D.from_dict(data)
            fn = lambda x: evaluate(spline, float(x[0]))  # noqa: E731
        else:
            chain = CompositionChain.from_dict(data)
            fn = lambda x: float(chain.evaluate(float(x[0])))  # noqa: E731
        dimension = 1
    elif schema == "lattice.v1":
        lattice = LatticeCPWL.from_dict(data)
        fn = lambda x: evaluate_lattice(lattice, x)  # noqa: E731
        dimension = lattice.dimension
    elif schema == "net.v1":
        net = ConstrainedNet.from_dict(data)
        fn = lambda x: forward(net, x).tolist()  # noqa: E731
        dimension = net.input_dim
    else:
        raise SchemaError("schema", f"{schema} documents cannot be evaluated")

    for point in points:
        if point.size != dimension:
            raise UsageError(f"--x: expected {dimension} coordinates, got {point.size}")
    values = [fn(point) for point in points]

    for value in values:
        if isinstance(value, list):
            sys.stdout.write(",".join(f"{v:.17g}" for v in value) + "\n")
        else:
            sys.stdout.write(f"{value:.17g}\n")
    if args.out:
        _emit(
            args,
            "report.v1",
            {
                "kind": "eval",
                "input_schema": schema,
                "points": [point.tolist() for point in points],
                "values": values,
            },
        )
    if args.csv:
        columns = [[point[k] for point in points] for k in range(dimension)]
        if values and isinstance(values[0], list) and len(values[0]) > 1:
            outputs = [[value[j] for value in values] for j in range(len(values[0]))]
            names = [f"value{j}" for j in range(len(outputs))]
        else:
            outputs = [[value[0] if isinstance(value, list) else value for value in values]]
            names = ["value"]
        header = [f"x{k}" for k in range(dimension)] + names
        write_csv_grid(args.csv, header, columns + outputs)
    return 0


# ============================================================
# PARSER
# ============================================================

HANDLERS: dict[str, Callable[[argparse.Namespace], int]] = {
    "interpolate": cmd_interpolate,
    "to-relu": cmd_to_relu,
    "decompose": cmd_decompose,
    "verify": cmd_verify,
    "sawtooth": cmd_sawtooth,
    "tv2": cmd_tv2,
    "tv2-bound": cmd_tv2_bound,
    "prop31": cmd_unit_pieces,
    "unit-pieces": cmd_unit_pieces,
    "eval": cmd_eval,
}


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not math.isfinite(value) or value <= 0.0:
        raise argparse.ArgumentTypeError("tolerances must be positive")
    return value


def _shared_flags() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    shared.add_argument("--config", default=None, help="INI configuration file")
    shared.add_argument("--log-level", default=None, help="override [logging] level")
    shared.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    shared.add_argument("--out", default=None, help="write the JSON document here")
    shared.add_argument("--csv", default=None, help="write a CSV grid here")
    shared.add_argument("--grid-points", type=int, default=None, help="grid oracle density")
    shared.add_argument("--tol-grid", type=_positive_float, default=None)
    shared.add_argument("--tol-unit-norm", type=_positive_float, default=None)
    return shared


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_flags()
    parser = _Parser(
        prog="lipspline",
        description="CPWL spline algebra and Lipschitz-constrained networks",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    cmd = sub.add_parser("interpolate", parents=[shared], help="Lipschitz-optimal interpolant")
    cmd.add_argument("--in", dest="input", required=True, help="points.v1 document")
    cmd.add_argument("--p", default=None, help="norm index, overrides the document")

    cmd = sub.add_parser("to-relu", parents=[shared], help="export a lattice as a ReLU net")
    cmd.add_argument("--in", dest="input", required=True, help="lattice.v1 document")

    cmd = sub.add_parser("decompose", parents=[shared], help="split a 1-Lipschitz spline")
    cmd.add_argument("--in", dest="input", required=True, help="spline.v1 document")
    cmd.add_argument("--no-compact", action="store_true", help="skip factor merging")

    cmd = sub.add_parser("verify", parents=[shared], help="check a constrained net")
    cmd.add_argument("--in", dest="input", required=True, help="net.v1 document")

    cmd = sub.add_parser("sawtooth", parents=[shared], help="sawtooth function and net")
    cmd.add_argument("--depth", type=int, required=True)
    cmd.add_argument("--dim", type=int, default=None)
    cmd.add_argument("--u", default=None, help="direction, comma separated")
    cmd.add_argument("--p", default="2")
    cmd.add_argument("--emit-tv2", action="store_true", help="print only TV2 on stdout")
    cmd.add_argument("--net-out", default=None, help="write the net.v1 document here")

    cmd = sub.add_parser("tv2", parents=[shared], help="second-order total variation")
    cmd.add_argument("--in", dest="input", required=True, help="spline.v1 document")

    cmd = sub.add_parser("tv2-bound", parents=[shared], help="one-hidden-layer TV2 bound")
    cmd.add_argument("--p", default="2")
    cmd.add_argument("--trials", type=int, default=1000)
    cmd.add_argument("--activation", choices=("random", "relu"), default="random")
    cmd.add_argument("--workers", type=int, default=None)

    cmd = sub.add_parser(
        "prop31",
        aliases=["unit-pieces"],
        parents=[shared],
        help="unit-Jacobian piece campaign",
    )
    cmd.add_argument("--p", default="2")
    cmd.add_argument("--trials", type=int, default=100)
    cmd.add_argument("--width-budget", type=int, default=4)
    cmd.add_argument("--depth-budget", type=int, default=3)
    cmd.add_argument("--workers", type=int, default=None)

    cmd = sub.add_parser("eval", parents=[shared], help="evaluate a stored function")
    cmd.add_argument("--in", dest="input", required=True)
    cmd.add_argument("--x", action="append", required=True, help="point, comma separated")
    return parser


def apply_overrides(args: argparse.Namespace) -> None:
    """Write CLI tolerance overrides into the config globals."""
    if args.grid_points is not None:
        if args.grid_points < 2:
            raise UsageError("--grid-points must be at least 2")
        config.GRID_POINTS = args.grid_points
    if args.tol_grid is not None:
        config.GRID_ERROR_TOLERANCE = args.tol_grid
    if args.tol_unit_norm is not None:
        config.UNIT_NORM_TOLERANCE = args.tol_unit_norm
    if args.command == "sawtooth":
        args.dim_given = args.dim is not None
        if args.dim is None:
            args.dim = 1
        if args.dim < 1:
            raise UsageError("--dim must be at least 1")
