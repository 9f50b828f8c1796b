"""
Experiment drivers built on the spline and network algebra.

* Sawtooth functions F_m = s_m o ... o s_1 with s_k(x) = |x| - 2^-k, their
  second-order total variation and a deep spline net realising them.
* The one-hidden-layer TV2 bound: sampled constrained nets never have more
  second-order variation than their activation.
* The unit-piece campaign: sampled ReLU / leaky CPWL nets under p-norm
  constraints have at most one affine piece whose Jacobian has norm one.

Every trial draws from numpy.random.default_rng([seed, trial]), so reports do
not depend on the worker count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Optional, Sequence, Union

import numpy as np

from core import config
from core.cpwl1d import LinearSpline1D, compose, evaluate, tv2
from core.decompose import ChainReport, CompositionChain, decompose, verify_chain
from core.errors import EnumerationBudgetError, ExperimentError
from core.lattice import dual_index, format_norm_index, holder_witness, parse_norm_index, pnorm
from core.lipnet import (
    ConstrainedNet,
    ConstraintSpec,
    Layer,
    LeakyCPWL,
    ReLU,
    SplinePerNeuron,
    enumerate_regions,
    project_pnorm,
    restrict_to_line,
    unit_norm_pieces,
)
from utils.helpers import run_trials

MIN_KNOT_GAP = 1e-3


# ============================================================
# SAWTOOTH
# ============================================================

def sawtooth_factor(k: int) -> LinearSpline1D:
    """s_k(x) = |x| - 2^-k."""
    return LinearSpline1D(np.array([0.0]), np.array([-(2.0 ** -k)]), -1.0, 1.0)


def _depth_budget() -> int:
    return min(config.MAX_SAWTOOTH_DEPTH, config.SAWTOOTH_DEPTH_LIMIT)


def build_sawtooth(m: int) -> LinearSpline1D:
    """F_m with 2^m regions of alternating slope +-1."""
    m = int(m)
    if m < 1:
        raise ExperimentError("sawtooth depth must be at least 1")
    if m > _depth_budget():
        raise ExperimentError(
            f"depth budget: {m} exceeds the maximum of {_depth_budget()}"
        )
    result = sawtooth_factor(1)
    for k in range(2, m + 1):
        result = compose(sawtooth_factor(k), result)
    return result


def expected_sawtooth_tv2(m: int) -> float:
    return float(2 * (2 ** int(m) - 1))


@dataclass(frozen=True, eq=False)
class SawtoothSpec:
    depth: int
    direction: np.ndarray
    p: float = 2.0

    def __post_init__(self) -> None:
        if int(self.depth) < 1:
            raise ExperimentError("sawtooth depth must be at least 1")
        u = np.array(self.direction, dtype=float).reshape(-1)
        if u.size == 0 or not np.all(np.isfinite(u)) or not np.any(u):
            raise ExperimentError("sawtooth direction must be a finite non-zero vector")
        u.setflags(write=False)
        object.__setattr__(self, "depth", int(self.depth))
        object.__setattr__(self, "direction", u)
        object.__setattr__(self, "p", parse_norm_index(self.p))


def build_sawtooth_net(spec: SawtoothSpec) -> ConstrainedNet:
    """Width-one deep spline net with net(t * u) = F_K(||u||_p * t).

    The first-layer row is the unit q-norm Hölder dual of u, so every layer
    satisfies the p-norm constraint.
    """
    if spec.depth > _depth_budget():
        raise ExperimentError(
            f"depth budget: {spec.depth} exceeds the maximum of {_depth_budget()}"
        )
    u = spec.direction
    dual = holder_witness(np.zeros_like(u), u, spec.p)
    row = dual / pnorm(dual, dual_index(spec.p))

    layers = [Layer(row.reshape(1, -1), np.zeros(1), SplinePerNeuron((sawtooth_factor(1),)))]
    for k in range(2, spec.depth + 1):
        layers.append(Layer(np.eye(1), np.zeros(1), SplinePerNeuron((sawtooth_factor(k),))))
    layers.append(Layer(np.eye(1), np.zeros(1), None))
    return ConstrainedNet(tuple(layers), ConstraintSpec.pnorm(spec.p))


def sawtooth_restriction(spec: SawtoothSpec) -> LinearSpline1D:
    """Exact spline t -> net(t * u) of the sawtooth net."""
    return restrict_to_line(build_sawtooth_net(spec), spec.direction)


def decompose_sawtooth(m: int) -> tuple[CompositionChain, ChainReport]:
    sawtooth = build_sawtooth(m)
    chain = decompose(sawtooth)
    return chain, verify_chain(sawtooth, chain)


# ============================================================
# RANDOM GENERATORS
# ============================================================

def random_lipschitz_spline(
    rng: np.random.Generator,
    max_knots: Optional[int] = None,
    unit_slopes: bool = False,
) -> LinearSpline1D:
    """Random 1-Lipschitz spline with up to ``max_knots`` knots.

    Knots are sorted standard normals at least MIN_KNOT_GAP apart; slopes are
    normals clipped to [-1, 1], or random signs when ``unit_slopes`` is set.
    """
    max_knots = config.MAX_SPLINE_KNOTS if max_knots is None else int(max_knots)
    n = int(rng.integers(0, max_knots + 1))
    knots = np.sort(rng.standard_normal(n))
    for i in range(1, n):
        knots[i] = max(knots[i], knots[i - 1] + MIN_KNOT_GAP)
    if unit_slopes:
        slopes = rng.choice(np.array([-1.0, 1.0]), size=n + 1)
    else:
        slopes = np.clip(rng.standard_normal(n + 1), -1.0, 1.0)
    return LinearSpline1D.from_slopes(knots, slopes, float(rng.standard_normal()))


def _random_leaky(rng: np.random.Generator) -> LeakyCPWL:
    lower = float(rng.uniform(-1.0, 0.0))
    return LeakyCPWL(
        c=float(rng.uniform(0.0, 0.9)),
        lower=lower,
        upper=lower + float(rng.uniform(0.1, 2.0)),
        shift=float(rng.uniform(-0.5, 0.5)),
    )


def random_constrained_net(
    rng: np.random.Generator,
    input_dim: int,
    widths: Sequence[int],
    activation: str = "relu",
    p: Union[float, str] = 2.0,
) -> ConstrainedNet:
    """Random net whose weights are projected onto the p-norm ball."""
    p = parse_norm_index(p)
    layers = []
    previous = int(input_dim)
    for width in widths:
        weight = project_pnorm(rng.standard_normal((int(width), previous)), p)
        bias = rng.uniform(-1.0, 1.0, int(width))
        if activation == "relu":
            act = ReLU()
        elif activation == "leaky":
            act = _random_leaky(rng)
        else:
            raise ExperimentError(f"unknown activation family {activation!r}")
        layers.append(Layer(weight, bias, act))
        previous = int(width)
    weight = project_pnorm(rng.standard_normal((1, previous)), p)
    layers.append(Layer(weight, rng.uniform(-1.0, 1.0, 1), None))
    return ConstrainedNet(tuple(layers), ConstraintSpec.pnorm(p))


def one_hidden_layer_net(
    sigma: LinearSpline1D,
    inner: Sequence[float],
    bias: Sequence[float],
    outer: Sequence[float],
    p: Union[float, str] = 2.0,
) -> ConstrainedNet:
    """x -> sum_i outer_i sigma(inner_i x + bias_i) on R."""
    inner = np.asarray(inner, dtype=float).reshape(-1, 1)
    width = inner.shape[0]
    layers = (
        Layer(inner, np.asarray(bias, dtype=float), SplinePerNeuron((sigma,) * width)),
        Layer(np.asarray(outer, dtype=float).reshape(1, -1), np.zeros(1), None),
    )
    return ConstrainedNet(layers, ConstraintSpec.pnorm(p))


def abs_fit_error(f: LinearSpline1D) -> float:
    """Sup distance to |x| on [-1, 1] after the best constant shift."""
    inside = f.knots[(f.knots > -1.0) & (f.knots < 1.0)]
    grid = np.unique(np.concatenate((inside, [-1.0, 0.0, 1.0])))
    residual = evaluate(f, grid) - np.abs(grid)
    return float(0.5 * (np.max(residual) - np.min(residual)))


def abs_spline_net() -> ConstrainedNet:
    """Single-neuron deep spline net computing |x| exactly."""
    absolute = LinearSpline1D(np.array([0.0]), np.array([0.0]), -1.0, 1.0)
    layers = (
        Layer(np.eye(1), np.zeros(1), SplinePerNeuron((absolute,))),
        Layer(np.eye(1), np.zeros(1), None),
    )
    return ConstrainedNet(layers, ConstraintSpec.spectral())


# ============================================================
# TV2 BOUND FOR ONE HIDDEN LAYER
# ============================================================

@dataclass(frozen=True)
class Tv2BoundReport:
    p: float
    trials: int
    seed: int
    activation: str
    max_ratio: float
    mean_ratio: float
    violations: int
    equality_ratio: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": format_norm_index(self.p),
            "trials": self.trials,
            "seed": self.seed,
            "activation": self.activation,
            "max_ratio": self.max_ratio,
            "mean_ratio": self.mean_ratio,
            "violations": self.violations,
            "equality_ratio": self.equality_ratio,
            "passed": self.passed,
        }


def _tv2_trial(p: float, seed: int, activation: str, index: int) -> tuple[float, bool]:
    rng = np.random.default_rng([seed, index])
    width = int(rng.integers(1, config.MAX_HIDDEN_WIDTH + 1))
    if activation == "relu":
        sigma = ReLU().neuron_splines(1)[0]
    else:
        sigma = random_lipschitz_spline(rng)
    inner = project_pnorm(rng.standard_normal((width, 1)), p)[:, 0]
    outer = project_pnorm(rng.standard_normal((1, width)), p)[0]
    bias = rng.uniform(-2.0, 2.0, width)
    f = restrict_to_line(one_hidden_layer_net(sigma, inner, bias, outer, p), [1.0])

    f_tv2, sigma_tv2 = tv2(f), tv2(sigma)
    violated = f_tv2 > sigma_tv2 + config.CONSTRAINT_TOLERANCE
    if sigma_tv2 == 0.0:
        return (0.0 if not violated else math.inf), violated
    return f_tv2 / sigma_tv2, violated


def tv2_bound_experiment(
    p: Union[float, str],
    trials: int,
    seed: int = 0,
    activation: str = "random",
    workers: Optional[int] = None,
) -> Tv2BoundReport:
    """Sample one-hidden-layer constrained nets and compare TV2(f) with TV2(sigma)."""
    p = parse_norm_index(p)
    if activation not in ("random", "relu"):
        raise ExperimentError(f"unknown activation family {activation!r}")
    trials = int(trials)
    results = run_trials(
        lambda index: _tv2_trial(p, seed, activation, index),
        trials,
        workers,
    )
    ratios = np.array([ratio for ratio, _ in results]) if results else np.zeros(1)
    violations = sum(1 for _, violated in results if violated)

    relu = ReLU().neuron_splines(1)[0]
    equality = restrict_to_line(one_hidden_layer_net(relu, [1.0], [0.0], [1.0], p), [1.0])
    report = Tv2BoundReport(
        p=p,
        trials=trials,
        seed=int(seed),
        activation=activation,
        max_ratio=float(np.max(ratios)),
        mean_ratio=float(np.mean(ratios)),
        violations=violations,
        equality_ratio=tv2(equality) / tv2(relu),
    )
    if violations:
        logging.warning("TV2 bound violated in %d of %d trials", violations, trials)
    logging.info(
        "TV2 bound p=%s: max ratio %.6f over %d trials",
        format_norm_index(p),
        report.max_ratio,
        trials,
    )
    return report


# ============================================================
# UNIT-PIECE CAMPAIGN
# ============================================================

@dataclass(frozen=True)
class UnitPieceReport:
    p: float
    trials: int
    seed: int
    width_budget: int
    depth_budget: int
    completed: int
    skipped: int
    violations: int
    max_unit_pieces: int
    line_tv2_max: Optional[float]
    line_tv2_exceedances: int
    relu_abs_error: Optional[float]
    spline_abs_error: float
    relu_nets_fitted: int

    @property
    def partial(self) -> bool:
        return self.skipped > 0

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.line_tv2_exceedances == 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": format_norm_index(self.p),
            "trials": self.trials,
            "seed": self.seed,
            "width_budget": self.width_budget,
            "depth_budget": self.depth_budget,
            "completed": self.completed,
            "skipped": self.skipped,
            "partial": self.partial,
            "violations": self.violations,
            "max_unit_pieces": self.max_unit_pieces,
            "line_tv2_max": self.line_tv2_max,
            "line_tv2_exceedances": self.line_tv2_exceedances,
            "relu_abs_error": self.relu_abs_error,
            "spline_abs_error": self.spline_abs_error,
            "relu_nets_fitted": self.relu_nets_fitted,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class _UnitTrial:
    unit_pieces: Optional[int]
    abs_error: Optional[float]
    line_tv2: Optional[float]


def _unit_piece_trial(
    p: float, seed: int, width_budget: int, depth_budget: int, index: int
) -> _UnitTrial:
    rng = np.random.default_rng([seed, index])
    input_dim = int(rng.integers(1, 3))
    depth = int(rng.integers(1, depth_budget + 1))
    widths = rng.integers(1, width_budget + 1, size=depth).tolist()
    activation = "relu" if rng.random() < 0.5 else "leaky"
    net = random_constrained_net(rng, input_dim, widths, activation, p)

    try:
        report = enumerate_regions(net, p)
        count: Optional[int] = unit_norm_pieces(report)
    except EnumerationBudgetError:
        logging.info("Trial %d skipped: net too large for enumeration", index)
        count = None
    if count is not None and count > 1:
        logging.warning("Trial %d: %d unit-norm pieces (widths %s)", index, count, widths)

    abs_error = None
    line = None
    if activation == "relu":
        if input_dim == 1:
            abs_error = abs_fit_error(restrict_to_line(net, [1.0]))
        if math.isinf(p):
            direction = rng.uniform(-1.0, 1.0, input_dim)
            direction /= np.max(np.abs(direction))
            line = tv2(restrict_to_line(net, direction))
    return _UnitTrial(count, abs_error, line)


def unit_piece_campaign(
    p: Union[float, str],
    trials: int,
    seed: int = 0,
    width_budget: int = 4,
    depth_budget: int = 3,
    workers: Optional[int] = None,
) -> UnitPieceReport:
    """Count unit-norm affine pieces of sampled constrained ReLU / leaky nets.

    Only p > 1 is admissible. Also records how well the sampled
    one-dimensional ReLU nets fit |x| on [-1, 1] next to the exact spline net,
    and for p = inf the largest TV2 of a restriction to a line.
    """
    p = parse_norm_index(p)
    if p <= 1.0:
        raise ExperimentError("the unit-piece campaign needs p > 1")
    trials = int(trials)
    results: list[_UnitTrial] = run_trials(
        lambda index: _unit_piece_trial(p, seed, width_budget, depth_budget, index),
        trials,
        workers,
    )

    counts = [r.unit_pieces for r in results if r.unit_pieces is not None]
    errors = [r.abs_error for r in results if r.abs_error is not None]
    lines = [r.line_tv2 for r in results if r.line_tv2 is not None]
    line_limit = 2.0 + config.CONSTRAINT_TOLERANCE

    spline_f = restrict_to_line(abs_spline_net(), [1.0])
    report = UnitPieceReport(
        p=p,
        trials=trials,
        seed=int(seed),
        width_budget=int(width_budget),
        depth_budget=int(depth_budget),
        completed=len(counts),
        skipped=trials - len(counts),
        violations=sum(1 for c in counts if c > 1),
        max_unit_pieces=max(counts) if counts else 0,
        line_tv2_max=max(lines) if lines else None,
        line_tv2_exceedances=sum(1 for v in lines if v > line_limit),
        relu_abs_error=min(errors) if errors else None,
        spline_abs_error=abs_fit_error(spline_f),
        relu_nets_fitted=len(errors),
    )
    if report.partial:
        logging.warning("Unit-piece campaign is partial: %d trials skipped", report.skipped)
    logging.info(
        "Unit-piece campaign p=%s: %d/%d trials, %d violations",
        format_norm_index(p),
        report.completed,
        trials,
        report.violations,
    )
    return report
