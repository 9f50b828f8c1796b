"""
Factorisation of 1-Lipschitz scalar splines into 3-region factors.

Any 1-Lipschitz LinearSpline1D g is written as g = g_n o ... o g_1 where every
g_i is 1-Lipschitz with at most three linear regions. Outer slopes are first
normalised to magnitude one by an input reparametrisation; the normalised
core is then reduced recursively through three cases:

* Case 1: an interior knot is a one-sided extremum. Split g into two factors
  with fewer regions each.
* Case 2: both outer slopes agree. Reflect the knot range so that Case 1
  applies, paying one 3-region factor.
* Case 3: outer slopes disagree. Reflect at the global extremum, reducing to
  Case 1 or Case 2 and paying one 2-region factor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Optional, Sequence, Union

import numpy as np

from core import config
from core.cpwl1d import (
    LinearSpline1D,
    compose,
    evaluate,
    evaluation_grid,
    lipschitz,
    negate,
    simplify,
    splice,
)
from core.errors import DecompositionError, SchemaError

MAX_STALLED_STEPS = 2


@dataclass(frozen=True, eq=False)
class CompositionChain:
    """Factors applied first to last: g = factors[-1] o ... o factors[0]."""

    factors: tuple[LinearSpline1D, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "factors", tuple(self.factors))

    def __len__(self) -> int:
        return len(self.factors)

    def __iter__(self):
        return iter(self.factors)

    def evaluate(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Apply the factors one after the other."""
        out = x
        for factor in self.factors:
            out = evaluate(factor, out)
        if not self.factors:
            return evaluate(LinearSpline1D.identity(), x)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"factors": [factor.to_dict() for factor in self.factors]}

    @classmethod
    def from_dict(cls, data: Any) -> "CompositionChain":
        if not isinstance(data, dict) or not isinstance(data.get("factors"), list):
            raise SchemaError("factors", "expected a list of splines")
        return cls(
            tuple(
                LinearSpline1D.from_dict(raw, f"factors[{i}]")
                for i, raw in enumerate(data["factors"])
            )
        )


@dataclass(frozen=True)
class CaseTag:
    """Outcome of the case analysis on a normalised spline."""

    kind: str
    knot_index: Optional[int] = None
    extremum: Optional[str] = None
    side: Optional[str] = None


UP_TO_THREE = CaseTag("up_to_three")
CASE_2 = CaseTag("case2")
CASE_3 = CaseTag("case3")


def compose_chain(chain: Union[CompositionChain, Sequence[LinearSpline1D]]) -> LinearSpline1D:
    """Exact spline of the whole chain."""
    result = LinearSpline1D.identity()
    for factor in chain:
        result = compose(factor, result)
    return result


def _check_one_lipschitz(g: LinearSpline1D) -> None:
    if lipschitz(snap_to_one_lipschitz(g)) > 1.0 + config.LIPSCHITZ_TOLERANCE:
        raise DecompositionError("not 1-Lipschitz")


def _is_unit(slope: float) -> bool:
    return abs(abs(slope) - 1.0) <= config.CLASSIFICATION_TOLERANCE


def snap_to_one_lipschitz(f: LinearSpline1D) -> LinearSpline1D:
    """Nudge knot values so that rounding never lifts a slope above 1.

    Interior slopes are recomputed from values, so a factor that is
    1-Lipschitz in exact arithmetic can read as 1 + 1e-8 near large values and
    close knots. Only excesses within a few ulps of the operands are removed;
    genuinely steeper regions are left for the Lipschitz check.
    """
    left = _clip_unit(f.left_slope)
    right = _clip_unit(f.right_slope)
    if f.is_affine:
        return f if left == f.left_slope else LinearSpline1D.affine(left, f.value_at_zero)

    knots = f.knots
    values = f.values.copy()
    gaps = np.diff(knots)
    eps = np.finfo(float).eps
    nudged = 0
    for i in range(gaps.size):
        delta = values[i + 1] - values[i]
        excess = abs(delta) - gaps[i]
        if excess <= 0.0:
            continue
        scale = max(abs(values[i]), abs(values[i + 1]), abs(knots[i]), abs(knots[i + 1]), 1.0)
        if excess > max(config.CLASSIFICATION_TOLERANCE * gaps[i], 16.0 * eps * scale):
            continue
        target = values[i] + np.copysign(gaps[i], delta)
        while abs(target - values[i]) > gaps[i]:
            target = np.nextafter(target, values[i])
        values[i + 1] = target
        nudged += 1

    if not nudged and left == f.left_slope and right == f.right_slope:
        return f
    if nudged:
        logging.debug("Snapped %d slopes to magnitude 1", nudged)
    return LinearSpline1D(knots, values, left, right)


def _clip_unit(slope: float) -> float:
    if 1.0 < abs(slope) <= 1.0 + config.CLASSIFICATION_TOLERANCE:
        return float(np.copysign(1.0, slope))
    return float(slope)


def _sign_or_up(slope: float, fallback: float) -> float:
    if slope > 0.0:
        return 1.0
    if slope < 0.0:
        return -1.0
    return 1.0 if fallback >= 0.0 else -1.0


def normalize_outer_slopes(g: LinearSpline1D) -> tuple[LinearSpline1D, CompositionChain]:
    """Split g = core o r with |outer slopes of core| = 1.

    The wrapper r is the identity on the knot hull and carries the original
    outer slope magnitudes outside it. It is omitted when it is the identity.
    """
    _check_one_lipschitz(g)
    g = snap_to_one_lipschitz(simplify(g))

    if g.is_affine:
        s = g.left_slope
        if _is_unit(s):
            return g, CompositionChain()
        core = LinearSpline1D.affine(_sign_or_up(s, 1.0), g.value_at_zero)
        return core, CompositionChain((LinearSpline1D.affine(abs(s), 0.0),))

    if _is_unit(g.left_slope) and _is_unit(g.right_slope):
        return g, CompositionChain()

    slopes = g.slopes
    left = _sign_or_up(g.left_slope, slopes[1])
    right = _sign_or_up(g.right_slope, slopes[-2])
    core = LinearSpline1D(g.knots, g.values, left, right)

    hull = np.unique(np.array([g.knots[0], g.knots[-1]]))
    wrapper = simplify(LinearSpline1D(hull, hull, abs(g.left_slope), abs(g.right_slope)))
    logging.debug(
        "Normalised outer slopes (%.6g, %.6g) -> (%.0f, %.0f)",
        g.left_slope,
        g.right_slope,
        left,
        right,
    )
    return core, CompositionChain((wrapper,))


def case_split(g: LinearSpline1D) -> CaseTag:
    """Classify a spline with unit outer slopes.

    The first interior knot (in index order) that is a one-sided extremum
    gives Case 1; otherwise equal outer slopes give Case 2 and opposite ones
    Case 3.
    """
    g = simplify(g)
    if g.region_count <= 3:
        return UP_TO_THREE
    if not (_is_unit(g.left_slope) and _is_unit(g.right_slope)):
        raise DecompositionError("case analysis needs outer slopes of magnitude 1")

    values = g.values
    m = values.size
    tol = config.CLASSIFICATION_TOLERANCE
    for j in range(1, m - 1):
        c = values[j]
        scale = tol * max(1.0, abs(c))
        before, after = values[:j], values[j + 1:]
        if g.left_slope > 0.0 and c >= np.max(before) - scale:
            return CaseTag("case1", j, "max", "left")
        if g.left_slope < 0.0 and c <= np.min(before) + scale:
            return CaseTag("case1", j, "min", "left")
        if g.right_slope < 0.0 and c >= np.max(after) - scale:
            return CaseTag("case1", j, "max", "right")
        if g.right_slope > 0.0 and c <= np.min(after) + scale:
            return CaseTag("case1", j, "min", "right")

    if (g.left_slope > 0.0) == (g.right_slope > 0.0):
        return CASE_2
    return CASE_3


def split_case1(g: LinearSpline1D, tag: CaseTag) -> tuple[LinearSpline1D, LinearSpline1D]:
    """g = g2 o g1 around a one-sided extremum at knot ``tag.knot_index``.

    g1 keeps g on the extremum side and continues with slope s = +-1 on the
    other, so its two sides have disjoint ranges around c = g(a). g2 is the
    identity on the kept range and replays g on the other.
    """
    if tag.kind != "case1" or tag.knot_index is None:
        raise DecompositionError(f"case mismatch: expected case1, got {tag.kind}")
    g = simplify(g)
    a = float(g.knots[tag.knot_index])
    c = float(g.values[tag.knot_index])
    s = 1.0 if (tag.side == "left") == (tag.extremum == "max") else -1.0

    extension = LinearSpline1D.affine(s, c - s * a)
    if tag.side == "left":
        g1 = splice(g, extension, a)
    else:
        g1 = splice(extension, g, a)

    replay = compose(g, LinearSpline1D.affine(s, a - s * c))
    identity = LinearSpline1D.identity()
    if tag.extremum == "max":
        g2 = splice(identity, replay, c)
    else:
        g2 = splice(replay, identity, c)
    return g1, g2


def _mirrored(split, g: LinearSpline1D) -> tuple[LinearSpline1D, LinearSpline1D]:
    """Apply a +1-slope construction to -g and undo the sign on the outer factor."""
    h1, h2 = split(negate(g))
    return h1, negate(h2)


def split_case2(g: LinearSpline1D) -> tuple[LinearSpline1D, LinearSpline1D]:
    """Equal outer slopes: reflect the knot range about g(a_1)."""
    g = simplify(g)
    if not (_is_unit(g.left_slope) and _is_unit(g.right_slope)) or g.left_slope * g.right_slope < 0:
        raise DecompositionError("case mismatch: case2 needs equal unit outer slopes")
    if g.left_slope < 0.0:
        return _mirrored(split_case2, g)

    c1, cm = float(g.values[0]), float(g.values[-1])
    if cm >= c1:
        raise DecompositionError("case mismatch: case2 needs g(a_1) > g(a_m)")
    g1 = LinearSpline1D(g.knots, 2.0 * c1 - g.values, 1.0, 1.0)
    g2 = LinearSpline1D(np.array([c1, 2.0 * c1 - cm]), np.array([c1, cm]), 1.0, 1.0)
    return simplify(g1), g2


def split_case3(g: LinearSpline1D) -> tuple[LinearSpline1D, LinearSpline1D]:
    """Opposite outer slopes: reflect everything right of the global extremum."""
    g = simplify(g)
    if not (_is_unit(g.left_slope) and _is_unit(g.right_slope)) or g.left_slope * g.right_slope > 0:
        raise DecompositionError("case mismatch: case3 needs opposite unit outer slopes")
    if g.left_slope < 0.0:
        return _mirrored(split_case3, g)

    c1, cm = float(g.values[0]), float(g.values[-1])
    tol = config.CLASSIFICATION_TOLERANCE * max(1.0, abs(c1), abs(cm))
    index = 0 if c1 >= cm - tol else g.knots.size - 1
    peak = float(g.values[index])

    reflected = np.where(np.arange(g.knots.size) >= index, 2.0 * peak - g.values, g.values)
    g1 = LinearSpline1D(g.knots, reflected, g.left_slope, -g.right_slope)
    g2 = LinearSpline1D(np.array([peak]), np.array([peak]), 1.0, -1.0)
    return simplify(g1), g2


def _reduce(g: LinearSpline1D, stalls: int = 0) -> list[LinearSpline1D]:
    g = snap_to_one_lipschitz(simplify(g))
    if g.region_count <= 3:
        return [g]
    if stalls > MAX_STALLED_STEPS:
        raise DecompositionError(
            f"reduction stalled at {g.region_count} regions after {stalls} steps"
        )

    def _next_stalls(factor: LinearSpline1D) -> int:
        return stalls + 1 if factor.region_count >= g.region_count else 0

    tag = case_split(g)
    logging.debug(
        "Reducing %d regions: %s (knot=%s, %s %s)",
        g.region_count,
        tag.kind,
        tag.knot_index,
        tag.extremum,
        tag.side,
    )
    if tag.kind == "case1":
        g1, g2 = split_case1(g, tag)
        return _reduce(g1, _next_stalls(g1)) + _reduce(g2, _next_stalls(g2))
    if tag.kind == "case2":
        g1, g2 = split_case2(g)
    else:
        g1, g2 = split_case3(g)
    return _reduce(g1, _next_stalls(g1)) + [snap_to_one_lipschitz(g2)]


def compact_chain(chain: Union[CompositionChain, Sequence[LinearSpline1D]]) -> CompositionChain:
    """Merge neighbouring factors whose composition still has at most 3 regions."""
    merged: list[LinearSpline1D] = []
    for factor in chain:
        if merged:
            candidate = snap_to_one_lipschitz(compose(factor, merged[-1]))
            if candidate.region_count <= 3 and lipschitz(candidate) <= 1.0 + config.LIPSCHITZ_TOLERANCE:
                merged[-1] = candidate
                continue
        merged.append(factor)
    return CompositionChain(tuple(merged))


def length_bound(g: LinearSpline1D) -> int:
    return 2 * simplify(g).region_count + 4


def decompose(g: LinearSpline1D, compact: bool = True) -> CompositionChain:
    """Chain of 1-Lipschitz factors with at most 3 regions composing to g."""
    _check_one_lipschitz(g)
    g = snap_to_one_lipschitz(simplify(g))
    if g.region_count <= 3:
        return CompositionChain((g,))

    core, wrapper = normalize_outer_slopes(g)
    factors = list(wrapper.factors) + _reduce(core)
    chain = compact_chain(factors) if compact else CompositionChain(tuple(factors))

    bound = length_bound(g)
    if len(chain) > bound:
        logging.warning(
            "Chain of %d factors exceeds the advisory bound %d for %d regions",
            len(chain),
            bound,
            g.region_count,
        )
    logging.debug("Decomposed %d regions into %d factors", g.region_count, len(chain))
    return chain


@dataclass(frozen=True)
class ChainReport:
    max_grid_error: float
    outer_slope_error: float
    factor_region_counts: tuple[int, ...]
    factor_lipschitz: tuple[float, ...]
    length: int
    length_bound: int
    unit_slopes: bool
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_grid_error": self.max_grid_error,
            "outer_slope_error": self.outer_slope_error,
            "factor_region_counts": list(self.factor_region_counts),
            "factor_lipschitz": list(self.factor_lipschitz),
            "length": self.length,
            "length_bound": self.length_bound,
            "within_length_bound": self.length <= self.length_bound,
            "unit_slopes": self.unit_slopes,
            "passed": self.passed,
        }


def verify_chain(
    g: LinearSpline1D,
    chain: CompositionChain,
    tol: Optional[float] = None,
    points: Optional[int] = None,
) -> ChainReport:
    """Grid-oracle check that the chain composes to g with valid factors."""
    tol = config.GRID_ERROR_TOLERANCE if tol is None else tol
    composed = compose_chain(chain)
    grid = evaluation_grid(g, composed, points=points)
    error = float(np.max(np.abs(chain.evaluate(grid) - evaluate(g, grid))))
    slope_error = max(
        abs(composed.left_slope - g.left_slope),
        abs(composed.right_slope - g.right_slope),
    )
    counts = tuple(simplify(f).region_count for f in chain)
    lips = tuple(lipschitz(f) for f in chain)
    unit = all(
        np.all(np.abs(np.abs(f.slopes) - 1.0) <= config.CLASSIFICATION_TOLERANCE) for f in chain
    )
    passed = (
        error < tol
        and slope_error < tol
        and all(count <= 3 for count in counts)
        and all(lip <= 1.0 + config.LIPSCHITZ_TOLERANCE for lip in lips)
    )
    return ChainReport(
        max_grid_error=error,
        outer_slope_error=slope_error,
        factor_region_counts=counts,
        factor_lipschitz=lips,
        length=len(chain),
        length_bound=length_bound(g),
        unit_slopes=bool(unit),
        passed=passed,
    )
