"""
Exact algebra of scalar continuous piecewise-linear functions.

A LinearSpline1D stores sorted knots, the function value at each knot and the
two outer slopes. Interior slopes are derived from consecutive (knot, value)
pairs, so a discontinuity cannot be represented. Every algebra operation
returns a simplified spline so that region counts are meaningful.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np

from core import config
from core.errors import SchemaError, SplineError

ArrayLike = Union[float, Sequence[float], np.ndarray]


def _frozen_array(values: Iterable[float]) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearSpline1D:
    """Scalar CPWL function defined on all of R.

    For an affine spline (no knots) ``left_slope == right_slope`` and
    ``value_at_zero`` carries the offset. For knotted splines
    ``value_at_zero`` is recomputed from the knots so it always equals f(0).
    """

    knots: np.ndarray
    values: np.ndarray
    left_slope: float
    right_slope: float
    value_at_zero: float = 0.0

    def __post_init__(self) -> None:
        knots = _frozen_array(self.knots)
        values = _frozen_array(self.values)
        left = float(self.left_slope)
        right = float(self.right_slope)

        if knots.size != values.size:
            raise SplineError(
                f"knots and values differ in length ({knots.size} != {values.size})"
            )
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(values))):
            raise SplineError("knots and values must be finite")
        if not (np.isfinite(left) and np.isfinite(right)):
            raise SplineError("outer slopes must be finite")
        if knots.size > 1 and np.any(np.diff(knots) <= 0.0):
            raise SplineError("knots must be strictly increasing")

        if knots.size == 0:
            if left != right:
                raise SplineError("an affine spline has a single slope")
            offset = float(self.value_at_zero)
            if not np.isfinite(offset):
                raise SplineError("value_at_zero must be finite")
        else:
            offset = float(_evaluate_raw(knots, values, left, right, 0.0, 0.0))

        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "left_slope", left)
        object.__setattr__(self, "right_slope", right)
        object.__setattr__(self, "value_at_zero", offset)

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def affine(cls, slope: float, value_at_zero: float = 0.0) -> "LinearSpline1D":
        """Affine function x -> slope * x + value_at_zero."""
        return cls(np.empty(0), np.empty(0), slope, slope, value_at_zero)

    @classmethod
    def identity(cls) -> "LinearSpline1D":
        return cls.affine(1.0, 0.0)

    @classmethod
    def constant(cls, value: float) -> "LinearSpline1D":
        return cls.affine(0.0, value)

    @classmethod
    def from_slopes(
        cls,
        knots: Sequence[float],
        slopes: Sequence[float],
        value_at_first_knot: float = 0.0,
    ) -> "LinearSpline1D":
        """Build a spline from its knots and all ``len(knots) + 1`` region slopes."""
        knots_arr = np.asarray(knots, dtype=float).reshape(-1)
        slopes_arr = np.asarray(slopes, dtype=float).reshape(-1)
        if slopes_arr.size != knots_arr.size + 1:
            raise SplineError("from_slopes needs exactly one slope per region")
        if knots_arr.size == 0:
            return cls.affine(float(slopes_arr[0]), value_at_first_knot)
        increments = slopes_arr[1:-1] * np.diff(knots_arr)
        values = value_at_first_knot + np.concatenate(([0.0], np.cumsum(increments)))
        return cls(knots_arr, values, slopes_arr[0], slopes_arr[-1])

    # ------------------------------------------------------------------
    # Derived views
    # ------------------------------------------------------------------

    @property
    def is_affine(self) -> bool:
        return self.knots.size == 0

    @property
    def slopes(self) -> np.ndarray:
        """Slopes of all regions, left to right."""
        if self.is_affine:
            return np.array([self.left_slope])
        interior = np.diff(self.values) / np.diff(self.knots)
        return np.concatenate(([self.left_slope], interior, [self.right_slope]))

    @property
    def region_count(self) -> int:
        return int(self.knots.size) + 1

    def __call__(self, x: ArrayLike) -> Union[float, np.ndarray]:
        return evaluate(self, x)

    def __repr__(self) -> str:
        if self.is_affine:
            return f"LinearSpline1D.affine({self.left_slope!r}, {self.value_at_zero!r})"
        return (
            f"LinearSpline1D(knots={self.knots.tolist()!r}, "
            f"values={self.values.tolist()!r}, left_slope={self.left_slope!r}, "
            f"right_slope={self.right_slope!r})"
        )

    # ------------------------------------------------------------------
    # Serialization (spline.v1)
    # ------------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        if self.is_affine:
            return {
                "affine": {
                    "slope": self.left_slope,
                    "value_at_zero": self.value_at_zero,
                }
            }
        return {
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "left_slope": self.left_slope,
            "right_slope": self.right_slope,
        }

    @classmethod
    def from_dict(cls, data: Any, field: str = "spline") -> "LinearSpline1D":
        """Parse a spline.v1 mapping, raising SchemaError on malformed input."""
        if not isinstance(data, dict):
            raise SchemaError(field, "expected an object")
        if "affine" in data:
            affine = data["affine"]
            if not isinstance(affine, dict):
                raise SchemaError(f"{field}.affine", "expected an object")
            slope = _number(affine, "slope", f"{field}.affine")
            offset = _number(affine, "value_at_zero", f"{field}.affine")
            return cls.affine(slope, offset)
        for key in ("knots", "values"):
            if not isinstance(data.get(key), list):
                raise SchemaError(f"{field}.{key}", "expected a list of numbers")
        left = _number(data, "left_slope", field)
        right = _number(data, "right_slope", field)
        try:
            knots = [float(v) for v in data["knots"]]
            values = [float(v) for v in data["values"]]
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{field}.knots", f"non-numeric entry ({exc})") from exc
        try:
            return cls(np.array(knots), np.array(values), left, right)
        except SplineError as exc:
            raise SchemaError(field, str(exc)) from exc


@dataclass(frozen=True)
class SlopeProfile:
    """Region-by-region view of a simplified spline."""

    region_count: int
    slopes: tuple[float, ...]
    breakpoints: tuple[float, ...]


def _number(data: dict, key: str, field: str) -> float:
    value = data.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{field}.{key}", "expected a number")
    return float(value)


def _evaluate_raw(
    knots: np.ndarray,
    values: np.ndarray,
    left: float,
    right: float,
    offset: float,
    x: np.ndarray,
) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if knots.size == 0:
        return offset + left * x
    out = np.interp(x, knots, values)
    out = np.where(x < knots[0], values[0] + left * (x - knots[0]), out)
    out = np.where(x > knots[-1], values[-1] + right * (x - knots[-1]), out)
    return out


# ============================================================
# EVALUATION AND SCALAR PROPERTIES
# ============================================================

def evaluate(f: LinearSpline1D, x: ArrayLike) -> Union[float, np.ndarray]:
    """Evaluate f at a scalar or an array of points."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise SplineError("cannot evaluate a spline at a non-finite point")
    out = _evaluate_raw(f.knots, f.values, f.left_slope, f.right_slope, f.value_at_zero, arr)
    if arr.ndim == 0:
        return float(out)
    return out


def slope_at(f: LinearSpline1D, x: float) -> tuple[float, bool]:
    """Slope of the region containing x and whether x sits on a knot.

    On a knot the slope of the region to its right is returned.
    """
    x = float(x)
    if not np.isfinite(x):
        raise SplineError("cannot take a slope at a non-finite point")
    slopes = f.slopes
    if f.is_affine:
        return float(slopes[0]), False
    tol = config.BOUNDARY_TOLERANCE * max(1.0, abs(x))
    on_knot = bool(np.any(np.abs(f.knots - x) <= tol))
    index = int(np.searchsorted(f.knots, x, side="right"))
    return float(slopes[index]), on_knot


def lipschitz(f: LinearSpline1D) -> float:
    """Maximal absolute slope, the Lipschitz constant for any p on R."""
    return float(np.max(np.abs(f.slopes)))


def tv2(f: LinearSpline1D) -> float:
    """Second-order total variation: sum of absolute slope changes."""
    return float(np.sum(np.abs(np.diff(simplify(f).slopes))))


def slope_profile(f: LinearSpline1D) -> SlopeProfile:
    s = simplify(f)
    return SlopeProfile(
        region_count=s.region_count,
        slopes=tuple(float(v) for v in s.slopes),
        breakpoints=tuple(float(v) for v in s.knots),
    )


# ============================================================
# CANONICAL FORM
# ============================================================

def _dedupe_knots(
    knots: np.ndarray, values: np.ndarray, knot_tol: float
) -> tuple[np.ndarray, np.ndarray]:
    keep_k = [float(knots[0])]
    keep_v = [float(values[0])]
    for k, v in zip(knots[1:], values[1:]):
        if k - keep_k[-1] > knot_tol * max(1.0, abs(k)):
            keep_k.append(float(k))
            keep_v.append(float(v))
    return np.array(keep_k), np.array(keep_v)


def simplify(
    f: LinearSpline1D,
    knot_tol: Optional[float] = None,
    slope_tol: Optional[float] = None,
) -> LinearSpline1D:
    """Merge coincident knots and drop knots with equal slopes on both sides."""
    if f.is_affine:
        return f
    knot_tol = config.KNOT_TOLERANCE if knot_tol is None else knot_tol
    slope_tol = config.SLOPE_TOLERANCE if slope_tol is None else slope_tol

    knots, values = _dedupe_knots(f.knots, f.values, knot_tol)
    left, right = f.left_slope, f.right_slope

    while knots.size:
        interior = np.diff(values) / np.diff(knots) if knots.size > 1 else np.empty(0)
        slopes = np.concatenate(([left], interior, [right]))
        before, after = slopes[:-1], slopes[1:]
        scale = np.maximum(1.0, np.maximum(np.abs(before), np.abs(after)))
        keep = np.abs(after - before) > slope_tol * scale
        if np.all(keep):
            break
        knots, values = knots[keep], values[keep]

    if knots.size == 0:
        return LinearSpline1D.affine(left, f.value_at_zero)
    if knots.size == f.knots.size:
        return f
    return LinearSpline1D(knots, values, left, right)


# ============================================================
# ALGEBRA
# ============================================================

def _union_knots(splines: Sequence[LinearSpline1D]) -> np.ndarray:
    parts = [s.knots for s in splines if s.knots.size]
    if not parts:
        return np.empty(0)
    return np.unique(np.concatenate(parts))


def linear_combination(
    splines: Sequence[LinearSpline1D],
    coefficients: Sequence[float],
    constant: float = 0.0,
) -> LinearSpline1D:
    """Exact sum_i c_i f_i + constant."""
    if len(splines) != len(coefficients):
        raise SplineError("one coefficient per spline is required")
    coeffs = [float(c) for c in coefficients]
    left = sum(c * s.left_slope for c, s in zip(coeffs, splines))
    right = sum(c * s.right_slope for c, s in zip(coeffs, splines))
    knots = _union_knots(splines)
    if knots.size == 0:
        offset = sum(c * s.value_at_zero for c, s in zip(coeffs, splines)) + constant
        return LinearSpline1D.affine(left, offset)
    values = np.full(knots.shape, float(constant))
    for c, s in zip(coeffs, splines):
        values = values + c * evaluate(s, knots)
    return simplify(LinearSpline1D(knots, values, left, right))


def negate(f: LinearSpline1D) -> LinearSpline1D:
    return linear_combination([f], [-1.0])


def _preimages(inner: LinearSpline1D, targets: np.ndarray) -> np.ndarray:
    """Abscissas where inner hits any of the target values.

    Regions with zero slope contribute nothing: the composition is constant there.
    """
    if targets.size == 0:
        return np.empty(0)
    k, v = inner.knots, inner.values
    if inner.is_affine:
        anchors_x = np.array([0.0])
        anchors_y = np.array([inner.value_at_zero])
        slopes = np.array([inner.left_slope])
        lo = np.array([-np.inf])
        hi = np.array([np.inf])
    else:
        slopes = inner.slopes
        anchors_x = np.concatenate(([k[0]], k))
        anchors_y = np.concatenate(([v[0]], v))
        lo = np.concatenate(([-np.inf], k))
        hi = np.concatenate((k, [np.inf]))

    moving = slopes != 0.0
    if not np.any(moving):
        return np.empty(0)
    ax, ay, s = anchors_x[moving], anchors_y[moving], slopes[moving]
    lo, hi = lo[moving], hi[moving]
    x = ax[:, None] + (targets[None, :] - ay[:, None]) / s[:, None]
    inside = (x >= lo[:, None]) & (x <= hi[:, None])
    return x[inside]


def compose(outer: LinearSpline1D, inner: LinearSpline1D) -> LinearSpline1D:
    """Exact composition x -> outer(inner(x))."""
    candidates = inner.knots
    if outer.knots.size:
        candidates = np.concatenate((candidates, _preimages(inner, outer.knots)))

    def _outer_slope_along(s: float, toward_minus: bool) -> float:
        if s == 0.0:
            return 0.0
        going_down = (s > 0.0) == toward_minus
        return s * (outer.left_slope if going_down else outer.right_slope)

    left = _outer_slope_along(inner.left_slope, toward_minus=True)
    right = _outer_slope_along(inner.right_slope, toward_minus=False)

    if candidates.size == 0:
        offset = evaluate(outer, evaluate(inner, 0.0))
        return LinearSpline1D.affine(left, offset)

    knots = np.unique(candidates)
    knots, _ = _dedupe_knots(knots, knots, config.KNOT_TOLERANCE)
    values = evaluate(outer, evaluate(inner, knots))
    result = simplify(LinearSpline1D(knots, values, left, right))
    logging.debug(
        "compose: %d x %d regions -> %d regions",
        outer.region_count,
        inner.region_count,
        result.region_count,
    )
    return result


def _pointwise_extremum(
    f: LinearSpline1D, g: LinearSpline1D, take_max: bool
) -> LinearSpline1D:
    pick = np.maximum if take_max else np.minimum
    knots = _union_knots([f, g])

    if knots.size == 0:
        ds = f.left_slope - g.left_slope
        dc = f.value_at_zero - g.value_at_zero
        if ds == 0.0:
            winner = f if (dc >= 0.0) == take_max else g
            return winner
        knots = np.array([-dc / ds])
    else:
        d = evaluate(f, knots) - evaluate(g, knots)
        crossings = []
        if knots.size > 1:
            a, b = knots[:-1], knots[1:]
            da, db = d[:-1], d[1:]
            flips = da * db < 0.0
            crossings.append(a[flips] + (b[flips] - a[flips]) * da[flips] / (da[flips] - db[flips]))
        dl = f.left_slope - g.left_slope
        if dl != 0.0:
            root = knots[0] - d[0] / dl
            if root < knots[0]:
                crossings.append(np.array([root]))
        dr = f.right_slope - g.right_slope
        if dr != 0.0:
            root = knots[-1] - d[-1] / dr
            if root > knots[-1]:
                crossings.append(np.array([root]))
        if crossings:
            knots = np.unique(np.concatenate([knots] + crossings))

    knots, _ = _dedupe_knots(knots, knots, config.KNOT_TOLERANCE)
    values = pick(evaluate(f, knots), evaluate(g, knots))

    outside_left = knots[0] - 1.0
    f_wins_left = (evaluate(f, outside_left) >= evaluate(g, outside_left)) == take_max
    left = f.left_slope if f_wins_left else g.left_slope
    outside_right = knots[-1] + 1.0
    f_wins_right = (evaluate(f, outside_right) >= evaluate(g, outside_right)) == take_max
    right = f.right_slope if f_wins_right else g.right_slope

    return simplify(LinearSpline1D(knots, values, left, right))


def pointwise_max(f: LinearSpline1D, g: LinearSpline1D) -> LinearSpline1D:
    """Exact max(f, g), crossing points inserted as knots."""
    return _pointwise_extremum(f, g, take_max=True)


def pointwise_min(f: LinearSpline1D, g: LinearSpline1D) -> LinearSpline1D:
    """Exact min(f, g), crossing points inserted as knots."""
    return _pointwise_extremum(f, g, take_max=False)


def splice(left: LinearSpline1D, right: LinearSpline1D, at: float) -> LinearSpline1D:
    """Function equal to ``left`` on (-inf, at] and ``right`` on [at, inf).

    Both pieces must agree at ``at``.
    """
    at = float(at)
    lv = evaluate(left, at)
    rv = evaluate(right, at)
    if abs(lv - rv) > config.GRID_ERROR_TOLERANCE * max(1.0, abs(lv), abs(rv)):
        raise SplineError(f"splice is discontinuous at {at!r} ({lv!r} != {rv!r})")
    left_knots = left.knots[left.knots < at]
    right_knots = right.knots[right.knots > at]
    knots = np.concatenate((left_knots, [at], right_knots))
    values = np.concatenate(
        (evaluate(left, left_knots), [lv], evaluate(right, right_knots))
    )
    knots, values = _dedupe_knots(knots, values, config.KNOT_TOLERANCE)
    return simplify(LinearSpline1D(knots, values, left.left_slope, right.right_slope))


def spline_from_samples(points: Iterable[Sequence[float]]) -> LinearSpline1D:
    """Linear spline through the samples, constant outside their range."""
    arr = np.asarray(list(points), dtype=float)
    if arr.size == 0:
        raise SplineError("at least one sample is required")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise SplineError("samples must be (x, y) pairs")
    if not np.all(np.isfinite(arr)):
        raise SplineError("samples must be finite")

    order = np.argsort(arr[:, 0], kind="stable")
    xs, ys = arr[order, 0], arr[order, 1]
    keep_x = [float(xs[0])]
    keep_y = [float(ys[0])]
    for x, y in zip(xs[1:], ys[1:]):
        if x - keep_x[-1] <= config.KNOT_TOLERANCE * max(1.0, abs(x)):
            if abs(y - keep_y[-1]) > config.KNOT_TOLERANCE * max(1.0, abs(y)):
                raise SplineError("inconsistent samples")
            continue
        keep_x.append(float(x))
        keep_y.append(float(y))

    if len(keep_x) == 1:
        return LinearSpline1D.constant(keep_y[0])
    return simplify(LinearSpline1D(np.array(keep_x), np.array(keep_y), 0.0, 0.0))


# ============================================================
# GRID ORACLE
# ============================================================

def evaluation_grid(
    *splines: LinearSpline1D,
    points: Optional[int] = None,
    margin: Optional[float] = None,
) -> np.ndarray:
    """Knots, their midpoints and a uniform grid over three times the knot range.

    Two splines that agree on this grid and share outer slopes are equal on R.
    """
    points = config.GRID_POINTS if points is None else int(points)
    margin = config.GRID_MARGIN if margin is None else float(margin)
    knots = _union_knots(list(splines))
    if knots.size:
        lo, hi = float(knots[0]), float(knots[-1])
    else:
        lo = hi = 0.0
    span = hi - lo
    uniform = np.linspace(lo - span - margin, hi + span + margin, max(points, 2))
    midpoints = 0.5 * (knots[:-1] + knots[1:]) if knots.size > 1 else np.empty(0)
    return np.unique(np.concatenate((uniform, knots, midpoints)))


def grid_distance(
    f: LinearSpline1D,
    g: LinearSpline1D,
    points: Optional[int] = None,
    margin: Optional[float] = None,
) -> float:
    """Max of the grid error and the outer-slope mismatch between f and g."""
    grid = evaluation_grid(f, g, points=points, margin=margin)
    err = float(np.max(np.abs(evaluate(f, grid) - evaluate(g, grid))))
    slope_err = max(abs(f.left_slope - g.left_slope), abs(f.right_slope - g.right_slope))
    return max(err, slope_err)
