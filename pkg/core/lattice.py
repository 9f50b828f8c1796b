"""
Multivariate CPWL functions as min-of-max lattices of affine pieces.

Provides p-norm helpers, the Hölder witness used to build a Lipschitz-optimal
interpolant of scattered data, and an exact export of any lattice to a plain
ReLU network.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Iterable, Sequence, Union

import numpy as np

from core.errors import LatticeError, SchemaError

if TYPE_CHECKING:
    from core.lipnet import ConstrainedNet

NormIndex = Union[float, int, str]


# ============================================================
# NORM INDICES
# ============================================================

def parse_norm_index(value: NormIndex) -> float:
    """Parse a norm index given as a number or as the string "inf"."""
    if isinstance(value, bool):
        raise LatticeError(f"invalid norm index {value!r}")
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "infinity", "+inf"):
            return math.inf
        try:
            p = float(text)
        except ValueError as exc:
            raise LatticeError(f"invalid norm index {value!r}") from exc
    elif isinstance(value, (int, float, np.integer, np.floating)):
        p = float(value)
    else:
        raise LatticeError(f"invalid norm index {value!r}")
    if math.isnan(p) or p < 1.0:
        raise LatticeError(f"norm index must lie in [1, inf], got {value!r}")
    return p


def format_norm_index(p: float) -> Union[str, int, float]:
    """JSON encoding of a norm index: "inf" or a number."""
    p = parse_norm_index(p)
    if math.isinf(p):
        return "inf"
    if float(p).is_integer():
        return int(p)
    return float(p)


def dual_index(p: NormIndex) -> float:
    """Hölder conjugate q with 1/p + 1/q = 1."""
    p = parse_norm_index(p)
    if p == 1.0:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def pnorm(v: Union[Sequence[float], np.ndarray], p: NormIndex) -> float:
    p = parse_norm_index(p)
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.size == 0:
        return 0.0
    return float(np.linalg.norm(arr, ord=p))


def holder_witness(
    xi: Union[Sequence[float], np.ndarray],
    xj: Union[Sequence[float], np.ndarray],
    p: NormIndex,
) -> np.ndarray:
    """Vector u with <u, xj - xi> = ||u||_q ||xj - xi||_p.

    For p = inf the witness is one-hot at the first coordinate of maximal
    magnitude; for p = 1 it is the sign vector of the displacement.
    """
    p = parse_norm_index(p)
    d = np.asarray(xj, dtype=float).reshape(-1) - np.asarray(xi, dtype=float).reshape(-1)
    if not np.any(d):
        raise LatticeError("coincident points")
    if math.isinf(p):
        k0 = int(np.argmax(np.abs(d)))
        u = np.zeros_like(d)
        u[k0] = np.sign(d[k0])
        return u
    if p == 1.0:
        return np.sign(d)
    return np.sign(d) * np.abs(d) ** (p - 1.0)


# ============================================================
# LATTICE TYPES
# ============================================================

@dataclass(frozen=True, eq=False)
class AffinePiece:
    """x -> <gradient, x> + offset."""

    gradient: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        grad = np.array(self.gradient, dtype=float).reshape(-1)
        if not np.all(np.isfinite(grad)) or not np.isfinite(self.offset):
            raise LatticeError("affine piece entries must be finite")
        grad.setflags(write=False)
        object.__setattr__(self, "gradient", grad)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dimension(self) -> int:
        return int(self.gradient.size)

    def to_dict(self) -> dict[str, Any]:
        return {"gradient": self.gradient.tolist(), "offset": self.offset}


@dataclass(frozen=True, eq=False)
class LatticeCPWL:
    """min over groups of (max over the pieces of the group)."""

    dimension: int
    groups: tuple[tuple[AffinePiece, ...], ...]

    def __post_init__(self) -> None:
        groups = tuple(tuple(group) for group in self.groups)
        if not groups:
            raise LatticeError("a lattice needs at least one group")
        for index, group in enumerate(groups):
            if not group:
                raise LatticeError(f"group {index} is empty")
            for piece in group:
                if piece.dimension != self.dimension:
                    raise LatticeError(
                        f"piece dimension {piece.dimension} != lattice dimension {self.dimension}"
                    )
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "dimension", int(self.dimension))

    @property
    def piece_count(self) -> int:
        return sum(len(group) for group in self.groups)

    def group_arrays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Stacked (gradients, offsets) per group."""
        return [
            (
                np.stack([piece.gradient for piece in group]),
                np.array([piece.offset for piece in group]),
            )
            for group in self.groups
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.dimension,
            "groups": [[piece.to_dict() for piece in group] for group in self.groups],
        }

    @classmethod
    def from_dict(cls, data: Any) -> "LatticeCPWL":
        if not isinstance(data, dict):
            raise SchemaError("lattice", "expected an object")
        d = data.get("d")
        if isinstance(d, bool) or not isinstance(d, int) or d < 1:
            raise SchemaError("d", "expected a positive integer")
        raw_groups = data.get("groups")
        if not isinstance(raw_groups, list) or not raw_groups:
            raise SchemaError("groups", "expected a non-empty list of groups")
        groups = []
        for gi, raw_group in enumerate(raw_groups):
            if not isinstance(raw_group, list) or not raw_group:
                raise SchemaError(f"groups[{gi}]", "expected a non-empty list of pieces")
            pieces = []
            for pi, raw_piece in enumerate(raw_group):
                field = f"groups[{gi}][{pi}]"
                if not isinstance(raw_piece, dict):
                    raise SchemaError(field, "expected an object")
                gradient = raw_piece.get("gradient")
                offset = raw_piece.get("offset")
                if not isinstance(gradient, list) or len(gradient) != d:
                    raise SchemaError(f"{field}.gradient", f"expected {d} numbers")
                if isinstance(offset, bool) or not isinstance(offset, (int, float)):
                    raise SchemaError(f"{field}.offset", "expected a number")
                try:
                    pieces.append(AffinePiece(np.array(gradient, dtype=float), float(offset)))
                except (TypeError, ValueError) as exc:
                    raise SchemaError(field, str(exc)) from exc
            groups.append(tuple(pieces))
        return cls(d, tuple(groups))


@dataclass(frozen=True, eq=False)
class InterpolationProblem:
    """Scattered data (x_i, y_i) with the norm index used to measure slopes."""

    points: np.ndarray
    values: np.ndarray
    p: float

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        vals = np.array(self.values, dtype=float).reshape(-1)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise LatticeError("an interpolation problem needs at least one point")
        if pts.shape[0] != vals.size:
            raise LatticeError("one value per point is required")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(vals))):
            raise LatticeError("points and values must be finite")
        for i in range(pts.shape[0]):
            if np.any(np.all(pts[i + 1:] == pts[i], axis=1)):
                raise LatticeError("interpolation points must be pairwise distinct")
        pts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "p", parse_norm_index(self.p))

    @classmethod
    def from_points(
        cls, samples: Iterable[tuple[Sequence[float], float]], p: NormIndex
    ) -> "InterpolationProblem":
        """Build a problem, merging exact duplicates and rejecting conflicting ones."""
        xs: list[np.ndarray] = []
        ys: list[float] = []
        for x, y in samples:
            x_arr = np.atleast_1d(np.asarray(x, dtype=float))
            match = next((i for i, seen in enumerate(xs) if np.array_equal(seen, x_arr)), None)
            if match is not None:
                if ys[match] != float(y):
                    raise LatticeError("inconsistent duplicate points")
                continue
            xs.append(x_arr)
            ys.append(float(y))
        if not xs:
            raise LatticeError("an interpolation problem needs at least one point")
        if len({x.size for x in xs}) != 1:
            raise LatticeError("all points must share one dimension")
        return cls(np.stack(xs), np.array(ys), parse_norm_index(p))

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    @property
    def lipschitz_constant(self) -> float:
        """max_{i != j} |y_i - y_j| / ||x_i - x_j||_p."""
        n = self.points.shape[0]
        if n < 2:
            return 0.0
        diffs = self.points[:, None, :] - self.points[None, :, :]
        dists = np.linalg.norm(diffs.reshape(n * n, -1), ord=self.p, axis=1).reshape(n, n)
        rises = np.abs(self.values[:, None] - self.values[None, :])
        off_diag = ~np.eye(n, dtype=bool)
        return float(np.max(rises[off_diag] / dists[off_diag]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": format_norm_index(self.p),
            "points": [
                {"x": x.tolist(), "y": float(y)} for x, y in zip(self.points, self.values)
            ],
        }

    @classmethod
    def from_dict(cls, data: Any) -> "InterpolationProblem":
        if not isinstance(data, dict):
            raise SchemaError("points", "expected an object")
        if "p" not in data:
            raise SchemaError("p", "missing norm index")
        try:
            p = parse_norm_index(data["p"])
        except LatticeError as exc:
            raise SchemaError("p", str(exc)) from exc
        raw = data.get("points")
        if not isinstance(raw, list) or not raw:
            raise SchemaError("points", "expected a non-empty list")
        samples = []
        for index, entry in enumerate(raw):
            field = f"points[{index}]"
            if not isinstance(entry, dict):
                raise SchemaError(field, "expected an object")
            x, y = entry.get("x"), entry.get("y")
            if isinstance(x, (int, float)) and not isinstance(x, bool):
                x = [x]
            if not isinstance(x, list) or not x:
                raise SchemaError(f"{field}.x", "expected a list of numbers")
            if isinstance(y, bool) or not isinstance(y, (int, float)):
                raise SchemaError(f"{field}.y", "expected a number")
            samples.append((x, y))
        try:
            return cls.from_points(samples, p)
        except (LatticeError, TypeError, ValueError) as exc:
            raise SchemaError("points", str(exc)) from exc


# ============================================================
# OPERATIONS
# ============================================================

def build_interpolant(problem: InterpolationProblem) -> LatticeCPWL:
    """Lipschitz-optimal interpolant as min_i max_{j != i} g_ij.

    g_ij(x) = y_i + (y_j - y_i) <u_ij, x - x_i> / (||x_j - x_i||_p ||u_ij||_q)
    passes through (x_i, y_i) and (x_j, y_j) with gradient q-norm equal to the
    pairwise slope.
    """
    pts, vals, p = problem.points, problem.values, problem.p
    q = dual_index(p)
    n, d = pts.shape
    if n == 1:
        constant = AffinePiece(np.zeros(d), float(vals[0]))
        return LatticeCPWL(d, ((constant,),))

    groups = []
    for i in range(n):
        pieces = []
        for j in range(n):
            if j == i:
                continue
            u = holder_witness(pts[i], pts[j], p)
            scale = pnorm(pts[j] - pts[i], p) * pnorm(u, q)
            gradient = (vals[j] - vals[i]) / scale * u
            offset = float(vals[i] - gradient @ pts[i])
            pieces.append(AffinePiece(gradient, offset))
        groups.append(tuple(pieces))
    lattice = LatticeCPWL(d, tuple(groups))
    logging.debug(
        "Interpolant for %d points in R^%d (p=%s): %d groups, %d pieces",
        n,
        d,
        format_norm_index(p),
        len(groups),
        lattice.piece_count,
    )
    return lattice


def evaluate_lattice(
    g: LatticeCPWL, x: Union[float, Sequence[float], np.ndarray]
) -> Union[float, np.ndarray]:
    """Evaluate at one point of shape (d,) or a batch of shape (N, d)."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    batch = arr.reshape(1, -1) if single else arr
    if batch.ndim != 2 or batch.shape[1] != g.dimension:
        raise LatticeError(
            f"expected points of dimension {g.dimension}, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(batch)):
        raise LatticeError("cannot evaluate a lattice at a non-finite point")
    group_max = [np.max(batch @ grads.T + offsets, axis=1) for grads, offsets in g.group_arrays()]
    out = np.min(np.stack(group_max, axis=1), axis=1)
    return float(out[0]) if single else out


def group_values(g: LatticeCPWL, x: Union[Sequence[float], np.ndarray]) -> np.ndarray:
    """Value of every group max at a single point."""
    point = np.asarray(x, dtype=float).reshape(1, -1)
    return np.array(
        [float(np.max(point @ grads.T + offsets)) for grads, offsets in g.group_arrays()]
    )


def lattice_lipschitz_bound(g: LatticeCPWL, p: NormIndex) -> float:
    """max over pieces of ||gradient||_q, an upper bound on Lip_p(g)."""
    q = dual_index(p)
    return max(pnorm(piece.gradient, q) for group in g.groups for piece in group)


def sampled_lipschitz(
    fn,
    points_a: np.ndarray,
    points_b: np.ndarray,
    p: NormIndex,
) -> float:
    """Largest quotient |f(a) - f(b)| / ||a - b||_p over paired samples."""
    a = np.asarray(points_a, dtype=float)
    b = np.asarray(points_b, dtype=float)
    dists = np.linalg.norm(a - b, ord=parse_norm_index(p), axis=1)
    keep = dists > 0.0
    if not np.any(keep):
        return 0.0
    rises = np.abs(np.asarray(fn(a[keep])) - np.asarray(fn(b[keep])))
    return float(np.max(rises / dists[keep]))


# ============================================================
# EXPORT TO A RELU NETWORK
# ============================================================

def _pair_schedule(sizes: list[int]) -> list[list[tuple[int, ...]]]:
    """Binary-tree pairing of consecutive values, one entry per output value."""
    slots: list[list[tuple[int, ...]]] = []
    start = 0
    for size in sizes:
        members = list(range(start, start + size))
        group = [tuple(members[k:k + 2]) for k in range(0, size, 2)]
        slots.append(group)
        start += size
    return slots


def _stage_matrices(
    slots: list[tuple[int, ...]], n_values: int, reduce_max: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Pre-activation combination C (units x values) and readout R (outputs x units).

    max(a, b) = ReLU(a - b) + ReLU(b) - ReLU(-b)
    min(a, b) = ReLU(b) - ReLU(-b) - ReLU(b - a)
    a         = ReLU(a) - ReLU(-a)
    """
    rows: list[np.ndarray] = []
    readout: list[tuple[int, list[float]]] = []
    for slot in slots:
        first = len(rows)
        if len(slot) == 1:
            (a,) = slot
            for sign in (1.0, -1.0):
                row = np.zeros(n_values)
                row[a] = sign
                rows.append(row)
            readout.append((first, [1.0, -1.0]))
            continue
        a, b = slot
        diff = np.zeros(n_values)
        if reduce_max:
            diff[a], diff[b] = 1.0, -1.0
        else:
            diff[a], diff[b] = -1.0, 1.0
        plus_b = np.zeros(n_values)
        plus_b[b] = 1.0
        rows.extend([diff, plus_b, -plus_b])
        weights = [1.0, 1.0, -1.0] if reduce_max else [-1.0, 1.0, -1.0]
        readout.append((first, weights))

    combine = np.stack(rows)
    read = np.zeros((len(slots), len(rows)))
    for out_index, (first, weights) in enumerate(readout):
        read[out_index, first:first + len(weights)] = weights
    return combine, read


def lattice_to_relu_net(g: LatticeCPWL) -> "ConstrainedNet":
    """Exact ReLU network computing g, max and min folded in binary trees.

    The weights are left unconstrained.
    """
    from core.lipnet import ConstraintSpec, ConstrainedNet, Layer, ReLU

    grads = np.stack([piece.gradient for group in g.groups for piece in group])
    offsets = np.array([piece.offset for group in g.groups for piece in group])
    sizes = [len(group) for group in g.groups]

    stages: list[tuple[list[tuple[int, ...]], bool]] = []
    while max(sizes) > 1:
        schedule = _pair_schedule(sizes)
        stages.append(([slot for group in schedule for slot in group], True))
        sizes = [len(group) for group in schedule]
    while len(sizes) > 1:
        flat = _pair_schedule([len(sizes)])[0]
        stages.append((flat, False))
        sizes = [1] * len(flat)

    if not stages:
        layer = Layer(grads, offsets, None)
        return ConstrainedNet((layer,), ConstraintSpec.none())

    layers = []
    readout = None
    n_values = grads.shape[0]
    for index, (slots, reduce_max) in enumerate(stages):
        combine, read = _stage_matrices(slots, n_values, reduce_max)
        if index == 0:
            weight = combine @ grads
            bias = combine @ offsets
        else:
            weight = combine @ readout
            bias = np.zeros(combine.shape[0])
        layers.append(Layer(weight, bias, ReLU()))
        readout = read
        n_values = len(slots)

    layers.append(Layer(readout, np.zeros(readout.shape[0]), None))
    logging.debug(
        "Exported lattice (%d groups, %d pieces) to a ReLU net with %d hidden layers",
        len(g.groups),
        g.piece_count,
        len(stages),
    )
    return ConstrainedNet(tuple(layers), ConstraintSpec.none())
