"""
Lipschitz-constrained feed-forward networks.

A ConstrainedNet is a list of affine layers, each optionally followed by an
activation: ReLU, a leaky CPWL unit, per-neuron linear splines, GroupSort or a
Householder reflection. The module provides exact forward evaluation,
weight-constraint projectors, a.e. Jacobians, exact affine-region enumeration
for small nets and the exact restriction of a net to a line.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np
from scipy.linalg import polar, svdvals
from scipy.optimize import linprog

from core import config
from core.cpwl1d import (
    LinearSpline1D,
    compose,
    evaluate,
    linear_combination,
    lipschitz,
    pointwise_max,
    pointwise_min,
    slope_at,
)
from core.errors import EnumerationBudgetError, NetworkError, SchemaError
from core.lattice import dual_index, format_norm_index, parse_norm_index, pnorm


# ============================================================
# ACTIVATIONS
# ============================================================

class Activation:
    """Base class of all activation families."""

    kind = "activation"
    componentwise = False

    def check_width(self, width: int) -> None:
        """Raise NetworkError if the activation cannot act on ``width`` units."""

    def apply(self, z: np.ndarray) -> np.ndarray:
        """Apply to a batch of pre-activations of shape (N, width)."""
        raise NotImplementedError

    def jacobian(self, z: np.ndarray) -> tuple[np.ndarray, bool]:
        """A.e. Jacobian at a single pre-activation and a boundary flag."""
        raise NotImplementedError

    def lipschitz(self, p: float, width: int) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind}


class ComponentwiseActivation(Activation):
    """Activation acting on every unit through a scalar spline."""

    componentwise = True

    def neuron_splines(self, width: int) -> list[LinearSpline1D]:
        raise NotImplementedError

    def apply(self, z: np.ndarray) -> np.ndarray:
        splines = self.neuron_splines(z.shape[1])
        return np.stack([evaluate(s, z[:, i]) for i, s in enumerate(splines)], axis=1)

    def jacobian(self, z: np.ndarray) -> tuple[np.ndarray, bool]:
        slopes = []
        on_boundary = False
        for value, spline in zip(z, self.neuron_splines(z.size)):
            slope, on_knot = slope_at(spline, value)
            slopes.append(slope)
            on_boundary = on_boundary or on_knot
        return np.diag(slopes), on_boundary

    def lipschitz(self, p: float, width: int) -> float:
        return max(lipschitz(s) for s in self.neuron_splines(width))


_RELU_SPLINE = LinearSpline1D(np.array([0.0]), np.array([0.0]), 0.0, 1.0)


@dataclass(frozen=True)
class ReLU(ComponentwiseActivation):
    kind = "relu"

    def neuron_splines(self, width: int) -> list[LinearSpline1D]:
        return [_RELU_SPLINE] * width

    def apply(self, z: np.ndarray) -> np.ndarray:
        return np.maximum(z, 0.0)


@dataclass(frozen=True)
class LeakyCPWL(ComponentwiseActivation):
    """x + shift on [lower, upper], slope c in [0, 1) outside.

    ReLU-like units whose only unit-slope region is the interval I.
    """

    c: float
    lower: float
    upper: float
    shift: float = 0.0

    kind = "leaky_cpwl"

    def __post_init__(self) -> None:
        if not 0.0 <= self.c < 1.0:
            raise NetworkError(f"leaky slope must lie in [0, 1), got {self.c!r}")
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or self.lower >= self.upper:
            raise NetworkError("leaky unit interval must be finite with lower < upper")

    @property
    def spline(self) -> LinearSpline1D:
        knots = np.array([self.lower, self.upper])
        return LinearSpline1D(knots, knots + self.shift, self.c, self.c)

    def neuron_splines(self, width: int) -> list[LinearSpline1D]:
        return [self.spline] * width

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "c": self.c,
            "lower": self.lower,
            "upper": self.upper,
            "shift": self.shift,
        }


@dataclass(frozen=True, eq=False)
class SplinePerNeuron(ComponentwiseActivation):
    """One learnable-style linear spline per unit."""

    splines: tuple[LinearSpline1D, ...]

    kind = "spline"

    def __post_init__(self) -> None:
        object.__setattr__(self, "splines", tuple(self.splines))
        if not self.splines:
            raise NetworkError("spline activation needs at least one spline")

    def check_width(self, width: int) -> None:
        if width != len(self.splines):
            raise NetworkError(
                f"spline activation has {len(self.splines)} splines for {width} units"
            )

    def neuron_splines(self, width: int) -> list[LinearSpline1D]:
        self.check_width(width)
        return list(self.splines)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "splines": [s.to_dict() for s in self.splines]}


@dataclass(frozen=True)
class GroupSort(Activation):
    """Sort consecutive groups ascending; trailing ``passthrough`` units are left alone."""

    group_size: int
    passthrough: int = 0

    kind = "groupsort"

    def __post_init__(self) -> None:
        if int(self.group_size) < 2:
            raise NetworkError("group size must be at least 2")
        if int(self.passthrough) < 0:
            raise NetworkError("passthrough must be non-negative")

    def check_width(self, width: int) -> None:
        sorted_width = width - self.passthrough
        if sorted_width < self.group_size or sorted_width % self.group_size:
            raise NetworkError(
                f"width {width} does not split into groups of {self.group_size} "
                f"with {self.passthrough} passthrough units"
            )

    def apply(self, z: np.ndarray) -> np.ndarray:
        n, width = z.shape
        cut = width - self.passthrough
        groups = z[:, :cut].reshape(n, -1, self.group_size)
        ordered = np.sort(groups, axis=-1, kind="stable").reshape(n, cut)
        return np.concatenate((ordered, z[:, cut:]), axis=1)

    def jacobian(self, z: np.ndarray) -> tuple[np.ndarray, bool]:
        width = z.size
        cut = width - self.passthrough
        perm = np.arange(width)
        tie = False
        for start in range(0, cut, self.group_size):
            block = z[start:start + self.group_size]
            order = np.argsort(block, kind="stable")
            perm[start:start + self.group_size] = start + order
            gaps = np.diff(block[order])
            scale = np.maximum(1.0, np.abs(block[order][1:]))
            tie = tie or bool(np.any(gaps <= config.BOUNDARY_TOLERANCE * scale))
        return np.eye(width)[perm], tie

    def lipschitz(self, p: float, width: int) -> float:
        return 1.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "group_size": int(self.group_size),
            "passthrough": int(self.passthrough),
        }


@dataclass(frozen=True, eq=False)
class Householder(Activation):
    """z -> z if v.z > 0, else (I - 2 v v^T) z, per group of size len(v)."""

    v: np.ndarray

    kind = "householder"

    def __post_init__(self) -> None:
        v = np.array(self.v, dtype=float).reshape(-1)
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise NetworkError("Householder vector must be finite and non-empty")
        if abs(np.linalg.norm(v) - 1.0) > config.CONSTRAINT_TOLERANCE:
            raise NetworkError("Householder vector must have unit 2-norm")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def reflection(self) -> np.ndarray:
        return np.eye(self.v.size) - 2.0 * np.outer(self.v, self.v)

    def check_width(self, width: int) -> None:
        if width % self.v.size:
            raise NetworkError(f"width {width} is not a multiple of {self.v.size}")

    def apply(self, z: np.ndarray) -> np.ndarray:
        n, width = z.shape
        groups = z.reshape(n, width // self.v.size, self.v.size)
        s = groups @ self.v
        out = groups - 2.0 * np.minimum(s, 0.0)[..., None] * self.v
        return out.reshape(n, width)

    def jacobian(self, z: np.ndarray) -> tuple[np.ndarray, bool]:
        m = self.v.size
        blocks = []
        on_boundary = False
        for start in range(0, z.size, m):
            group = z[start:start + m]
            s = float(group @ self.v)
            tol = config.BOUNDARY_TOLERANCE * max(1.0, float(np.max(np.abs(group))))
            on_boundary = on_boundary or abs(s) <= tol
            blocks.append(np.eye(m) if s > 0.0 else self.reflection)
        jac = np.zeros((z.size, z.size))
        for k, block in enumerate(blocks):
            jac[k * m:(k + 1) * m, k * m:(k + 1) * m] = block
        return jac, on_boundary

    def lipschitz(self, p: float, width: int) -> float:
        # Continuous and piecewise I or H on two half-spaces.
        return max(1.0, operator_norm(self.reflection, p))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "v": self.v.tolist()}


def activation_from_dict(data: Any, field: str = "activation") -> Optional[Activation]:
    if data is None:
        return None
    if not isinstance(data, dict):
        raise SchemaError(field, "expected an object or null")
    kind = data.get("kind")
    try:
        if kind == "relu":
            return ReLU()
        if kind == "leaky_cpwl":
            return LeakyCPWL(
                float(data["c"]),
                float(data["lower"]),
                float(data["upper"]),
                float(data.get("shift", 0.0)),
            )
        if kind == "spline":
            raw = data.get("splines")
            if not isinstance(raw, list):
                raise SchemaError(f"{field}.splines", "expected a list")
            return SplinePerNeuron(
                tuple(
                    LinearSpline1D.from_dict(s, f"{field}.splines[{i}]")
                    for i, s in enumerate(raw)
                )
            )
        if kind == "groupsort":
            return GroupSort(int(data["group_size"]), int(data.get("passthrough", 0)))
        if kind == "householder":
            return Householder(np.array(data["v"], dtype=float))
    except KeyError as exc:
        raise SchemaError(f"{field}.{exc.args[0]}", "missing field") from exc
    except (TypeError, ValueError) as exc:
        raise SchemaError(field, str(exc)) from exc
    raise SchemaError(f"{field}.kind", f"unknown activation kind {kind!r}")


# ============================================================
# LAYERS, CONSTRAINTS AND NETS
# ============================================================

@dataclass(frozen=True)
class ConstraintSpec:
    """Weight constraint shared by every layer of a net."""

    kind: str
    p: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ("pnorm", "orthogonal", "none"):
            raise NetworkError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "pnorm":
            object.__setattr__(self, "p", parse_norm_index(self.p))
        else:
            object.__setattr__(self, "p", None)

    @classmethod
    def pnorm(cls, p: Union[float, str]) -> "ConstraintSpec":
        return cls("pnorm", parse_norm_index(p))

    @classmethod
    def spectral(cls) -> "ConstraintSpec":
        return cls("pnorm", 2.0)

    @classmethod
    def orthogonal(cls) -> "ConstraintSpec":
        return cls("orthogonal")

    @classmethod
    def none(cls) -> "ConstraintSpec":
        return cls("none")

    @property
    def norm_index(self) -> float:
        """Norm in which the constraint makes layers nonexpansive."""
        return self.p if self.kind == "pnorm" else 2.0

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "pnorm":
            return {"kind": "pnorm", "p": format_norm_index(self.p)}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, data: Any) -> "ConstraintSpec":
        if data is None:
            return cls.none()
        if not isinstance(data, dict):
            raise SchemaError("constraint", "expected an object")
        kind = data.get("kind")
        try:
            if kind == "pnorm":
                return cls.pnorm(data.get("p"))
            if kind == "spectral":
                return cls.spectral()
            if kind in ("orthogonal", "none"):
                return cls(kind)
        except ValueError as exc:
            raise SchemaError("constraint.p", str(exc)) from exc
        raise SchemaError("constraint.kind", f"unknown constraint kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Layer:
    """Affine map W h + b followed by an optional activation."""

    weight: np.ndarray
    bias: np.ndarray
    activation: Optional[Activation] = None

    def __post_init__(self) -> None:
        weight = np.array(self.weight, dtype=float)
        if weight.ndim == 1:
            weight = weight.reshape(1, -1)
        bias = np.array(self.bias, dtype=float).reshape(-1)
        if weight.ndim != 2 or weight.shape[0] != bias.size:
            raise NetworkError(
                f"weight shape {weight.shape} does not match bias length {bias.size}"
            )
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            raise NetworkError("weights and biases must be finite")
        if self.activation is not None:
            self.activation.check_width(weight.shape[0])
        weight.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weight.shape[0])

    def with_weight(self, weight: np.ndarray) -> "Layer":
        return Layer(weight, self.bias, self.activation)

    def to_dict(self) -> dict[str, Any]:
        return {
            "W": self.weight.tolist(),
            "b": self.bias.tolist(),
            "activation": None if self.activation is None else self.activation.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class ConstrainedNet:
    """A_K o s_{K-1} o A_{K-1} o ... o s_1 o A_1 with a declared weight constraint."""

    layers: tuple[Layer, ...]
    constraint: ConstraintSpec = field(default_factory=ConstraintSpec.none)

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise NetworkError("a net needs at least one layer")
        for index in range(1, len(layers)):
            if layers[index].in_dim != layers[index - 1].out_dim:
                raise NetworkError(
                    f"layer {index} expects {layers[index].in_dim} inputs but layer "
                    f"{index - 1} produces {layers[index - 1].out_dim}"
                )
        if layers[-1].activation is not None:
            raise NetworkError("the output layer must not have an activation")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def hidden_neurons(self) -> int:
        return sum(layer.out_dim for layer in self.layers if layer.activation is not None)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)

    def to_dict(self) -> dict[str, Any]:
        return {
            "layers": [layer.to_dict() for layer in self.layers],
            "constraint": self.constraint.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Any) -> "ConstrainedNet":
        if not isinstance(data, dict):
            raise SchemaError("net", "expected an object")
        raw_layers = data.get("layers")
        if not isinstance(raw_layers, list) or not raw_layers:
            raise SchemaError("layers", "expected a non-empty list")
        layers = []
        for index, raw in enumerate(raw_layers):
            where = f"layers[{index}]"
            if not isinstance(raw, dict):
                raise SchemaError(where, "expected an object")
            if not isinstance(raw.get("W"), list) or not isinstance(raw.get("b"), list):
                raise SchemaError(where, "expected W and b lists")
            activation = activation_from_dict(raw.get("activation"), f"{where}.activation")
            try:
                layers.append(
                    Layer(np.array(raw["W"], dtype=float), np.array(raw["b"], dtype=float), activation)
                )
            except (TypeError, ValueError) as exc:
                raise SchemaError(where, str(exc)) from exc
        constraint = ConstraintSpec.from_dict(data.get("constraint"))
        try:
            return cls(tuple(layers), constraint)
        except NetworkError as exc:
            raise SchemaError("layers", str(exc)) from exc


# ============================================================
# EVALUATION
# ============================================================

def forward(net: ConstrainedNet, x: Union[Sequence[float], np.ndarray]) -> np.ndarray:
    """Evaluate at one input of shape (d,) or a batch of shape (N, d)."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    h = arr.reshape(1, -1) if single else arr
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise NetworkError(f"expected inputs of dimension {net.input_dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(h)):
        raise NetworkError("cannot evaluate a net at a non-finite input")
    for layer in net.layers:
        h = h @ layer.weight.T + layer.bias
        if layer.activation is not None:
            h = layer.activation.apply(h)
    return h[0] if single else h


@dataclass(frozen=True, eq=False)
class JacobianResult:
    matrix: np.ndarray
    on_boundary: bool
    point: np.ndarray


def _jacobian_at(net: ConstrainedNet, x: np.ndarray) -> tuple[np.ndarray, bool]:
    h = x
    jac = np.eye(x.size)
    on_boundary = False
    for layer in net.layers:
        z = layer.weight @ h + layer.bias
        jac = layer.weight @ jac
        if layer.activation is None:
            h = z
            continue
        act_jac, hit = layer.activation.jacobian(z)
        on_boundary = on_boundary or hit
        jac = act_jac @ jac
        h = layer.activation.apply(z.reshape(1, -1))[0]
    return jac, on_boundary


def jacobian(net: ConstrainedNet, x: Union[Sequence[float], np.ndarray]) -> JacobianResult:
    """A.e. Jacobian (outputs x inputs) as a product of per-layer Jacobians.

    A point on an activation boundary is moved off it by a small deterministic
    perturbation and the result is flagged.
    """
    point = np.asarray(x, dtype=float).reshape(-1)
    if point.size != net.input_dim:
        raise NetworkError(f"expected an input of dimension {net.input_dim}")
    if not np.all(np.isfinite(point)):
        raise NetworkError("cannot differentiate at a non-finite input")
    matrix, hit = _jacobian_at(net, point)
    if not hit:
        return JacobianResult(matrix, False, point)

    scale = 1e-7 * max(1.0, float(np.max(np.abs(point))))
    for attempt in range(8):
        direction = np.random.default_rng(attempt).standard_normal(point.size)
        moved = point + scale * direction / np.linalg.norm(direction)
        matrix, still = _jacobian_at(net, moved)
        if not still:
            logging.debug("Jacobian point on a boundary; perturbed by %.1e", scale)
            return JacobianResult(matrix, True, moved)
    logging.warning("Jacobian point stays on a boundary after perturbation")
    return JacobianResult(matrix, True, moved)


# ============================================================
# NORMS AND PROJECTIONS
# ============================================================

def spectral_norm(
    weight: np.ndarray,
    rel_tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    seed: Optional[int] = None,
) -> float:
    """Largest singular value by power iteration on W^T W from a seeded start.

    Power iteration approaches sigma_max from below; when it runs out of
    iterations the exact value from the SVD is returned instead.
    """
    w = np.atleast_2d(np.asarray(weight, dtype=float))
    rel_tol = config.POWER_ITERATION_REL_TOL if rel_tol is None else rel_tol
    max_iter = config.POWER_ITERATION_MAX_ITER if max_iter is None else max_iter
    seed = config.POWER_ITERATION_SEED if seed is None else seed
    if not np.any(w):
        return 0.0

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma = float(np.linalg.norm(w @ v))
    for _ in range(max_iter):
        u = w.T @ (w @ v)
        norm_u = float(np.linalg.norm(u))
        if norm_u == 0.0:
            break
        v = u / norm_u
        updated = float(np.linalg.norm(w @ v))
        if abs(updated - sigma) <= rel_tol * updated:
            return updated
        sigma = updated
    else:
        logging.warning("Power iteration stopped after %d iterations; using the SVD", max_iter)
        return exact_spectral_norm(w)
    return sigma


def exact_spectral_norm(weight: np.ndarray) -> float:
    """Largest singular value from the SVD."""
    w = np.atleast_2d(np.asarray(weight, dtype=float))
    if w.size == 0:
        return 0.0
    return float(svdvals(w)[0])


def operator_norm(weight: np.ndarray, p: Union[float, str]) -> float:
    """||W||_{p -> p}.

    Exact for p in {1, 2, inf} and for single-row or single-column matrices;
    otherwise the Riesz-Thorin bound ||W||_1^(1/p) ||W||_inf^(1 - 1/p).
    """
    p = parse_norm_index(p)
    w = np.atleast_2d(np.asarray(weight, dtype=float))
    if p == 1.0:
        return float(np.max(np.sum(np.abs(w), axis=0)))
    if math.isinf(p):
        return float(np.max(np.sum(np.abs(w), axis=1)))
    if p == 2.0:
        return exact_spectral_norm(w)
    if w.shape[0] == 1:
        return pnorm(w[0], dual_index(p))
    if w.shape[1] == 1:
        return pnorm(w[:, 0], p)
    norm_1 = float(np.max(np.sum(np.abs(w), axis=0)))
    norm_inf = float(np.max(np.sum(np.abs(w), axis=1)))
    return norm_1 ** (1.0 / p) * norm_inf ** (1.0 - 1.0 / p)


def operator_norm_is_exact(shape: tuple[int, int], p: Union[float, str]) -> bool:
    p = parse_norm_index(p)
    return p in (1.0, 2.0) or math.isinf(p) or 1 in shape


def project_pnorm(weight: np.ndarray, p: Union[float, str]) -> np.ndarray:
    """Scale W so that ||W||_p <= 1; matrices already inside are unchanged."""
    w = np.atleast_2d(np.asarray(weight, dtype=float))
    norm = operator_norm(w, p)
    return w / max(1.0, norm)


def orthogonality_residual(weight: np.ndarray) -> float:
    """||W^T W - I||_F for tall W, ||W W^T - I||_F for wide W."""
    w = np.atleast_2d(np.asarray(weight, dtype=float))
    gram = w.T @ w if w.shape[0] >= w.shape[1] else w @ w.T
    return float(np.linalg.norm(gram - np.eye(gram.shape[0])))


def project_orthogonal(
    weight: np.ndarray,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> np.ndarray:
    """Nearest (semi-)orthogonal matrix by Björck iteration, polar fallback."""
    tol = config.ORTHOGONAL_TOL if tol is None else tol
    max_iter = config.ORTHOGONAL_MAX_ITER if max_iter is None else max_iter
    w = np.atleast_2d(np.asarray(weight, dtype=float))
    if np.linalg.matrix_rank(w) < min(w.shape):
        raise NetworkError("rank deficient")

    wide = w.shape[0] < w.shape[1]
    x = w.T if wide else w
    x = x / spectral_norm(x)
    identity = np.eye(x.shape[1])
    residual = np.inf
    for iteration in range(max_iter):
        gram = x.T @ x
        residual = float(np.linalg.norm(gram - identity))
        if residual < tol:
            logging.debug("Björck orthogonalisation converged in %d steps", iteration)
            return x.T if wide else x
        if not np.isfinite(residual) or residual > 10.0:
            break
        x = x @ (3.0 * identity - gram) / 2.0

    logging.debug("Björck iteration stalled (residual %.3e); using polar factor", residual)
    unitary, _ = polar(w.T if wide else w)
    return unitary.T if wide else unitary


def project_net(net: ConstrainedNet) -> ConstrainedNet:
    """Apply the declared constraint to every layer."""
    spec = net.constraint
    if spec.kind == "none":
        return net
    if spec.kind == "pnorm":
        layers = tuple(layer.with_weight(project_pnorm(layer.weight, spec.p)) for layer in net.layers)
    else:
        layers = tuple(layer.with_weight(project_orthogonal(layer.weight)) for layer in net.layers)
    return ConstrainedNet(layers, spec)


@dataclass(frozen=True)
class LayerCheck:
    index: int
    shape: tuple[int, int]
    weight_norm: float
    orthogonality_residual: Optional[float]
    activation_lipschitz: float
    weight_ok: bool
    activation_ok: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "shape": list(self.shape),
            "weight_norm": self.weight_norm,
            "orthogonality_residual": self.orthogonality_residual,
            "activation_lipschitz": self.activation_lipschitz,
            "weight_ok": self.weight_ok,
            "activation_ok": self.activation_ok,
        }


@dataclass(frozen=True)
class ConstraintReport:
    constraint: ConstraintSpec
    norm_index: float
    layers: tuple[LayerCheck, ...]
    lipschitz_bound: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "constraint": self.constraint.to_dict(),
            "p": format_norm_index(self.norm_index),
            "layers": [layer.to_dict() for layer in self.layers],
            "lipschitz_bound": self.lipschitz_bound,
            "passed": self.passed,
        }


def check_constraints(net: ConstrainedNet, tol: Optional[float] = None) -> ConstraintReport:
    """Per-layer weight norms and activation Lipschitz constants.

    The naive Lipschitz bound is the product of all layer bounds.
    """
    tol = config.CONSTRAINT_TOLERANCE if tol is None else tol
    spec = net.constraint
    p = spec.norm_index
    checks = []
    bound = 1.0
    for index, layer in enumerate(net.layers):
        norm = operator_norm(layer.weight, p)
        residual = None
        weight_ok = True
        if spec.kind == "pnorm":
            weight_ok = norm <= 1.0 + tol
        elif spec.kind == "orthogonal":
            residual = orthogonality_residual(layer.weight)
            weight_ok = residual <= max(tol, config.ORTHOGONAL_TOL) * 10.0
        act_lip = 1.0
        if layer.activation is not None:
            act_lip = layer.activation.lipschitz(p, layer.out_dim)
        activation_ok = act_lip <= 1.0 + tol
        bound *= norm * act_lip
        if not weight_ok:
            logging.info("Layer %d weight norm %.6g violates %s", index, norm, spec.kind)
        if not activation_ok:
            logging.info("Layer %d activation is %.6g-Lipschitz", index, act_lip)
        checks.append(
            LayerCheck(
                index=index,
                shape=(layer.out_dim, layer.in_dim),
                weight_norm=norm,
                orthogonality_residual=residual,
                activation_lipschitz=act_lip,
                weight_ok=weight_ok,
                activation_ok=activation_ok,
            )
        )
    passed = all(c.weight_ok and c.activation_ok for c in checks)
    return ConstraintReport(spec, p, tuple(checks), bound, passed)


# ============================================================
# REGION ENUMERATION
# ============================================================

@dataclass(frozen=True)
class _Branch:
    """On one unit: constraints C z <= c and output T z + t."""

    constraint: np.ndarray
    rhs: np.ndarray
    transform: np.ndarray
    shift: np.ndarray


@dataclass(frozen=True)
class _Unit:
    indices: np.ndarray
    branches: tuple[_Branch, ...]


def _spline_branches(spline: LinearSpline1D) -> tuple[_Branch, ...]:
    knots = spline.knots
    slopes = spline.slopes
    if spline.is_affine:
        return (
            _Branch(
                np.zeros((0, 1)),
                np.zeros(0),
                np.array([[slopes[0]]]),
                np.array([spline.value_at_zero]),
            ),
        )
    branches = []
    for r, slope in enumerate(slopes):
        rows, rhs = [], []
        if r > 0:
            rows.append([-1.0])
            rhs.append(-knots[r - 1])
        if r < knots.size:
            rows.append([1.0])
            rhs.append(knots[r])
        anchor = knots[r - 1] if r > 0 else knots[0]
        value = evaluate(spline, anchor)
        branches.append(
            _Branch(
                np.array(rows),
                np.array(rhs),
                np.array([[slope]]),
                np.array([value - slope * anchor]),
            )
        )
    return tuple(branches)


def _layer_units(layer: Layer) -> list[_Unit]:
    width = layer.out_dim
    act = layer.activation
    identity = _Branch(np.zeros((0, 1)), np.zeros(0), np.eye(1), np.zeros(1))
    if act is None:
        return [_Unit(np.array([i]), (identity,)) for i in range(width)]
    if isinstance(act, ComponentwiseActivation):
        return [
            _Unit(np.array([i]), _spline_branches(s))
            for i, s in enumerate(act.neuron_splines(width))
        ]
    units = []
    if isinstance(act, GroupSort):
        g = act.group_size
        cut = width - act.passthrough
        for start in range(0, cut, g):
            branches = []
            for perm in itertools.permutations(range(g)):
                rows = np.zeros((g - 1, g))
                for k in range(g - 1):
                    rows[k, perm[k]] = 1.0
                    rows[k, perm[k + 1]] = -1.0
                transform = np.eye(g)[list(perm)]
                branches.append(_Branch(rows, np.zeros(g - 1), transform, np.zeros(g)))
            units.append(_Unit(np.arange(start, start + g), tuple(branches)))
        units.extend(_Unit(np.array([i]), (identity,)) for i in range(cut, width))
        return units
    if isinstance(act, Householder):
        m = act.v.size
        keep = _Branch(-act.v.reshape(1, -1), np.zeros(1), np.eye(m), np.zeros(m))
        flip = _Branch(act.v.reshape(1, -1), np.zeros(1), act.reflection, np.zeros(m))
        return [_Unit(np.arange(start, start + m), (keep, flip)) for start in range(0, width, m)]
    raise NetworkError(f"cannot enumerate regions of activation {act.kind!r}")


@dataclass(frozen=True, eq=False)
class RegionPiece:
    """One non-empty activation pattern and the affine map the net realises on it."""

    pattern: tuple[int, ...]
    jacobian: np.ndarray
    offset: np.ndarray
    p_opnorm: float
    witness: np.ndarray

    def to_dict(self) -> dict[str, Any]:
        return {
            "activation_pattern": list(self.pattern),
            "jacobian": self.jacobian.tolist(),
            "offset": self.offset.tolist(),
            "p_opnorm": self.p_opnorm,
            "witness_point": self.witness.tolist(),
        }


@dataclass(frozen=True, eq=False)
class RegionReport:
    p: float
    input_dim: int
    pieces: tuple[RegionPiece, ...]
    total_patterns: int
    pruned_branches: int
    lp_solves: int
    norm_exact: bool
    empty: tuple[tuple[int, ...], ...] = ()

    @property
    def empty_patterns(self) -> int:
        return len(self.empty)

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": format_norm_index(self.p),
            "input_dim": self.input_dim,
            "total_patterns": self.total_patterns,
            "empty_patterns": self.empty_patterns,
            "pruned_branches": self.pruned_branches,
            "lp_solves": self.lp_solves,
            "norm_exact": self.norm_exact,
            "affine_pieces": distinct_affine_pieces(self),
            "unit_norm_pieces": unit_norm_pieces(self),
            "pieces": [piece.to_dict() for piece in self.pieces],
            "empty": [
                {"activation_pattern": list(pattern), "witness_point": "empty"}
                for pattern in self.empty
            ],
        }


class _RegionWalker:
    """Depth-first search over activation patterns, pruning empty regions."""

    def __init__(self, net: ConstrainedNet, p: float) -> None:
        self.net = net
        self.p = p
        self.units = [_layer_units(layer) for layer in net.layers]
        self.pieces: list[RegionPiece] = []
        self.empty: list[tuple[int, ...]] = []
        self.pruned = 0
        self.lp_solves = 0

    def run(self) -> None:
        d = self.net.input_dim
        self._start_layer(
            0,
            np.eye(d),
            np.zeros(d),
            np.zeros((0, d)),
            np.zeros(0),
            np.zeros(d),
            (),
        )

    def _start_layer(self, k, M, m, G, h, witness, pattern) -> None:
        layer = self.net.layers[k]
        Z = layer.weight @ M
        zc = layer.weight @ m + layer.bias
        if k == len(self.net.layers) - 1:
            self._record(Z, zc, witness, pattern)
            return
        width = layer.out_dim
        out_M = np.zeros((width, M.shape[1]))
        out_m = np.zeros(width)
        self._descend(k, 0, Z, zc, out_M, out_m, G, h, witness, pattern)

    def _descend(self, k, u, Z, zc, out_M, out_m, G, h, witness, pattern) -> None:
        units = self.units[k]
        if u == len(units):
            self._start_layer(k + 1, out_M, out_m, G, h, witness, pattern)
            return
        unit = units[u]
        Zs, zs = Z[unit.indices], zc[unit.indices]
        for index, branch in enumerate(unit.branches):
            if branch.constraint.shape[0]:
                G_new = np.vstack((G, branch.constraint @ Zs))
                h_new = np.concatenate((h, branch.rhs - branch.constraint @ zs))
                found = self._interior_point(G_new, h_new, witness)
                if found is None:
                    self.pruned += 1
                    self._record_empty(k, u + 1, pattern + (index,))
                    continue
            else:
                G_new, h_new, found = G, h, witness
            next_M = out_M.copy()
            next_m = out_m.copy()
            next_M[unit.indices] = branch.transform @ Zs
            next_m[unit.indices] = branch.transform @ zs + branch.shift
            pattern_next = pattern + ((index,) if len(unit.branches) > 1 else ())
            self._descend(k, u + 1, Z, zc, next_M, next_m, G_new, h_new, found, pattern_next)

    def _record(self, J, offset, witness, pattern) -> None:
        self.pieces.append(
            RegionPiece(
                pattern=tuple(pattern),
                jacobian=J,
                offset=offset,
                p_opnorm=operator_norm(J, self.p),
                witness=witness,
            )
        )

    def _record_empty(self, k, u, prefix) -> None:
        """Every completion of a pruned prefix is an empty pattern."""
        remaining = list(self.units[k][u:])
        for units in self.units[k + 1 : len(self.net.layers) - 1]:
            remaining.extend(units)
        choices = [range(len(unit.branches)) for unit in remaining if len(unit.branches) > 1]
        for suffix in itertools.product(*choices):
            self.empty.append(tuple(prefix) + suffix)

    def _interior_point(self, G, h, witness) -> Optional[np.ndarray]:
        """A point with positive margin inside {G x <= h}, or None."""
        margin_tol = config.LP_MARGIN
        norms = np.linalg.norm(G, axis=1)
        flat = norms <= 1e-14
        if np.any(h[flat] < -config.CONSTRAINT_TOLERANCE):
            return None
        G, h, norms = G[~flat], h[~flat], norms[~flat]
        if G.shape[0] == 0:
            return witness

        slack = (h - G @ witness) / norms
        if np.min(slack) > margin_tol:
            return witness

        d = G.shape[1]
        if d == 1:
            g = G[:, 0]
            upper = np.min(h[g > 0] / g[g > 0]) if np.any(g > 0) else math.inf
            lower = np.max(h[g < 0] / g[g < 0]) if np.any(g < 0) else -math.inf
            if upper - lower <= 2.0 * margin_tol:
                return None
            if math.isinf(upper) and math.isinf(lower):
                return np.zeros(1)
            if math.isinf(upper):
                return np.array([lower + 1.0])
            if math.isinf(lower):
                return np.array([upper - 1.0])
            return np.array([0.5 * (lower + upper)])

        self.lp_solves += 1
        cost = np.zeros(d + 1)
        cost[-1] = -1.0
        a_ub = np.hstack((G, norms[:, None]))
        bounds = [(None, None)] * d + [(None, 1.0)]
        result = linprog(cost, A_ub=a_ub, b_ub=h, bounds=bounds, method="highs")
        if result.status != 0 or -result.fun <= margin_tol:
            return None
        point = np.asarray(result.x[:d], dtype=float)
        true_margin = float(np.min((h - G @ point) / norms))
        if true_margin <= 0.0:
            return None
        return point


def _pattern_budget(net: ConstrainedNet) -> int:
    """Number of activation patterns, computed without building the branches."""
    total = 1
    for layer in net.layers:
        act = layer.activation
        if act is None:
            continue
        if isinstance(act, ComponentwiseActivation):
            for spline in act.neuron_splines(layer.out_dim):
                total *= spline.region_count
        elif isinstance(act, GroupSort):
            groups = (layer.out_dim - act.passthrough) // act.group_size
            total *= math.factorial(act.group_size) ** groups
        elif isinstance(act, Householder):
            total *= 2 ** (layer.out_dim // act.v.size)
    return total


def enumerate_regions(net: ConstrainedNet, p: Union[float, str] = 2.0) -> RegionReport:
    """All non-empty activation patterns with their exact affine maps.

    Pieces are sorted by activation pattern.
    """
    p = parse_norm_index(p)
    neurons = net.hidden_neurons
    total = _pattern_budget(net)
    if neurons > config.ENUMERATION_MAX_NEURONS or total > config.ENUMERATION_MAX_PATTERNS:
        raise EnumerationBudgetError("net too large for enumeration")
    walker = _RegionWalker(net, p)
    walker.run()
    pieces = tuple(sorted(walker.pieces, key=lambda piece: piece.pattern))
    report = RegionReport(
        p=p,
        input_dim=net.input_dim,
        pieces=pieces,
        total_patterns=total,
        pruned_branches=walker.pruned,
        lp_solves=walker.lp_solves,
        norm_exact=operator_norm_is_exact((net.output_dim, net.input_dim), p),
        empty=tuple(sorted(walker.empty)),
    )
    logging.debug(
        "Enumerated %d pieces of %d patterns (%d LP solves)",
        len(pieces),
        total,
        walker.lp_solves,
    )
    return report


def _distinct(pieces: Sequence[RegionPiece]) -> list[RegionPiece]:
    kept: list[RegionPiece] = []
    for piece in pieces:
        if not any(
            np.allclose(piece.jacobian, other.jacobian, atol=1e-9, rtol=0.0)
            and np.allclose(piece.offset, other.offset, atol=1e-9, rtol=0.0)
            for other in kept
        ):
            kept.append(piece)
    return kept


def distinct_affine_pieces(report: RegionReport) -> int:
    return len(_distinct(report.pieces))


def unit_norm_pieces(report: RegionReport, tol: Optional[float] = None) -> int:
    """Number of distinct affine maps with ||J||_p >= 1 - tol."""
    tol = config.UNIT_NORM_TOLERANCE if tol is None else tol
    return len(_distinct([piece for piece in report.pieces if piece.p_opnorm >= 1.0 - tol]))


# ============================================================
# CONSTRUCTIONS
# ============================================================

def maxmin_as_spline_net() -> ConstrainedNet:
    """MaxMin as W2 s(W1 x) with W1 = W2 = [[1, 1], [1, -1]] / sqrt(2).

    s = (identity, -|.|) so the output is (min, max), matching GroupSort(2).
    """
    hadamard = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    neg_abs = LinearSpline1D(np.array([0.0]), np.array([0.0]), 1.0, -1.0)
    act = SplinePerNeuron((LinearSpline1D.identity(), neg_abs))
    layers = (
        Layer(hadamard, np.zeros(2), act),
        Layer(hadamard, np.zeros(2), None),
    )
    return ConstrainedNet(layers, ConstraintSpec.orthogonal())


def groupsort_as_maxmin_net(group_size: int) -> ConstrainedNet:
    """Odd-even transposition sort built from MaxMin stages.

    Each stage permutes the compared pairs to the front and applies
    GroupSort(2) to them; every mixing weight is a permutation matrix.
    """
    n = int(group_size)
    if n < 2:
        raise NetworkError("group size must be at least 2")
    identity = np.eye(n)
    layers = []
    previous = np.arange(n)
    for round_index in range(n):
        firsts = list(range(round_index % 2, n - 1, 2))
        if not firsts:
            continue
        paired = [i for first in firsts for i in (first, first + 1)]
        order = np.array(paired + [i for i in range(n) if i not in paired])
        # Stage input is h = x[previous]; bring x[order] to the front.
        weight = identity[np.argsort(previous)[order]]
        passthrough = n - len(paired)
        layers.append(Layer(weight, np.zeros(n), GroupSort(2, passthrough)))
        previous = order
    layers.append(Layer(identity[np.argsort(previous)], np.zeros(n), None))
    return ConstrainedNet(tuple(layers), ConstraintSpec.orthogonal())


# ============================================================
# RESTRICTION TO A LINE
# ============================================================

def _sort_group(splines: list[LinearSpline1D]) -> list[LinearSpline1D]:
    out = list(splines)
    n = len(out)
    for round_index in range(n):
        for first in range(round_index % 2, n - 1, 2):
            a, b = out[first], out[first + 1]
            out[first], out[first + 1] = pointwise_min(a, b), pointwise_max(a, b)
    return out


def restrict_to_line(
    net: ConstrainedNet,
    direction: Union[Sequence[float], np.ndarray],
    origin: Optional[Union[Sequence[float], np.ndarray]] = None,
) -> LinearSpline1D:
    """Exact spline t -> net(origin + t * direction) of a scalar-output net."""
    if net.output_dim != 1:
        raise NetworkError("restriction to a line needs a scalar-output net")
    u = np.asarray(direction, dtype=float).reshape(-1)
    x0 = np.zeros_like(u) if origin is None else np.asarray(origin, dtype=float).reshape(-1)
    if u.size != net.input_dim or x0.size != net.input_dim:
        raise NetworkError(f"direction and origin must have dimension {net.input_dim}")

    h = [LinearSpline1D.affine(float(ui), float(oi)) for ui, oi in zip(u, x0)]
    for layer in net.layers:
        z = [
            linear_combination(h, layer.weight[j].tolist(), float(layer.bias[j]))
            for j in range(layer.out_dim)
        ]
        act = layer.activation
        if act is None:
            h = z
        elif isinstance(act, ComponentwiseActivation):
            h = [compose(s, zj) for s, zj in zip(act.neuron_splines(len(z)), z)]
        elif isinstance(act, GroupSort):
            cut = len(z) - act.passthrough
            h = []
            for start in range(0, cut, act.group_size):
                h.extend(_sort_group(z[start:start + act.group_size]))
            h.extend(z[cut:])
        elif isinstance(act, Householder):
            m = act.v.size
            h = []
            for start in range(0, len(z), m):
                group = z[start:start + m]
                s = linear_combination(group, act.v.tolist())
                folded = pointwise_min(s, LinearSpline1D.constant(0.0))
                h.extend(
                    linear_combination([zk, folded], [1.0, -2.0 * float(vk)])
                    for zk, vk in zip(group, act.v)
                )
        else:
            raise NetworkError(f"cannot restrict activation {act.kind!r}")
    return h[0]
