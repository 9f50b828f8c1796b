"""Exception hierarchy shared by the core modules and the CLI."""

from __future__ import annotations


class LipsplineError(Exception):
    """Base class for every error raised by lipspline."""


class SplineError(LipsplineError, ValueError):
    """Invalid scalar spline data or operation."""


class LatticeError(LipsplineError, ValueError):
    """Invalid lattice, interpolation problem or norm index."""


class DecompositionError(LipsplineError, ValueError):
    """A spline cannot be decomposed, or a reduction step misbehaved."""


class NetworkError(LipsplineError, ValueError):
    """Invalid network layout, input or constraint request."""


class EnumerationBudgetError(NetworkError):
    """The net has too many activation patterns to enumerate."""


class ExperimentError(LipsplineError, ValueError):
    """Experiment parameters outside their admissible range."""


class SchemaError(LipsplineError, ValueError):
    """A JSON document does not match its schema."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
