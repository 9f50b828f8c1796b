"""Core modules for CPWL splines, min-max lattices, constrained nets and experiments."""

__all__ = [
    # config module exports
    "load_config",
    "apply_config",
    "configure_logging",
    "CONFIG_PATH",
    # errors module exports
    "LipsplineError",
    "SplineError",
    "LatticeError",
    "DecompositionError",
    "NetworkError",
    "EnumerationBudgetError",
    "ExperimentError",
    "SchemaError",
    # cpwl1d module exports
    "LinearSpline1D",
    "SlopeProfile",
    "evaluate",
    "lipschitz",
    "tv2",
    "compose",
    "pointwise_max",
    "pointwise_min",
    "spline_from_samples",
    "simplify",
    "slope_profile",
    # lattice module exports
    "AffinePiece",
    "LatticeCPWL",
    "InterpolationProblem",
    "holder_witness",
    "build_interpolant",
    "evaluate_lattice",
    "lattice_to_relu_net",
    # decompose module exports
    "CompositionChain",
    "normalize_outer_slopes",
    "case_split",
    "decompose",
    "verify_chain",
    # lipnet module exports
    "ConstrainedNet",
    "ConstraintSpec",
    "Layer",
    "forward",
    "jacobian",
    "spectral_norm",
    "project_pnorm",
    "project_orthogonal",
    "check_constraints",
    "enumerate_regions",
    "maxmin_as_spline_net",
    "groupsort_as_maxmin_net",
    "restrict_to_line",
    # analysis module exports
    "SawtoothSpec",
    "build_sawtooth",
    "build_sawtooth_net",
    "tv2_bound_experiment",
    "unit_piece_campaign",
]

from .config import load_config, apply_config, configure_logging, CONFIG_PATH
from .errors import (
    LipsplineError,
    SplineError,
    LatticeError,
    DecompositionError,
    NetworkError,
    EnumerationBudgetError,
    ExperimentError,
    SchemaError,
)
from .cpwl1d import (
    LinearSpline1D,
    SlopeProfile,
    evaluate,
    lipschitz,
    tv2,
    compose,
    pointwise_max,
    pointwise_min,
    spline_from_samples,
    simplify,
    slope_profile,
)
from .lattice import (
    AffinePiece,
    LatticeCPWL,
    InterpolationProblem,
    holder_witness,
    build_interpolant,
    evaluate_lattice,
    lattice_to_relu_net,
)
from .decompose import CompositionChain, normalize_outer_slopes, case_split, decompose, verify_chain
from .lipnet import (
    ConstrainedNet,
    ConstraintSpec,
    Layer,
    forward,
    jacobian,
    spectral_norm,
    project_pnorm,
    project_orthogonal,
    check_constraints,
    enumerate_regions,
    maxmin_as_spline_net,
    groupsort_as_maxmin_net,
    restrict_to_line,
)
from .analysis import (
    SawtoothSpec,
    build_sawtooth,
    build_sawtooth_net,
    tv2_bound_experiment,
    unit_piece_campaign,
)
