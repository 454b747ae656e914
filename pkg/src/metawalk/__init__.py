"""Birth-death random walks with drift: exact stationary and transient laws, simulation and bounds."""

__version__ = "0.1.0"

from .errors import AccuracyError, FactorizationError, GuardError, MetawalkError, ModelError, StationaryError
from .model import (
    Boundary,
    ChainSpec,
    IntegerInterval,
    contact_spec,
    drift_profile,
    example_walk_spec,
    figure1_spec,
)
from .stationary import ProbVector, gaussian_reference, stationary_distribution
from .transient import TransientPropagator, factorize, transient_distribution

__all__ = [
    "__version__",
    "AccuracyError",
    "FactorizationError",
    "GuardError",
    "MetawalkError",
    "ModelError",
    "StationaryError",
    "Boundary",
    "ChainSpec",
    "IntegerInterval",
    "contact_spec",
    "drift_profile",
    "example_walk_spec",
    "figure1_spec",
    "ProbVector",
    "gaussian_reference",
    "stationary_distribution",
    "TransientPropagator",
    "factorize",
    "transient_distribution",
]
