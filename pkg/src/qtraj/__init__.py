"""Simulation and verification of discrete and continuous quantum trajectories."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AsymptoticInconsistencyError,
    ConfigError,
    ConsistencyError,
    DimensionError,
    DomainError,
    JumpUndefinedError,
    QtrajError,
    ValidationError,
)
from .linalg import DensityMatrix, ToleranceProfile, partial_trace_h0, tensor_product  # noqa: E402
from .observable import SpectralObservable  # noqa: E402
from .limits import LimitCoefficients, LimitMaps  # noqa: E402
from .interaction import HamiltonianModel, UnitaryFamily, build_from_coefficients  # noqa: E402
from .discrete import sample_ensemble, sample_path, transition  # noqa: E402
from .sde import SdeConfig, integrate_ensemble, integrate_path  # noqa: E402
from .generators import TestFunction, generator_gap, master_solution  # noqa: E402
