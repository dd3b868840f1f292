"""Reduced geometry of symmetric backward Ricci flows and spliced breathers."""

from .errors import (ConfigError, DomainError, HorizonError, NumericalError, ParameterError,
                     RiccilabError)
from .models import GaussianStatic, ShrinkingSphere, exact_flow
from .flow import evolve_backward, flow_residual
from .splice import BreatherSpec, Diffeo, splice, junction_certificate
from .lgeodesic import LSolver, reduced_distance, reduced_field, identity_residuals
from .monitor import blowdown, reduced_volume, monotonicity_certificate

__version__ = "0.1.0"

__all__ = [
    "BreatherSpec", "ConfigError", "Diffeo", "DomainError", "GaussianStatic", "HorizonError",
    "LSolver", "NumericalError", "ParameterError", "RiccilabError", "ShrinkingSphere",
    "blowdown", "evolve_backward", "exact_flow", "flow_residual", "identity_residuals",
    "junction_certificate", "monotonicity_certificate", "reduced_distance", "reduced_field",
    "reduced_volume", "splice",
]
