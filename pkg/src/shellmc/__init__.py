"""Monte Carlo grey transport in spherical shells with adjoint importance sampling."""
import os

# TBB in this environment is too old for numba and only produces warnings.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .errors import (  # noqa: E402
    ConfigError,
    DegenerateImportance,
    DomainError,
    NumericalError,
    SingularSystem,
)
from .specfun import expint_ei  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateImportance",
    "DomainError",
    "NumericalError",
    "SingularSystem",
    "expint_ei",
]
