"""Threshold martingales: simulation, diagnostics and filtering of forecast paths."""
from .errors import (DivergenceError, DomainError, IllConditionedWarning, IncompletePathError,
                     SchemaError, SingularDesignError, StationarityError, ThreshmartError,
                     UndefinedStatisticError)

__version__ = "0.1.0"

__all__ = [
    "DivergenceError", "DomainError", "IllConditionedWarning", "IncompletePathError",
    "SchemaError", "SingularDesignError", "StationarityError", "ThreshmartError",
    "UndefinedStatisticError", "__version__",
]
