"""qinn: weight-constrained neural networks from trigonometric angle
combinations, with statevector reference circuits, expressibility analysis,
and an FGSM attack/defense harness."""

__version__ = "0.1.0"

from .errors import (CapacityError, ConfigurationError, DataError,
                     DimensionError, FormatError, GraphStateError,
                     NumericError, QinnError)
from .models import ModelSpec, build, variable_count_report
from .tensor import Tensor
from .trigweights import AngleBank, CombinationSpec

__all__ = [
    "AngleBank", "CapacityError", "CombinationSpec", "ConfigurationError",
    "DataError", "DimensionError", "FormatError", "GraphStateError",
    "ModelSpec", "NumericError", "QinnError", "Tensor", "build",
    "variable_count_report", "__version__",
]
