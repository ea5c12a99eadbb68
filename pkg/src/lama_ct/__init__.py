"""Sparse-view CT reconstruction by safeguarded learned alternating minimization.

The hot projector kernels come from a compiled extension when it is
available; ``lama_ct.BACKEND`` says which one was loaded (set
``LAMA_CT_PURE=1`` to force the numpy implementation).
"""

from ._backend import BACKEND
from .errors import ConfigError, LamaError, LineSearchFailure, NumericalFailure
from .objective import Iterate, Problem
from .regnet import ConvLayer, RegularizerNet
from .solver import SolveResult, SolverConfig, lama_solve
from .tomo import Geometry, ViewSelector

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "LamaError",
    "LineSearchFailure",
    "NumericalFailure",
    "Iterate",
    "Problem",
    "ConvLayer",
    "RegularizerNet",
    "SolveResult",
    "SolverConfig",
    "lama_solve",
    "Geometry",
    "ViewSelector",
]
