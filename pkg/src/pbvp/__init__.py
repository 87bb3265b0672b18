"""Periodic boundary value problems ``-x'' = f(t, x, x')`` on [0, 1].

Green's-function fixed-point solver, lower/upper-solution certificates
and an independent shooting oracle.
"""

from .funcspace import GridFunction
from .kernel import LinearParams, make_params
from .operator import ProblemDef

__version__ = "0.1.0"

__all__ = ["GridFunction", "LinearParams", "ProblemDef", "make_params", "__version__"]
