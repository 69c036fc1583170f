"""Sparse variational Gaussian processes with orthogonal inducing points."""

from ._solvegp import *  # noqa: F401,F403
from ._solvegp import __doc__  # noqa: F401
