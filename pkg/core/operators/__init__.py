"""
Eigenproblem operators: the abstract term interface and the spherical diffusion assembly.
"""

from .base_operator import BaseOperator, OperatorTerm
from .diffusion import OUTER_BOUNDARIES, OperatorSet, assemble_operators

__all__ = ["BaseOperator", "OperatorTerm", "OperatorSet", "assemble_operators",
           "OUTER_BOUNDARIES"]
