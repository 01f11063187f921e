"""
Numerical core: matrices, the gradient tape, and gradient checking.
"""

from .autodiff import Matrix, Param, Tape, Var, as_matrix, backward, constant, zero_grads
from .gradcheck import gradcheck
from . import ops

__all__ = [
    'Matrix',
    'Param',
    'Tape',
    'Var',
    'as_matrix',
    'backward',
    'constant',
    'zero_grads',
    'gradcheck',
    'ops',
]
