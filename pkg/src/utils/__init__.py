"""
Utility functions for the OTS recognition system.
"""

from .format_utils import *
from .validation_utils import *

__all__ = [
    'format_millions',
    'round_millions',
    'validate_score_map',
    'validate_feature_pair',
    'validate_alpha',
]
