"""
Validation utility functions.
"""

from fractions import Fraction
from typing import Sequence

import numpy as np


def validate_score_map(matrix: np.ndarray) -> tuple[bool, str]:
    """Validate a segmentation score map (objects × units)."""
    if matrix.ndim != 2:
        return False, f"Score map must be 2-D, got {matrix.ndim}-D"

    if matrix.shape[0] < 1 or matrix.shape[1] < 1:
        return False, f"Score map needs at least one object and one unit, got {matrix.shape}"

    if not np.all(np.isfinite(matrix)):
        return False, "Score map contains non-finite scores"

    if np.any(matrix < 0):
        return False, "Score map must be nonnegative; apply softmax to signed logits first"

    return True, "Score map is valid"


def validate_feature_pair(features: np.ndarray, scores: np.ndarray) -> tuple[bool, str]:
    """Validate that a feature map and a score map are co-registered."""
    if features.ndim != 2:
        return False, f"Feature map must be 2-D, got {features.ndim}-D"

    if features.shape[1] != scores.shape[1]:
        return False, f"Unit count mismatch: features have N={features.shape[1]}, scores have N={scores.shape[1]}"

    return True, "Feature pair is valid"


def validate_alpha(c_in: int, alpha: Fraction) -> tuple[bool, str]:
    """Validate that c_in / (2·alpha) is a positive integer."""
    if alpha <= 0:
        return False, f"alpha must be positive, got {alpha}"

    c_v = Fraction(c_in) / (2 * alpha)
    if c_v.denominator != 1 or c_v < 1:
        return False, f"c_in={c_in} with alpha={alpha} gives non-integral value width {c_v}"

    return True, "Compression factor is valid"


def validate_presence(presence: np.ndarray) -> tuple[bool, str]:
    """Validate a class × object presence-probability matrix."""
    if presence.ndim != 2:
        return False, "Presence matrix must be 2-D"

    if np.any(presence < 0) or np.any(presence > 1):
        return False, "Presence probabilities must lie in [0, 1]"

    unique_rows = np.unique(presence, axis=0)
    if unique_rows.shape[0] != presence.shape[0]:
        return False, "Two classes share an identical presence row"

    return True, "Presence matrix is valid"


def validate_labels(labels: Sequence[int], num_classes: int) -> tuple[bool, str]:
    """Validate dataset labels."""
    for i, label in enumerate(labels):
        if not (0 <= label < num_classes):
            return False, f"Sample {i} has label {label} outside [0, {num_classes})"

    return True, "Labels are valid"
