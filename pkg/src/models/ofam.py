"""
Object feature aggregation: per-object feature vectors from a backbone feature
map and a segmentation score map.

Storage is objects × units for scores and channels × units for features; each
unit is assigned to the object(s) with the highest score there, and each object
vector is the score-weighted mean of the units it won.
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.autodiff import Matrix, as_matrix
from errors import ShapeError
from utils.validation_utils import validate_feature_pair, validate_score_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ScoreMap:
    matrix: Matrix

    def __post_init__(self):
        matrix = as_matrix(self.matrix, "score map")
        ok, message = validate_score_map(matrix)
        if not ok:
            raise ShapeError(message)
        object.__setattr__(self, "matrix", matrix)

    @property
    def object_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def unit_count(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class FeatureMap:
    matrix: Matrix

    def __post_init__(self):
        object.__setattr__(self, "matrix", as_matrix(self.matrix, "feature map"))

    @property
    def channel_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def unit_count(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    matrix: Matrix


@dataclass(frozen=True, eq=False)
class ObjectFeatures:
    matrix: Matrix  # C × C′
    present: np.ndarray  # bool, length C′

    @property
    def channel_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def object_count(self) -> int:
        return self.matrix.shape[1]


def compute_mask(s: ScoreMap) -> BinaryMask:
    """1 where an object attains its unit's maximum score; ties keep every maximum."""
    scores = s.matrix
    mask = (scores == scores.max(axis=0, keepdims=True)).astype(np.float64)
    mask.flags.writeable = False
    return BinaryMask(mask)


def aggregate(f: FeatureMap, s: ScoreMap, m: BinaryMask) -> ObjectFeatures:
    """Score-weighted mean of the units each object won; absent objects get zero columns."""
    ok, message = validate_feature_pair(f.matrix, s.matrix)
    if not ok:
        raise ShapeError(message)
    if m.matrix.shape != s.matrix.shape:
        raise ShapeError(f"Mask shape {m.matrix.shape} does not match score map {s.matrix.shape}")

    weights = m.matrix * s.matrix  # C′ × N
    denominator = weights.sum(axis=1)
    present = denominator > 0

    numerator = f.matrix @ weights.T  # C × C′
    features = np.zeros_like(numerator)
    features[:, present] = numerator[:, present] / denominator[present]
    features.flags.writeable = False
    present.flags.writeable = False

    return ObjectFeatures(features, present)


def ofam(f: FeatureMap, s: ScoreMap) -> ObjectFeatures:
    """Mask then aggregate."""
    if f.unit_count != s.unit_count:
        raise ShapeError(f"Unit count mismatch: features have N={f.unit_count}, scores have N={s.unit_count}")

    features = aggregate(f, s, compute_mask(s))
    absent = int((~features.present).sum())
    if absent:
        logger.debug(f"{absent} of {s.object_count} objects won no unit")
    return features
