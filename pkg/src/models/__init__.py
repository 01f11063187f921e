"""
Model components of the object-to-scene pipeline.
"""

from .ofam import BinaryMask, FeatureMap, ObjectFeatures, ScoreMap, aggregate, compute_mask, ofam
from .oam import ObjectAttentionBlock, OamStack, oab_new, stack_new
from .gram import GramLayer, gram_new
from .relation_blocks import NonLocalBlock, SelfAttentionBlock, nonlocal_new, relation_stack_new, self_attention_new
from .ots_model import FlattenLinear, MaxAvgPool, OtsModel, build_model

__all__ = [
    'BinaryMask',
    'FeatureMap',
    'ObjectFeatures',
    'ScoreMap',
    'aggregate',
    'compute_mask',
    'ofam',
    'ObjectAttentionBlock',
    'OamStack',
    'oab_new',
    'stack_new',
    'GramLayer',
    'gram_new',
    'SelfAttentionBlock',
    'NonLocalBlock',
    'self_attention_new',
    'nonlocal_new',
    'relation_stack_new',
    'FlattenLinear',
    'MaxAvgPool',
    'OtsModel',
    'build_model',
]
