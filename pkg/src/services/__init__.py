"""
Services for the OTS recognition system.
"""

from .report_service import ReportService
from .training_service import SgdConfig, SgdOptimizer, TrainReport, cross_entropy, evaluate, train
from .dataset_service import CooccurrenceSpec, SceneDataset, default_spec, generate_synthetic

__all__ = [
    'ReportService',
    'SgdConfig',
    'SgdOptimizer',
    'TrainReport',
    'cross_entropy',
    'evaluate',
    'train',
    'CooccurrenceSpec',
    'SceneDataset',
    'default_spec',
    'generate_synthetic',
]
