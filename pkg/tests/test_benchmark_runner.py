"""
Tests for the synthetic relation-learning benchmark runner.
"""

import pytest

from config import BenchmarkConfig, ModelConfig
from errors import AcceptanceError
from scripts.benchmark_runner import BenchmarkRunner
from services.training_service import SgdConfig


def small_runner(tmp_path, min_accuracy):
    config = BenchmarkConfig(n_train=60, n_eval=30, seed=7, min_accuracy=min_accuracy,
                             model=ModelConfig(c_in=16, n_objects=30, c_out=8, num_classes=3))
    return BenchmarkRunner(config, SgdConfig(epochs=2, batch_size=16), output_dir=str(tmp_path))


class TestBenchmarkRunner:
    def test_pipeline_writes_artifacts(self, tmp_path):
        runner = small_runner(tmp_path, min_accuracy=0.0)
        try:
            result = runner.run_full_pipeline()
        finally:
            runner.close()
        assert sum(result.class_counts) == 30
        for name in ("model.otsf", "model.yaml", "train_report.csv", "benchmark_report.txt", "benchmark.log"):
            assert (tmp_path / name).exists()

    def test_threshold_miss(self, tmp_path):
        runner = small_runner(tmp_path, min_accuracy=1.01)
        try:
            with pytest.raises(AcceptanceError):
                runner.run_full_pipeline()
        finally:
            runner.close()

    @pytest.mark.slow
    def test_default_benchmark_learns_relations(self, tmp_path):
        runner = BenchmarkRunner(output_dir=str(tmp_path))
        try:
            result = runner.run_full_pipeline()
        finally:
            runner.close()
        assert result.overall_accuracy >= 0.90
