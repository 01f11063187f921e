#!/usr/bin/env python3
"""
OTS Benchmark Runner
====================

Runner for the synthetic relation-learning benchmark: generate a
co-occurrence dataset, train the full model, checkpoint it, reload the
checkpoint and evaluate it against the acceptance threshold.
"""

import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

# Add src directory to Python path
current_dir = Path(__file__).parent.parent
src_dir = current_dir / "src"
sys.path.insert(0, str(src_dir))

from config import BenchmarkConfig, Config
from errors import AcceptanceError
from models.ots_model import OtsModel, build_model
from services.container_service import load_checkpoint, save_checkpoint
from services.dataset_service import SceneDataset, default_spec, generate_synthetic
from services.report_service import ReportService
from services.training_service import EvalResult, SgdConfig, TrainReport, evaluate, train

logger = logging.getLogger(__name__)

RELOAD_TOLERANCE = 1e-12


class BenchmarkRunner:
    """Main runner class for the synthetic benchmark."""

    def __init__(self, config: Optional[BenchmarkConfig] = None, sgd: Optional[SgdConfig] = None,
                 output_dir: Optional[str] = None):
        """Initialize the runner with configuration."""
        self.config = config or BenchmarkConfig()
        self.sgd = sgd or SgdConfig()
        self.output_dir = Path(output_dir or Config.OTS_OUTPUT_DIR)
        self.report_service = ReportService()
        self.setup_logging()

    def setup_logging(self):
        """Mirror log records into the benchmark directory."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(self.output_dir / "benchmark.log")
        handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
        logging.getLogger().addHandler(handler)
        self._log_handler = handler

    def close(self):
        logging.getLogger().removeHandler(self._log_handler)
        self._log_handler.close()

    def run_full_pipeline(self) -> EvalResult:
        """Run the complete benchmark; raises AcceptanceError below the threshold."""
        logger.info("Starting OTS benchmark...")

        try:
            # Step 1: Synthetic data
            train_set, eval_set = self._generate_data()

            # Step 2: Train
            model = build_model(self.config.model)
            report = self._train(model, train_set, eval_set)

            # Step 3: Checkpoint round trip
            reloaded = self._checkpoint_round_trip(model, eval_set)

            # Step 4: Evaluate the reloaded model
            result = self._evaluate(reloaded, eval_set)

            # Step 5: Reports
            self._generate_report(report, result, eval_set)

        except Exception as e:
            logger.error(f"Benchmark failed: {e}")
            raise

        if result.overall_accuracy < self.config.min_accuracy:
            raise AcceptanceError(
                f"benchmark accuracy {result.overall_accuracy:.4f} below {self.config.min_accuracy}"
            )
        logger.info("OTS benchmark completed successfully!")
        return result

    def _generate_data(self):
        logger.info("Generating synthetic co-occurrence data...")
        model = self.config.model
        spec = default_spec(num_classes=model.num_classes, n_objects=model.n_objects, channels=model.c_in,
                            seed=self.config.seed)
        dataset = generate_synthetic(spec, self.config.n_train + self.config.n_eval)
        return dataset.split(self.config.n_train)

    def _train(self, model: OtsModel, train_set: SceneDataset, eval_set: SceneDataset) -> TrainReport:
        logger.info(f"Training on {len(train_set)} samples for {self.sgd.epochs} epochs...")
        return train(model, train_set, self.sgd, seed=self.config.seed, eval_dataset=eval_set)

    def _checkpoint_round_trip(self, model: OtsModel, eval_set: SceneDataset) -> OtsModel:
        """Save, reload and confirm the reloaded logits match on the first eval sample."""
        path = self.output_dir / "model.otsf"
        save_checkpoint(model, path)
        reloaded = load_checkpoint(path)

        features, _ = eval_set[0]
        before = model.forward_logits(features).value
        after = reloaded.forward_logits(features).value
        drift = float(np.max(np.abs(before - after)))
        if drift > RELOAD_TOLERANCE:
            raise AcceptanceError(f"reloaded checkpoint logits drift by {drift:.3e}")
        logger.info(f"Checkpoint round trip ok, max logit drift {drift:.1e}")
        return reloaded

    def _evaluate(self, model: OtsModel, eval_set: SceneDataset) -> EvalResult:
        logger.info(f"Evaluating on {len(eval_set)} samples...")
        return evaluate(model, eval_set, threads=Config.threads())

    def _generate_report(self, report: TrainReport, result: EvalResult, eval_set: SceneDataset):
        report.to_csv(self.output_dir / "train_report.csv")
        text = self.report_service.render_train_report(report)
        text += self.report_service.render_eval_report(result, eval_set.class_names)
        self.report_service.save_report(text, self.output_dir / "benchmark_report.txt")
        sys.stdout.write(text)


def cmd_benchmark(args) -> int:
    """CLI adapter for run.py."""
    config = BenchmarkConfig(seed=args.seed)
    runner = BenchmarkRunner(config, SgdConfig(epochs=args.epochs), output_dir=args.out)
    try:
        runner.run_full_pipeline()
    finally:
        runner.close()
    return 0


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    BenchmarkRunner().run_full_pipeline()
