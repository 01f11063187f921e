"""
Training service: cross-entropy loss, SGD with momentum and step decay, the
mini-batch training loop, and evaluation.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from config import Config
from core import ops
from core.autodiff import Param, Tape, Var, zero_grads
from errors import NumericalError, UsageError
from models.ots_model import OtsModel
from services.dataset_service import SceneDataset

logger = logging.getLogger(__name__)

# Samples per taped forward pass in training and per logits pass in prediction
TRAIN_CHUNK = 32
PREDICT_CHUNK = 64


class SgdConfig(BaseModel):
    """Training recipe."""

    model_config = ConfigDict(frozen=True)

    lr0: float = Field(default=0.1, gt=0)
    momentum: float = Field(default=0.9, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    step_epochs: int = Field(default=10, gt=0)
    step_factor: float = Field(default=0.1, gt=0)
    epochs: int = Field(default=40, gt=0)
    batch_size: int = Field(default=256, gt=0)

    def learning_rate(self, epoch: int) -> float:
        """lr0 · step_factor^⌊epoch / step_epochs⌋."""
        return self.lr0 * self.step_factor ** (epoch // self.step_epochs)


def cross_entropy(logits: Var, label: int) -> Var:
    """−log softmax(logits)[label] via log-sum-exp."""
    if logits.cols != 1:
        raise UsageError(f"cross_entropy expects K×1 logits, got {logits.shape}")
    num_classes = logits.rows
    if not (0 <= label < num_classes):
        raise UsageError(f"label {label} outside [0, {num_classes})")

    one_hot = np.zeros((1, num_classes))
    one_hot[0, label] = 1.0
    return ops.sub(ops.logsumexp_cols(logits), ops.matmul(one_hot, logits))


def cross_entropy_columns(logits: Var, labels: Sequence[int]) -> Var:
    """1×B per-sample cross-entropies for K×B logits, column b scored against ``labels[b]``."""
    num_classes, batch = logits.shape
    if len(labels) != batch:
        raise UsageError(f"{len(labels)} labels for {batch} logit columns")
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise UsageError(f"labels outside [0, {num_classes})")

    one_hot = np.zeros((num_classes, batch))
    one_hot[labels, np.arange(batch)] = 1.0
    return ops.sub(ops.logsumexp_cols(logits), ops.col_sum(ops.mul(one_hot, logits)))


class SgdOptimizer:
    """SGD with momentum; weight decay skips exempt params (γ and biases).

    v ← momentum·v + grad + weight_decay·value   (no decay for exempt params)
    value ← value − lr(epoch)·v
    """

    def __init__(self, params: Sequence[Param], config: SgdConfig):
        self.params = list(params)
        self.config = config
        self.velocity: Dict[int, np.ndarray] = {p.id: np.zeros(p.shape) for p in self.params}

    def zero_grad(self):
        zero_grads(self.params)

    def step(self, epoch: int):
        lr = self.config.learning_rate(epoch)
        for param in self.params:
            update = param.grad
            if not param.decay_exempt:
                update = update + self.config.weight_decay * param.value
            velocity = self.config.momentum * self.velocity[param.id] + update
            self.velocity[param.id] = velocity
            param.assign(param.value - lr * velocity)


@dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    train_loss: float
    train_accuracy: float
    eval_accuracy: float


@dataclass
class EvalResult:
    overall_accuracy: float
    per_class_accuracy: List[float]
    class_mean_accuracy: float
    class_counts: List[int]
    confusion: np.ndarray  # true × predicted

    def per_class_frame(self, class_names: Sequence[str]) -> pd.DataFrame:
        return pd.DataFrame({
            "category": list(class_names),
            "samples": self.class_counts,
            "accuracy": self.per_class_accuracy,
        })


@dataclass
class TrainReport:
    seed: int
    config: dict
    epochs: List[EpochRecord] = field(default_factory=list)
    per_class_accuracy: List[float] = field(default_factory=list)
    final: Optional[EvalResult] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(record) for record in self.epochs],
                            columns=["epoch", "learning_rate", "train_loss", "train_accuracy", "eval_accuracy"])

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")


def predict(model: OtsModel, dataset: SceneDataset, threads: Optional[int] = None) -> np.ndarray:
    """Argmax-of-logits class for every sample; shards contiguous slices over threads."""
    threads = threads or Config.threads()
    n = len(dataset)

    def run(indices: range) -> List[int]:
        predicted = []
        for start in range(indices.start, indices.stop, PREDICT_CHUNK):
            chunk = range(start, min(start + PREDICT_CHUNK, indices.stop))
            logits = model.forward_batch([dataset[i][0] for i in chunk])
            predicted.extend(int(k) for k in np.argmax(logits.value, axis=0))
        return predicted

    if threads <= 1 or n < 2:
        return np.array(run(range(n)), dtype=np.int64)

    bounds = np.linspace(0, n, min(threads, n) + 1).astype(int)
    shards = [range(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]
    with ThreadPoolExecutor(max_workers=len(shards)) as pool:
        results = list(pool.map(run, shards))
    return np.array([p for shard in results for p in shard], dtype=np.int64)


def evaluate(model: OtsModel, dataset: SceneDataset, threads: Optional[int] = None) -> EvalResult:
    """Overall sample accuracy, per-class accuracy, and their unweighted class mean.

    Classes with no samples report 0.0 and are left out of the class mean.
    """
    if dataset.num_classes != model.num_classes:
        raise UsageError(f"Dataset has {dataset.num_classes} classes, model predicts {model.num_classes}")
    predictions = predict(model, dataset, threads)
    labels = np.array(dataset.labels, dtype=np.int64)
    k = dataset.num_classes

    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    counts = confusion.sum(axis=1)
    correct = np.diag(confusion)
    per_class = [float(correct[c] / counts[c]) if counts[c] else 0.0 for c in range(k)]
    populated = [per_class[c] for c in range(k) if counts[c]]

    return EvalResult(
        overall_accuracy=float(correct.sum() / len(labels)),
        per_class_accuracy=per_class,
        class_mean_accuracy=float(np.mean(populated)) if populated else 0.0,
        class_counts=[int(c) for c in counts],
        confusion=confusion,
    )


def train(model: OtsModel, dataset: SceneDataset, config: SgdConfig, seed: int,
          eval_dataset: Optional[SceneDataset] = None, chunk_size: int = TRAIN_CHUNK) -> TrainReport:
    """Seeded mini-batch SGD; the batch loss is the mean of per-sample cross-entropies.

    A batch is taped in chunks of ``chunk_size`` samples, each chunk run as one
    batched forward pass with its summed loss scaled by 1/batch, so gradients
    accumulate to the batch-mean gradient before one optimizer step. The chunk
    size changes speed and memory only.
    """
    if chunk_size < 1:
        raise UsageError(f"chunk_size must be positive, got {chunk_size}")
    if len(dataset) == 0:
        raise UsageError("Cannot train on an empty dataset")
    if dataset.num_classes != model.num_classes:
        raise UsageError(f"Dataset has {dataset.num_classes} classes, model predicts {model.num_classes}")

    if eval_dataset is None:
        eval_dataset = dataset
    rng = np.random.default_rng(seed)
    optimizer = SgdOptimizer(model.params(), config)
    report = TrainReport(seed=seed, config={"sgd": config.model_dump(), "model": model.config.to_dict()})

    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        total_loss = 0.0
        correct = 0

        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            optimizer.zero_grad()
            for lo in range(0, len(batch), chunk_size):
                samples = [dataset[int(index)] for index in batch[lo:lo + chunk_size]]
                labels = [label for _, label in samples]
                with Tape() as tape:
                    logits = model.forward_batch([features for features, _ in samples])
                    losses = cross_entropy_columns(logits, labels)
                    scaled = ops.mul_scalar(ops.sum_all(losses), 1.0 / len(batch))
                tape.backward(scaled)
                total_loss += float(losses.value.sum())
                correct += int(np.sum(np.argmax(logits.value, axis=0) == np.asarray(labels)))
            optimizer.step(epoch)
            logger.debug(f"epoch {epoch} batch {start // config.batch_size}: {len(batch)} samples")

        train_loss = total_loss / len(dataset)
        if not math.isfinite(train_loss):
            raise NumericalError(f"Training diverged at epoch {epoch}")
        result = evaluate(model, eval_dataset)
        record = EpochRecord(epoch, config.learning_rate(epoch), train_loss, correct / len(dataset),
                             result.overall_accuracy)
        report.epochs.append(record)
        report.final = result
        logger.info(
            f"Epoch {epoch + 1}/{config.epochs}: lr {record.learning_rate:.0e}, loss {train_loss:.4f}, "
            f"train acc {record.train_accuracy:.3f}, eval acc {record.eval_accuracy:.3f}"
        )

    report.per_class_accuracy = list(report.final.per_class_accuracy)
    return report
