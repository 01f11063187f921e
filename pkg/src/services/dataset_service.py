"""
Scene datasets and the synthetic co-occurrence generator.

Synthetic samples carry class signal only in which objects are present; each
present object contributes its shared embedding plus Gaussian noise, absent
objects are zero columns exactly as object feature aggregation emits them.
"""

import logging
from collections.abc import Sequence as SequenceABC
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import ShapeError, UsageError
from models.ofam import ObjectFeatures
from utils.validation_utils import validate_labels, validate_presence

logger = logging.getLogger(__name__)

INDOOR_7 = ("bathroom", "bedroom", "corridor", "dining room", "kitchen", "living room", "office")

Sample = Tuple[ObjectFeatures, int]


class CooccurrenceSpec(BaseModel):
    """Class-conditional object presence model."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    num_classes: int = Field(gt=0)
    presence: np.ndarray  # K × C′ probabilities
    object_embeddings: np.ndarray  # C × C′
    noise_sigma: float = Field(ge=0.0)
    seed: int = 0
    class_names: Tuple[str, ...] = ()

    @model_validator(mode="after")
    def check_shapes(self) -> "CooccurrenceSpec":
        presence = np.asarray(self.presence, dtype=np.float64)
        ok, message = validate_presence(presence)
        if not ok:
            raise ValueError(message)
        if presence.shape[0] != self.num_classes:
            raise ValueError(f"presence has {presence.shape[0]} rows for {self.num_classes} classes")
        if self.object_embeddings.ndim != 2 or self.object_embeddings.shape[1] != presence.shape[1]:
            raise ValueError(
                f"object_embeddings {self.object_embeddings.shape} must have {presence.shape[1]} columns"
            )
        if self.class_names and len(self.class_names) != self.num_classes:
            raise ValueError(f"{len(self.class_names)} class names for {self.num_classes} classes")
        return self

    @property
    def object_count(self) -> int:
        return self.presence.shape[1]

    @property
    def channel_count(self) -> int:
        return self.object_embeddings.shape[0]

    def names(self) -> Tuple[str, ...]:
        return self.class_names or tuple(f"class_{k}" for k in range(self.num_classes))


@dataclass
class SceneDataset:
    samples: Sequence[Sample]
    class_names: Tuple[str, ...]
    object_count: int
    channel_count: int
    labels: List[int] = field(init=False)

    def __post_init__(self):
        self.class_names = tuple(self.class_names)
        self.labels = [int(label) for _, label in _label_view(self.samples)]
        ok, message = validate_labels(self.labels, self.num_classes)
        if not ok:
            raise UsageError(message)
        if isinstance(self.samples, list):
            expected = (self.channel_count, self.object_count)
            for i, (features, _) in enumerate(self.samples):
                if features.matrix.shape != expected:
                    raise ShapeError(f"Sample {i} has shape {features.matrix.shape}, expected {expected}")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> Sample:
        return self.samples[index]

    def __iter__(self) -> Iterator[Sample]:
        return (self.samples[i] for i in range(len(self.samples)))

    def subset(self, indices: Sequence[int]) -> "SceneDataset":
        return SceneDataset([self.samples[i] for i in indices], self.class_names, self.object_count,
                            self.channel_count)

    def split(self, n_first: int) -> Tuple["SceneDataset", "SceneDataset"]:
        """First ``n_first`` samples and the rest."""
        if not (0 < n_first < len(self)):
            raise UsageError(f"Cannot split {len(self)} samples at {n_first}")
        if isinstance(self.samples, SyntheticSamples):
            head, tail = self.samples.split(n_first)
            return (SceneDataset(head, self.class_names, self.object_count, self.channel_count),
                    SceneDataset(tail, self.class_names, self.object_count, self.channel_count))
        return self.subset(range(n_first)), self.subset(range(n_first, len(self)))


class SyntheticSamples(SequenceABC):
    """Lazily materialized synthetic samples; sample i depends only on its own seed."""

    def __init__(self, spec: CooccurrenceSpec, labels: np.ndarray, masks: np.ndarray,
                 seeds: Sequence[np.random.SeedSequence]):
        self.spec = spec
        self.labels = labels
        self.masks = masks
        self.seeds = list(seeds)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        mask = self.masks[index]
        rng = np.random.default_rng(self.seeds[index])
        embeddings = self.spec.object_embeddings

        matrix = np.zeros(embeddings.shape)
        matrix[:, mask] = embeddings[:, mask] + rng.normal(0.0, self.spec.noise_sigma,
                                                           size=(embeddings.shape[0], int(mask.sum())))
        matrix.flags.writeable = False
        present = mask.copy()
        present.flags.writeable = False
        return ObjectFeatures(matrix, present), int(self.labels[index])

    def split(self, n_first: int) -> Tuple["SyntheticSamples", "SyntheticSamples"]:
        return (SyntheticSamples(self.spec, self.labels[:n_first], self.masks[:n_first], self.seeds[:n_first]),
                SyntheticSamples(self.spec, self.labels[n_first:], self.masks[n_first:], self.seeds[n_first:]))


def _label_view(samples: Sequence[Sample]):
    if isinstance(samples, SyntheticSamples):
        return ((None, label) for label in samples.labels)
    return samples


def generate_synthetic(spec: CooccurrenceSpec, n_samples: int) -> SceneDataset:
    """Draw classes uniformly, objects by Bernoulli presence, features as embedding plus noise."""
    if n_samples < 1:
        raise UsageError(f"n_samples must be positive, got {n_samples}")

    draw_seed, noise_seed = np.random.SeedSequence(spec.seed).spawn(2)
    rng = np.random.default_rng(draw_seed)
    labels = rng.integers(0, spec.num_classes, size=n_samples)
    masks = rng.random((n_samples, spec.object_count)) < spec.presence[labels]

    samples = SyntheticSamples(spec, labels, masks, noise_seed.spawn(n_samples))
    logger.info(
        f"Generated {n_samples} synthetic samples: {spec.num_classes} classes, "
        f"{spec.channel_count}x{spec.object_count}, mean {masks.sum(axis=1).mean():.1f} objects per sample"
    )
    return SceneDataset(samples, spec.names(), spec.object_count, spec.channel_count)


def default_spec(num_classes: int = 7, n_objects: int = 150, channels: int = 1024, noise_sigma: float = 0.1,
                 seed: int = 7, exclusive: int = 5, shared: int = 3, common: Optional[int] = None,
                 class_names: Optional[Sequence[str]] = None) -> CooccurrenceSpec:
    """Mix of class-exclusive objects, objects shared by neighbouring classes, common objects and clutter.

    Objects are laid out as ``exclusive`` per class, then ``shared`` per
    neighbouring class pair (k, k+1 mod K), then ``common`` objects present in
    every class at the same rate, then low-rate background clutter.
    ``common`` defaults to 30, or to whatever fits after the class-specific
    objects when fewer slots remain.
    """
    if common is None:
        common = max(0, min(30, n_objects - num_classes * (exclusive + shared)))
    needed = num_classes * (exclusive + shared) + common
    if needed > n_objects:
        raise UsageError(f"{needed} structured objects do not fit in {n_objects} object slots")

    presence = np.full((num_classes, n_objects), 0.03)
    for k in range(num_classes):
        start = k * exclusive
        presence[k, start:start + exclusive] = 0.6

    offset = num_classes * exclusive
    for k in range(num_classes):
        start = offset + k * shared
        presence[k, start:start + shared] = 0.6
        presence[(k + 1) % num_classes, start:start + shared] = 0.6

    offset += num_classes * shared
    presence[:, offset:offset + common] = 0.5

    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    embeddings = rng.standard_normal((channels, n_objects))

    if class_names is None:
        class_names = INDOOR_7 if num_classes == len(INDOOR_7) else ()
    return CooccurrenceSpec(num_classes=num_classes, presence=presence, object_embeddings=embeddings,
                            noise_sigma=noise_sigma, seed=seed, class_names=tuple(class_names))
