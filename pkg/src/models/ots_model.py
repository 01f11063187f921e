"""
Full recognition model: object attention stack, an aggregator that collapses
the object axis, and a linear recognition head producing class logits.
"""

import logging
from typing import Dict, List, Sequence, Union

import numpy as np

from config import AGGREGATORS, ATTENTIONS, ModelConfig
from core import ops
from core.autodiff import Matrix, Param, Var
from errors import ConfigurationError, ShapeError, UsageError
from models.gram import GramLayer, gram_new
from models.oam import OamStack, Seed, stack_new, xavier_uniform
from models.ofam import ObjectFeatures
from models.relation_blocks import relation_stack_new
from utils.format_utils import format_count

logger = logging.getLogger(__name__)


class FlattenLinear:
    """Flatten the C×N map and apply one full linear map (the "FC" substitute)."""

    def __init__(self, c_in: int, n_units: int, c_out: int, rng_seed: Seed, use_bias: bool = False):
        rng = np.random.default_rng(rng_seed)
        self.c_in = c_in
        self.n_units = n_units
        self.weight = Param(xavier_uniform(rng, c_out, c_in * n_units), name="fc.weight")
        self.bias = Param(np.zeros((c_out, 1)), name="fc.bias", decay_exempt=True) if use_bias else None

    @property
    def output_width(self) -> int:
        return self.weight.shape[0]

    def params(self) -> List[Param]:
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def forward(self, f: Var) -> Var:
        if f.rows != self.c_in or f.cols % self.n_units != 0:
            raise ShapeError(f"FC aggregator expects input {(self.c_in, self.n_units)}, got {f.shape}")
        flat = ops.concat_cols([ops.flatten_col(x) for x in ops.split_cols(f, self.n_units)])
        return ops.linear(self.weight, flat, self.bias)


class MaxAvgPool:
    """Per-channel max and mean over the object axis, stacked into 2·C values."""

    def __init__(self, c_in: int, n_units: int):
        self.c_in = c_in
        self.n_units = n_units

    @property
    def output_width(self) -> int:
        return 2 * self.c_in

    def params(self) -> List[Param]:
        return []

    def forward(self, f: Var) -> Var:
        if f.rows != self.c_in or f.cols % self.n_units != 0:
            raise ShapeError(f"Pooling aggregator expects input {(self.c_in, self.n_units)}, got {f.shape}")
        return ops.concat_cols([
            ops.concat_rows(ops.row_max(x), ops.mul_scalar(ops.row_sum(x), 1.0 / self.n_units))
            for x in ops.split_cols(f, self.n_units)
        ])


Aggregator = Union[GramLayer, FlattenLinear, MaxAvgPool]


def aggregator_width(aggregator: Aggregator) -> int:
    if isinstance(aggregator, GramLayer):
        return aggregator.c_out
    return aggregator.output_width


class OtsModel:
    """OAM → aggregator → linear head."""

    def __init__(self, oam: OamStack, aggregator: Aggregator, head_weight: Param, head_bias: Param,
                 config: ModelConfig):
        self.oam = oam
        self.aggregator = aggregator
        self.head_weight = head_weight
        self.head_bias = head_bias
        self.config = config

        oam_out = oam.output_channels(config.c_in)
        if aggregator.c_in != oam_out or aggregator.n_units != config.n_objects:
            raise ConfigurationError(
                f"Aggregator input {(aggregator.c_in, aggregator.n_units)} does not match OAM output "
                f"{(oam_out, config.n_objects)}"
            )
        if head_weight.shape[1] != aggregator_width(aggregator):
            raise ConfigurationError(
                f"Head width {head_weight.shape[1]} does not match aggregator width {aggregator_width(aggregator)}"
            )

    @property
    def num_classes(self) -> int:
        return self.head_weight.shape[0]

    def params(self) -> List[Param]:
        return self.oam.params() + self.aggregator.params() + [self.head_weight, self.head_bias]

    def named_params(self) -> Dict[str, Param]:
        return {p.name: p for p in self.params()}

    def _checked(self, x: Union[ObjectFeatures, Matrix, Var]) -> Var:
        if isinstance(x, ObjectFeatures):
            x = x.matrix
        x = x if isinstance(x, Var) else ops.constant(x)
        expected = (self.config.c_in, self.config.n_objects)
        if x.shape != expected:
            raise ShapeError(f"Model expects object features of shape {expected}, got {x.shape}")
        return x

    def forward_logits(self, x: Union[ObjectFeatures, Matrix, Var]) -> Var:
        """K×1 class logits for one sample of object features."""
        return self._logits(self._checked(x))

    def forward_batch(self, samples: Sequence[Union[ObjectFeatures, Matrix, Var]]) -> Var:
        """K×B logits for B samples; column b belongs to ``samples[b]``.

        The samples run as one C×(B·N) pass, so the projections and the head
        are single matrix products while attention stays within each sample.
        """
        if not samples:
            raise UsageError("forward_batch needs at least one sample")
        checked = [self._checked(x) for x in samples]
        if len(checked) == 1:
            return self._logits(checked[0])
        return self._logits(ops.constant(np.hstack([x.value for x in checked])))

    def _logits(self, x: Var) -> Var:
        representation = self.aggregator.forward(self.oam.forward(x, self.config.n_objects))
        if self.config.head_relu:
            representation = ops.relu(representation)
        return ops.linear(self.head_weight, representation, self.head_bias)


def build_attention(config: ModelConfig, seed: int) -> OamStack:
    """Object attention cascade from ``alphas``, or ``attention_depth`` comparison blocks."""
    if config.attention == "oab":
        return stack_new(config.c_in, config.alphas, seed, fusion=config.fusion, use_bias=config.use_bias)
    if config.attention in ATTENTIONS:
        return relation_stack_new(config.attention, config.c_in, config.attention_depth, seed,
                                  use_bias=config.use_bias)
    raise ConfigurationError(f"Unknown attention {config.attention!r}, expected one of {ATTENTIONS}")


def build_aggregator(config: ModelConfig, c_in: int, rng_seed: Seed) -> Aggregator:
    if config.aggregator == "gram":
        return gram_new(c_in, config.n_objects, config.c_out, rng_seed, use_bias=config.use_bias)
    if config.aggregator == "fc":
        return FlattenLinear(c_in, config.n_objects, config.c_out, rng_seed, use_bias=config.use_bias)
    if config.aggregator == "pool":
        return MaxAvgPool(c_in, config.n_objects)
    raise ConfigurationError(f"Unknown aggregator {config.aggregator!r}, expected one of {AGGREGATORS}")


def build_model(config: ModelConfig) -> OtsModel:
    """Instantiate a seeded model from its configuration."""
    oam_seed, aggregator_seed, head_seed = np.random.SeedSequence(config.seed).spawn(3)

    oam = build_attention(config, int(oam_seed.generate_state(1)[0]))
    aggregator = build_aggregator(config, oam.output_channels(config.c_in), aggregator_seed)

    width = aggregator_width(aggregator)
    rng = np.random.default_rng(head_seed)
    head_weight = Param(xavier_uniform(rng, config.num_classes, width), name="head.weight")
    head_bias = Param(np.zeros((config.num_classes, 1)), name="head.bias", decay_exempt=True)

    model = OtsModel(oam, aggregator, head_weight, head_bias, config)
    logger.info(
        f"Built OTS model: {config.c_in}x{config.n_objects} -> {config.attention}({len(oam)} blocks) -> "
        f"{config.aggregator}({width}) -> {config.num_classes} classes, "
        f"{format_count(sum(p.size for p in model.params()))} parameters"
    )
    return model
