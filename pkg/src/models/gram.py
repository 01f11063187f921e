"""
Global relation aggregation: a strip depthwise convolution whose kernel spans
all object positions of a channel, followed by a pointwise projection to the
scene representation vector.
"""

import logging
import math
from typing import List

import numpy as np

from core import ops
from core.autodiff import Param, Var
from errors import ConfigurationError, ShapeError
from models.oam import Seed, xavier_uniform

logger = logging.getLogger(__name__)


class GramLayer:
    """Strip depthwise (c_in × n_units) + pointwise (c_out × c_in)."""

    def __init__(self, depthwise: Param, pointwise: Param, depthwise_bias: Param = None, pointwise_bias: Param = None):
        self.depthwise = depthwise
        self.pointwise = pointwise
        self.depthwise_bias = depthwise_bias
        self.pointwise_bias = pointwise_bias
        if pointwise.shape[1] != depthwise.shape[0]:
            raise ConfigurationError(f"Pointwise {pointwise.shape} does not follow depthwise {depthwise.shape}")

    @property
    def c_in(self) -> int:
        return self.depthwise.shape[0]

    @property
    def n_units(self) -> int:
        return self.depthwise.shape[1]

    @property
    def c_out(self) -> int:
        return self.pointwise.shape[0]

    @property
    def use_bias(self) -> bool:
        return self.depthwise_bias is not None

    def params(self) -> List[Param]:
        params = [self.depthwise, self.pointwise]
        if self.use_bias:
            params += [self.depthwise_bias, self.pointwise_bias]
        return params

    def forward(self, f) -> Var:
        """c_out × B for B samples of c_in × n_units laid side by side."""
        f = f if isinstance(f, Var) else ops.constant(f)
        if f.rows != self.c_in or f.cols % self.n_units != 0:
            raise ShapeError(f"GRAM expects input {(self.c_in, self.n_units)}, got {f.shape}")

        # c_in × B, one strip response per sample
        mid = ops.concat_cols([ops.row_sum(ops.mul(self.depthwise, x)) for x in ops.split_cols(f, self.n_units)])
        if self.use_bias:
            mid = ops.add_bias(mid, self.depthwise_bias)
        return ops.linear(self.pointwise, mid, self.pointwise_bias)


def gram_new(c_in: int, n_units: int, c_out: int, rng_seed: Seed, use_bias: bool = False) -> GramLayer:
    """Seeded fan-based uniform initialization; biases start at zero."""
    if min(c_in, n_units, c_out) < 1:
        raise ConfigurationError(f"GRAM dimensions must be positive, got ({c_in}, {n_units}, {c_out})")
    rng = np.random.default_rng(rng_seed)

    # one strip kernel per channel: fan_in = n_units, fan_out = 1
    bound = math.sqrt(6.0 / (n_units + 1))
    depthwise = Param(rng.uniform(-bound, bound, size=(c_in, n_units)), name="gram.depthwise")
    pointwise = Param(xavier_uniform(rng, c_out, c_in), name="gram.pointwise")

    depthwise_bias = pointwise_bias = None
    if use_bias:
        depthwise_bias = Param(np.zeros((c_in, 1)), name="gram.depthwise_bias", decay_exempt=True)
        pointwise_bias = Param(np.zeros((c_out, 1)), name="gram.pointwise_bias", decay_exempt=True)

    return GramLayer(depthwise, pointwise, depthwise_bias, pointwise_bias)
