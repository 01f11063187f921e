"""
Object attention: cascaded blocks that relate object feature columns to each
other. V is projected from the input, Q and K are projected from V, and the
γ-gated attention result is fused with V by concatenation (or summation).
"""

import logging
import math
from fractions import Fraction
from typing import List, Optional, Sequence, Union

import numpy as np

from config import FUSIONS
from core import ops
from core.autodiff import Param, Var
from errors import ConfigurationError, ShapeError
from utils.validation_utils import validate_alpha

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]


def xavier_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    """Uniform in ±sqrt(6 / (fan_in + fan_out)), shaped fan_out × fan_in."""
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def value_width(c_in: int, alpha: Fraction) -> int:
    """c_in / (2·alpha), rejecting configurations where it is not a positive integer."""
    ok, message = validate_alpha(c_in, Fraction(alpha))
    if not ok:
        raise ConfigurationError(message)
    return int(Fraction(c_in) / (2 * Fraction(alpha)))


def _affinity(q: Var, k: Var) -> Var:
    return ops.softmax_cols(ops.matmul(ops.transpose(q), k))


def attend(v: Var, q: Var, k: Var, n_units: int) -> Var:
    """V·softmax(QᵀK) computed per block of ``n_units`` columns."""
    blocks = zip(ops.split_cols(v, n_units), ops.split_cols(q, n_units), ops.split_cols(k, n_units))
    return ops.concat_cols([ops.matmul(vs, _affinity(qs, ks)) for vs, qs, ks in blocks])


class ObjectAttentionBlock:
    """One object attention block."""

    def __init__(self, c_in: int, alpha: Fraction, w_v: Param, w_q: Param, w_k: Param, gamma: Param,
                 biases: Optional[Sequence[Param]] = None, fusion: str = "cat"):
        if fusion not in FUSIONS:
            raise ConfigurationError(f"Unknown fusion {fusion!r}, expected one of {FUSIONS}")
        self.c_in = c_in
        self.alpha = Fraction(alpha)
        self.c_v = value_width(c_in, self.alpha)
        self.w_v = w_v
        self.w_q = w_q
        self.w_k = w_k
        self.gamma = gamma
        self.b_v, self.b_q, self.b_k = biases if biases else (None, None, None)
        self.fusion = fusion

    @property
    def output_channels(self) -> int:
        return 2 * self.c_v if self.fusion == "cat" else self.c_v

    @property
    def use_bias(self) -> bool:
        return self.b_v is not None

    def params(self) -> List[Param]:
        params = [self.w_v, self.w_q, self.w_k, self.gamma]
        if self.use_bias:
            params += [self.b_v, self.b_q, self.b_k]
        return params

    def rename(self, prefix: str) -> None:
        """Name params for checkpoints as ``{prefix}.Wv`` etc."""
        for param, suffix in ((self.w_v, "Wv"), (self.w_q, "Wq"), (self.w_k, "Wk"), (self.gamma, "gamma"),
                              (self.b_v, "bv"), (self.b_q, "bq"), (self.b_k, "bk")):
            if param is not None:
                param.name = f"{prefix}.{suffix}"

    def project(self, f) -> Var:
        """V = W_v f."""
        f = f if isinstance(f, Var) else ops.constant(f)
        if f.rows != self.c_in:
            raise ShapeError(f"Object attention block expects {self.c_in} input channels, got {f.rows}")
        return ops.linear(self.w_v, f, self.b_v)

    def attention(self, v: Var) -> Var:
        """β = softmax over the first index of QᵀK; every column sums to 1."""
        return _affinity(ops.linear(self.w_q, v, self.b_q), ops.linear(self.w_k, v, self.b_k))

    def forward(self, f, n_units: Optional[int] = None) -> Var:
        """Block output for ``f``, which may hold several samples side by side.

        With ``n_units`` set, every ``n_units`` consecutive columns are one
        sample and attention never crosses a sample boundary; the projections
        run once over all columns.
        """
        v = self.project(f)
        q = ops.linear(self.w_q, v, self.b_q)
        k = ops.linear(self.w_k, v, self.b_k)
        attended = attend(v, q, k, n_units or v.cols)
        attn = ops.scale_by_scalar_param(attended, self.gamma)
        if self.fusion == "cat":
            return ops.concat_rows(attn, v)
        return ops.add(attn, v)


def oab_new(c_in: int, alpha: Union[Fraction, int, str], rng_seed: Seed, fusion: str = "cat",
            use_bias: bool = False, prefix: str = "oam.0") -> ObjectAttentionBlock:
    """Build a block with seeded fan-based uniform weights and γ = 0."""
    alpha = Fraction(alpha)
    c_v = value_width(c_in, alpha)
    rng = np.random.default_rng(rng_seed)

    w_v = Param(xavier_uniform(rng, c_v, c_in))
    w_q = Param(xavier_uniform(rng, c_v, c_v))
    w_k = Param(xavier_uniform(rng, c_v, c_v))
    gamma = Param(np.zeros((1, 1)), decay_exempt=True)
    biases = None
    if use_bias:
        biases = [Param(np.zeros((c_v, 1)), decay_exempt=True) for _ in range(3)]

    block = ObjectAttentionBlock(c_in, alpha, w_v, w_q, w_k, gamma, biases=biases, fusion=fusion)
    block.rename(prefix)
    return block


class OamStack:
    """Cascaded attention blocks; an empty stack is the identity.

    Blocks are object attention blocks or any other relation block with
    ``c_in``, ``output_channels``, ``params()`` and ``forward(f, n_units)``.
    """

    def __init__(self, blocks: Sequence = ()):
        self.blocks = list(blocks)
        for t in range(1, len(self.blocks)):
            previous, current = self.blocks[t - 1], self.blocks[t]
            if current.c_in != previous.output_channels:
                raise ConfigurationError(
                    f"Block {t} expects {current.c_in} channels but block {t - 1} outputs {previous.output_channels}"
                )

    def __len__(self):
        return len(self.blocks)

    def output_channels(self, c_in: int) -> int:
        return self.blocks[-1].output_channels if self.blocks else c_in

    def params(self) -> List[Param]:
        return [p for block in self.blocks for p in block.params()]

    def forward(self, x, n_units: Optional[int] = None) -> Var:
        out = x if isinstance(x, Var) else ops.constant(x)
        for block in self.blocks:
            out = block.forward(out, n_units)
        return out


def stack_new(c_in: int, alphas: Sequence, seed: int, fusion: str = "cat", use_bias: bool = False) -> OamStack:
    """Chain blocks so that each block's input width is the previous block's output width."""
    children = np.random.SeedSequence(seed).spawn(len(alphas))
    blocks = []
    channels = c_in
    for t, (alpha, child) in enumerate(zip(alphas, children)):
        block = oab_new(channels, alpha, child, fusion=fusion, use_bias=use_bias, prefix=f"oam.{t}")
        blocks.append(block)
        channels = block.output_channels

    logger.debug(f"OAM stack {c_in} -> {channels} with alphas {[str(Fraction(a)) for a in alphas]}")
    return OamStack(blocks)
