"""
Relation blocks compared against object attention: a self-attention block with
separate query, key and value projections and a gated residual, and a
non-local block with scaled embedded-Gaussian affinities. Both keep the input
width, so they cascade into an OamStack like object attention blocks do.
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from config import ATTENTIONS
from core import ops
from core.autodiff import Param, Var
from errors import ConfigurationError, ShapeError
from models.oam import OamStack, Seed, attend, xavier_uniform

logger = logging.getLogger(__name__)

QK_REDUCTION = 8
VALUE_REDUCTION = 2


def _input(f, c_in: int, kind: str) -> Var:
    f = f if isinstance(f, Var) else ops.constant(f)
    if f.rows != c_in:
        raise ShapeError(f"{kind} block expects {c_in} input channels, got {f.rows}")
    return f


def _reduced(c_in: int, factor: int) -> int:
    if c_in % factor != 0:
        raise ConfigurationError(f"Input width {c_in} is not divisible by {factor}")
    return c_in // factor


def _rename(pairs, prefix: str) -> None:
    for param, suffix in pairs:
        if param is not None:
            param.name = f"{prefix}.{suffix}"


class SelfAttentionBlock:
    """f + γ·W_o(V·softmax(QᵀK)) with Q, K of width c_qk and V of width c_v."""

    def __init__(self, w_q: Param, w_k: Param, w_v: Param, w_o: Param, gamma: Param,
                 biases: Optional[Sequence[Param]] = None):
        self.w_q, self.w_k, self.w_v, self.w_o = w_q, w_k, w_v, w_o
        self.gamma = gamma
        self.b_q, self.b_k, self.b_v, self.b_o = biases if biases else (None, None, None, None)
        if w_o.shape != (self.c_in, self.c_v):
            raise ConfigurationError(f"Output projection {w_o.shape} must map {self.c_v} back to {self.c_in}")

    @property
    def c_in(self) -> int:
        return self.w_q.shape[1]

    @property
    def c_qk(self) -> int:
        return self.w_q.shape[0]

    @property
    def c_v(self) -> int:
        return self.w_v.shape[0]

    @property
    def output_channels(self) -> int:
        return self.c_in

    @property
    def use_bias(self) -> bool:
        return self.b_q is not None

    def params(self) -> List[Param]:
        params = [self.w_q, self.w_k, self.w_v, self.w_o, self.gamma]
        if self.use_bias:
            params += [self.b_q, self.b_k, self.b_v, self.b_o]
        return params

    def rename(self, prefix: str) -> None:
        _rename(((self.w_q, "Wq"), (self.w_k, "Wk"), (self.w_v, "Wv"), (self.w_o, "Wo"), (self.gamma, "gamma"),
                 (self.b_q, "bq"), (self.b_k, "bk"), (self.b_v, "bv"), (self.b_o, "bo")), prefix)

    def forward(self, f, n_units: Optional[int] = None) -> Var:
        f = _input(f, self.c_in, "Self-attention")
        q = ops.linear(self.w_q, f, self.b_q)
        k = ops.linear(self.w_k, f, self.b_k)
        v = ops.linear(self.w_v, f, self.b_v)
        out = ops.linear(self.w_o, attend(v, q, k, n_units or f.cols), self.b_o)
        return ops.add(ops.scale_by_scalar_param(out, self.gamma), f)


class NonLocalBlock:
    """f + γ·W_z(g·softmax(θᵀφ / sqrt(c))) with θ, φ, g of width c = c_in / 2.

    γ gates the output projection and starts at 0, so a fresh block is the
    identity.
    """

    def __init__(self, w_theta: Param, w_phi: Param, w_g: Param, w_z: Param, gamma: Param,
                 biases: Optional[Sequence[Param]] = None):
        self.w_theta, self.w_phi, self.w_g, self.w_z = w_theta, w_phi, w_g, w_z
        self.gamma = gamma
        self.b_theta, self.b_phi, self.b_g, self.b_z = biases if biases else (None, None, None, None)
        if w_z.shape != (self.c_in, self.c):
            raise ConfigurationError(f"Output projection {w_z.shape} must map {self.c} back to {self.c_in}")

    @property
    def c_in(self) -> int:
        return self.w_theta.shape[1]

    @property
    def c(self) -> int:
        return self.w_theta.shape[0]

    @property
    def output_channels(self) -> int:
        return self.c_in

    @property
    def use_bias(self) -> bool:
        return self.b_theta is not None

    def params(self) -> List[Param]:
        params = [self.w_theta, self.w_phi, self.w_g, self.w_z, self.gamma]
        if self.use_bias:
            params += [self.b_theta, self.b_phi, self.b_g, self.b_z]
        return params

    def rename(self, prefix: str) -> None:
        _rename(((self.w_theta, "Wtheta"), (self.w_phi, "Wphi"), (self.w_g, "Wg"), (self.w_z, "Wz"),
                 (self.gamma, "gamma"), (self.b_theta, "btheta"), (self.b_phi, "bphi"), (self.b_g, "bg"),
                 (self.b_z, "bz")), prefix)

    def forward(self, f, n_units: Optional[int] = None) -> Var:
        f = _input(f, self.c_in, "Non-local")
        # 1/sqrt(c) folded into θ keeps the affinity a plain QᵀK
        theta = ops.mul_scalar(ops.linear(self.w_theta, f, self.b_theta), 1.0 / math.sqrt(self.c))
        phi = ops.linear(self.w_phi, f, self.b_phi)
        g = ops.linear(self.w_g, f, self.b_g)
        out = ops.linear(self.w_z, attend(g, theta, phi, n_units or f.cols), self.b_z)
        return ops.add(ops.scale_by_scalar_param(out, self.gamma), f)


def _gate_and_biases(use_bias: bool, widths: Sequence[int]):
    gamma = Param(np.zeros((1, 1)), decay_exempt=True)
    biases = [Param(np.zeros((w, 1)), decay_exempt=True) for w in widths] if use_bias else None
    return gamma, biases


def self_attention_new(c_in: int, rng_seed: Seed, use_bias: bool = False, prefix: str = "oam.0") -> SelfAttentionBlock:
    """Q, K at c_in/8 and V at c_in/2, seeded fan-based uniform weights, γ = 0."""
    c_qk, c_v = _reduced(c_in, QK_REDUCTION), _reduced(c_in, VALUE_REDUCTION)
    rng = np.random.default_rng(rng_seed)
    w_q = Param(xavier_uniform(rng, c_qk, c_in))
    w_k = Param(xavier_uniform(rng, c_qk, c_in))
    w_v = Param(xavier_uniform(rng, c_v, c_in))
    w_o = Param(xavier_uniform(rng, c_in, c_v))
    gamma, biases = _gate_and_biases(use_bias, (c_qk, c_qk, c_v, c_in))

    block = SelfAttentionBlock(w_q, w_k, w_v, w_o, gamma, biases=biases)
    block.rename(prefix)
    return block


def nonlocal_new(c_in: int, rng_seed: Seed, use_bias: bool = False, prefix: str = "oam.0") -> NonLocalBlock:
    """θ, φ, g at c_in/2, seeded fan-based uniform weights, γ = 0."""
    c = _reduced(c_in, VALUE_REDUCTION)
    rng = np.random.default_rng(rng_seed)
    w_theta = Param(xavier_uniform(rng, c, c_in))
    w_phi = Param(xavier_uniform(rng, c, c_in))
    w_g = Param(xavier_uniform(rng, c, c_in))
    w_z = Param(xavier_uniform(rng, c_in, c))
    gamma, biases = _gate_and_biases(use_bias, (c, c, c, c_in))

    block = NonLocalBlock(w_theta, w_phi, w_g, w_z, gamma, biases=biases)
    block.rename(prefix)
    return block


def relation_stack_new(kind: str, c_in: int, depth: int, seed: int, use_bias: bool = False) -> OamStack:
    """``depth`` blocks of one kind, each seeded from its own child sequence."""
    builders = {"self-attention": self_attention_new, "nonlocal": nonlocal_new}
    if kind not in builders:
        raise ConfigurationError(f"Unknown relation block {kind!r}, expected one of {ATTENTIONS}")
    if depth < 0:
        raise ConfigurationError(f"Block depth must be non-negative, got {depth}")

    children = np.random.SeedSequence(seed).spawn(depth)
    blocks = [builders[kind](c_in, child, use_bias=use_bias, prefix=f"oam.{t}") for t, child in enumerate(children)]
    logger.debug(f"{kind} stack of {depth} blocks at width {c_in}")
    return OamStack(blocks)
