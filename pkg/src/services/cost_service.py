"""
Closed-form parameter and FLOP accounting for the attention blocks and
aggregators the model can be built with.

One FLOP is one multiply-accumulate of a linear map. Softmax, concatenation,
scaling, bias adds and other elementwise work count zero. Biases, when
requested, add one parameter per output channel of each 1x1 projection.
"""

import logging
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, List, Sequence, Union

from models.oam import value_width
from utils.format_utils import round_millions

logger = logging.getLogger(__name__)

REFERENCE_CHANNELS = 1024
REFERENCE_UNITS = 150
REFERENCE_REPRESENTATION = 2048
GATE_SUFFIX = ".gamma"


@dataclass(frozen=True)
class CostReport:
    name: str
    params: int
    flops: int
    table: str = ""

    def __post_init__(self):
        if self.params < 0 or self.flops < 0:
            raise ValueError(f"Costs must be nonnegative, got params={self.params}, flops={self.flops}")

    @property
    def params_m(self) -> Decimal:
        return round_millions(self.params)

    @property
    def flops_m(self) -> Decimal:
        return round_millions(self.flops)


def cost_oab(c_in: int, alpha: Union[Fraction, int, str], n: int, fusion: str = "cat", bias: bool = False,
             name: str = "Object Attention Block") -> CostReport:
    """V, Q, K projections per unit plus the QᵀK and Vβ products.

    Fusion does not change the cost: concatenation and summation are both free.
    """
    c_v = value_width(c_in, Fraction(alpha))
    weights = c_in * c_v + 2 * c_v * c_v
    params = weights + (3 * c_v if bias else 0)
    flops = n * weights + 2 * c_v * n * n
    return CostReport(name, params, flops)


def cost_oab_chain(c_in: int, alphas: Sequence, n: int, fusion: str = "cat", bias: bool = False,
                   name: str = "Object Attention Block") -> CostReport:
    """Cascaded blocks, each block's input width being the previous block's output width."""
    reports = []
    channels = c_in
    for alpha in alphas:
        reports.append(cost_oab(channels, alpha, n, fusion=fusion, bias=bias))
        c_v = value_width(channels, Fraction(alpha))
        channels = 2 * c_v if fusion == "cat" else c_v
    return combine(name, reports)


def cost_self_attention(c_in: int, c_qk: int, c_v: int, c_out: int, n: int, bias: bool = False,
                        name: str = "Self-attention") -> CostReport:
    """Q, K, V projections of the input, output projection of the attended values."""
    weights = 2 * c_in * c_qk + c_in * c_v + c_v * c_out
    params = weights + ((2 * c_qk + c_v + c_out) if bias else 0)
    flops = n * weights + n * n * (c_qk + c_v)
    return CostReport(name, params, flops)


def cost_nonlocal(c_in: int, c: int, c_out: int, n: int, bias: bool = False, name: str = "Non-local") -> CostReport:
    """θ, φ, g embeddings of width c plus the output projection W."""
    weights = 3 * c_in * c + c * c_out
    params = weights + ((3 * c + c_out) if bias else 0)
    flops = n * weights + 2 * c * n * n
    return CostReport(name, params, flops)


def cost_gram(c: int, n: int, c_out: int, bias: bool = False, name: str = "GRAM") -> CostReport:
    weights = c * n + c * c_out
    params = weights + ((c + c_out) if bias else 0)
    return CostReport(name, params, weights)


def cost_fc(c: int, n: int, c_out: int, bias: bool = False, name: str = "FC") -> CostReport:
    weights = c * n * c_out
    return CostReport(name, weights + (c_out if bias else 0), weights)


def cost_pool(c: int, n: int, name: str = "Max & Avg. Pooling") -> CostReport:
    # one comparison or addition per element for each of the two pools
    return CostReport(name, 0, 2 * c * n)


def combine(name: str, reports: Iterable[CostReport], table: str = "") -> CostReport:
    reports = list(reports)
    return CostReport(name, sum(r.params for r in reports), sum(r.flops for r in reports), table)


def with_table(report: CostReport, table: str, name: str = None) -> CostReport:
    return CostReport(name or report.name, report.params, report.flops, table)


def count_instantiated(layer) -> int:
    """Number of linear-map parameter scalars a constructed layer actually stores.

    Attention gates (``*.gamma``) are not linear maps and are not counted.
    """
    return sum(param.size for param in layer.params() if not param.name.endswith(GATE_SUFFIX))


def reference_preset(bias: bool = True) -> List[CostReport]:
    """Every cost row of the comparison tables that the closed forms reproduce.

    The printed parameter counts include the 1x1 convolution biases, so the
    preset counts them by default.
    """
    c, n, c_out = REFERENCE_CHANNELS, REFERENCE_UNITS, REFERENCE_REPRESENTATION
    default_chain = (Fraction(2), Fraction(1, 2))

    self_attention = cost_self_attention(c, 128, 512, c, n, bias=bias)
    nonlocal_block = cost_nonlocal(c, 512, c, n, bias=bias)
    single = cost_oab(c, 2, n, bias=bias)
    chain = cost_oab_chain(c, default_chain, n, bias=bias)

    rows = [
        with_table(self_attention, "attention blocks"),
        with_table(nonlocal_block, "attention blocks"),
        with_table(cost_oab(c, 1, n, bias=bias), "attention blocks"),
        with_table(cost_oab(c, 2, n, fusion="sum", bias=bias), "fusion", "OAB x1 SUM"),
        with_table(single, "fusion", "OAB x1 CAT"),
        with_table(chain, "fusion", "OAB x2 CAT"),
        with_table(single, "block count", "OAB x1"),
        with_table(chain, "block count", "OAB x2"),
        combine("Non-Local x2", [nonlocal_block, nonlocal_block], "attention ablation"),
        combine("Self-Attention x2", [self_attention, self_attention], "attention ablation"),
        with_table(chain, "attention ablation", "Object Attention Block"),
        with_table(single, "attention ablation", "Object Attention Block (S)"),
        with_table(cost_fc(c, n, c_out, bias=bias), "aggregator"),
        with_table(cost_pool(c, n), "aggregator"),
        with_table(cost_gram(c, n, c_out, bias=bias), "aggregator"),
    ]
    logger.debug(f"Reference preset: {len(rows)} cost rows (bias={bias})")
    return rows
