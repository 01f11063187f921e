"""
Closed operation vocabulary. Every forward pass in the library is written with
these functions; each one knows its own backward rule.
"""

from typing import List, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from core.autodiff import ColumnBlock, Matrix, Param, Var, constant, make_node
from errors import NumericalError, ShapeError

Operand = Union[Var, Matrix, list]


def _var(x: Operand) -> Var:
    return x if isinstance(x, Var) else constant(x)


def matmul(a: Operand, b: Operand) -> Var:
    """Matrix product a·b."""
    a, b = _var(a), _var(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    need_a, need_b = a.requires_grad, b.requires_grad

    def backward(g):
        return (g @ bv.T if need_a else None), (av.T @ g if need_b else None)

    return make_node(av @ bv, (a, b), backward, "matmul")


def transpose(a: Operand) -> Var:
    """aᵀ."""
    a = _var(a)
    return make_node(a.value.T.copy(), (a,), lambda g: (g.T,), "transpose")


def add(a: Operand, b: Operand) -> Var:
    """Elementwise sum of equal shapes."""
    a, b = _var(a), _var(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return make_node(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a: Operand, b: Operand) -> Var:
    """a − b."""
    a, b = _var(a), _var(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} differ")
    return make_node(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def mul(a: Operand, b: Operand) -> Var:
    """Elementwise product."""
    a, b = _var(a), _var(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    av, bv = a.value, b.value
    return make_node(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def mul_scalar(a: Operand, c: float) -> Var:
    """Multiply by a constant scalar."""
    a = _var(a)
    c = float(c)
    return make_node(a.value * c, (a,), lambda g: (g * c,), "mul_scalar")


def scale_by_scalar_param(a: Operand, gamma: Var) -> Var:
    """Elementwise γ·a for a learnable 1x1 γ."""
    a = _var(a)
    if gamma.shape != (1, 1):
        raise ShapeError(f"scale_by_scalar_param: gamma must be 1x1, got {gamma.shape}")
    av, gv = a.value, gamma.value[0, 0]

    def backward(g):
        return g * gv, np.array([[np.sum(av * g)]])

    return make_node(av * gv, (a, gamma), backward, "scale")


def softmax_cols(a: Operand) -> Var:
    """Column-wise softmax; every column of the result sums to 1."""
    a = _var(a)
    shifted = a.value - a.value.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=0, keepdims=True)

    def backward(g):
        return (s * (g - np.sum(g * s, axis=0, keepdims=True)),)

    return make_node(s, (a,), backward, "softmax_cols")


def logsumexp_cols(a: Operand) -> Var:
    """log Σ exp over each column, 1×n."""
    a = _var(a)
    out = logsumexp(a.value, axis=0, keepdims=True)
    s = np.exp(a.value - out)
    return make_node(out, (a,), lambda g: (s * g,), "logsumexp_cols")


def concat_rows(a: Operand, b: Operand) -> Var:
    """Stack a above b."""
    a, b = _var(a), _var(b)
    if a.cols != b.cols:
        raise ShapeError(f"concat_rows: column counts differ, {a.shape} vs {b.shape}")
    split = a.rows
    return make_node(np.vstack((a.value, b.value)), (a, b), lambda g: (g[:split], g[split:]), "concat_rows")


def slice_cols(a: Operand, start: int, stop: int) -> Var:
    """Columns start:stop of a."""
    a = _var(a)
    if not 0 <= start < stop <= a.cols:
        raise ShapeError(f"slice_cols: [{start}:{stop}] is not a column range of {a.shape}")
    return make_node(a.value[:, start:stop].copy(), (a,), lambda g: (ColumnBlock(start, stop, g),), "slice_cols")


def concat_cols(parts: Sequence[Operand]) -> Var:
    """Lay the parts side by side; they must share a row count."""
    parts = [_var(p) for p in parts]
    if not parts:
        raise ShapeError("concat_cols: nothing to concatenate")
    if len(parts) == 1:
        return parts[0]
    if len({p.rows for p in parts}) != 1:
        raise ShapeError(f"concat_cols: row counts differ, {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def backward(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return make_node(np.hstack([p.value for p in parts]), tuple(parts), backward, "concat_cols")


def split_cols(a: Operand, width: int) -> List[Var]:
    """Consecutive ``width``-column blocks of a; a itself when it is one block wide."""
    a = _var(a)
    if width < 1 or a.cols % width != 0:
        raise ShapeError(f"split_cols: {a.cols} columns do not split into blocks of {width}")
    if a.cols == width:
        return [a]
    return [slice_cols(a, lo, lo + width) for lo in range(0, a.cols, width)]


def row_sum(a: Operand) -> Var:
    """Sum along each row, m×1."""
    a = _var(a)
    shape = a.shape
    return make_node(a.value.sum(axis=1, keepdims=True), (a,), lambda g: (np.broadcast_to(g, shape).copy(),),
                     "row_sum")


def col_sum(a: Operand) -> Var:
    """Sum down each column, 1×n."""
    a = _var(a)
    shape = a.shape
    return make_node(a.value.sum(axis=0, keepdims=True), (a,), lambda g: (np.broadcast_to(g, shape).copy(),),
                     "col_sum")


def sum_all(a: Operand) -> Var:
    """Sum of every entry, 1×1."""
    a = _var(a)
    shape = a.shape
    return make_node(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),), "sum_all")


def row_max(a: Operand) -> Var:
    """Maximum along each row, m×1; the gradient flows to the first maximal entry."""
    a = _var(a)
    idx = np.argmax(a.value, axis=1)
    rows = np.arange(a.rows)
    shape = a.shape

    def backward(g):
        grad = np.zeros(shape)
        grad[rows, idx] = g[:, 0]
        return (grad,)

    return make_node(a.value[rows, idx].reshape(-1, 1), (a,), backward, "row_max")


def flatten_col(a: Operand) -> Var:
    """Row-major flatten to a (m·n)×1 column."""
    a = _var(a)
    shape = a.shape
    return make_node(a.value.reshape(-1, 1).copy(), (a,), lambda g: (g.reshape(shape),), "flatten_col")


def log(a: Operand) -> Var:
    """Elementwise natural log; raises NumericalError on non-positive input."""
    a = _var(a)
    av = a.value
    if np.any(av <= 0):
        raise NumericalError("log: input must be strictly positive")
    return make_node(np.log(av), (a,), lambda g: (g / av,), "log")


def relu(a: Operand) -> Var:
    """max(a, 0); the gradient at 0 is 0."""
    a = _var(a)
    mask = a.value > 0
    return make_node(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def add_bias(a: Operand, bias: Param) -> Var:
    """a + bias broadcast over columns, written as bias·1ᵀ so it stays a matmul."""
    a = _var(a)
    if bias.shape != (a.rows, 1):
        raise ShapeError(f"add_bias: bias {bias.shape} does not fit {a.shape}")
    return add(a, matmul(bias, np.ones((1, a.cols))))


def linear(weight: Param, x: Operand, bias: Param = None) -> Var:
    """Bias-optional 1x1 convolution over the columns of x."""
    out = matmul(weight, x)
    return add_bias(out, bias) if bias is not None else out
