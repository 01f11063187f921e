"""
Reverse-mode gradient tape over dense float64 matrices.

A forward pass run inside ``with Tape() as tape:`` records every operation that
touches a Param; ``tape.backward(loss)`` replays the record in reverse and
accumulates gradients into the Params. Outside a tape, operations run untaped.
"""

import itertools
import logging
from contextvars import ContextVar
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from errors import NumericalError, ShapeError, UsageError

logger = logging.getLogger(__name__)

Matrix = npt.NDArray[np.float64]


class ColumnBlock(NamedTuple):
    """Gradient for columns start:stop of a parent only; the rest of the parent gets nothing."""

    start: int
    stop: int
    grad: Matrix


BackwardFn = Callable[[Matrix], Sequence[Optional[Union[Matrix, ColumnBlock]]]]

_active_tape: ContextVar[Optional["Tape"]] = ContextVar("ots_active_tape", default=None)
_param_ids = itertools.count()


def as_matrix(data, name: str = "matrix") -> Matrix:
    """Copy ``data`` into a read-only 2-D float64 array."""
    array = np.array(data, dtype=np.float64)
    if array.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {array.shape}")
    if array.shape[0] < 1 or array.shape[1] < 1:
        raise ShapeError(f"{name} must have positive dimensions, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"{name} contains non-finite entries")
    array.flags.writeable = False
    return array


def freeze(array: np.ndarray, op: str) -> Matrix:
    """Mark an operation result immutable after checking it is finite."""
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"{op} produced non-finite entries")
    array.flags.writeable = False
    return array


class Var:
    """A node of the computation: a matrix value plus how to push gradients back."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "tape", "op")

    def __init__(self, value: Matrix, parents: Tuple["Var", ...] = (), backward_fn: Optional[BackwardFn] = None,
                 op: str = "const", tape: Optional["Tape"] = None):
        self.value = value
        self.grad: Optional[Matrix] = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.tape = tape
        self.op = op

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def requires_grad(self) -> bool:
        return self.tape is not None

    def item(self) -> float:
        if self.shape != (1, 1):
            raise UsageError(f"item() needs a 1x1 value, got {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        return f"Var(op={self.op!r}, shape={self.shape})"


class Param(Var):
    """A learnable matrix with a persistent, accumulating gradient."""

    __slots__ = ("id", "name", "decay_exempt")

    def __init__(self, value, name: str = "", decay_exempt: bool = False):
        super().__init__(as_matrix(value, name or "param"), op="param")
        self.id = next(_param_ids)
        self.name = name
        self.decay_exempt = decay_exempt
        self.grad = np.zeros(self.value.shape)

    @property
    def requires_grad(self) -> bool:
        return True

    @property
    def size(self) -> int:
        return int(self.value.size)

    def assign(self, value) -> None:
        """Replace the value; the shape must not change."""
        new_value = as_matrix(value, self.name or "param")
        if new_value.shape != self.value.shape:
            raise ShapeError(f"cannot assign {new_value.shape} to param {self.name} of shape {self.value.shape}")
        self.value = new_value

    def zero_grad(self) -> None:
        self.grad = np.zeros(self.value.shape)

    def __repr__(self):
        return f"Param(name={self.name!r}, shape={self.shape})"


def zero_grads(params: Iterable[Param]) -> None:
    """Reset the gradient of every param to zeros."""
    for param in params:
        param.zero_grad()


def constant(data, name: str = "constant") -> Var:
    """Wrap data as an untaped leaf."""
    if isinstance(data, Var):
        return data
    return Var(as_matrix(data, name))


class Tape:
    """Ordered record of executed operations."""

    def __init__(self):
        self.nodes: List[Var] = []
        self.consumed = False
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active_tape.reset(self._token)
        self._token = None
        return False

    def record(self, node: Var) -> None:
        if self.consumed:
            raise UsageError("tape already consumed by backward()")
        node.tape = self
        self.nodes.append(node)

    def backward(self, loss: Var) -> None:
        """Accumulate d(loss)/d(param) into every param reachable from ``loss``."""
        if loss.shape != (1, 1):
            raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if loss.tape is not self:
            raise UsageError("loss was not produced on this tape")
        if self.consumed:
            raise UsageError("tape already consumed by backward()")

        loss.grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            grads = node.backward_fn(node.grad)
            for parent, grad in zip(node.parents, grads):
                if grad is None or not parent.requires_grad:
                    continue
                _accumulate(parent, grad)

        self.consumed = True
        logger.debug(f"Backward replayed {len(self.nodes)} operations")


def _accumulate(parent: Var, grad: Union[Matrix, ColumnBlock]) -> None:
    """Add ``grad`` into ``parent.grad`` in place; non-param buffers are owned by the tape."""
    if parent.grad is None:
        if not isinstance(grad, ColumnBlock):
            parent.grad = np.array(grad, dtype=np.float64)
            return
        parent.grad = np.zeros(parent.shape)
    if isinstance(grad, ColumnBlock):
        parent.grad[:, grad.start:grad.stop] += grad.grad
    else:
        parent.grad += grad


def active_tape() -> Optional[Tape]:
    return _active_tape.get()


def make_node(value: np.ndarray, parents: Tuple[Var, ...], backward_fn: BackwardFn, op: str) -> Var:
    """Create an operation result, recording it when a tape is active and a parent needs gradients."""
    node = Var(freeze(value, op), parents, backward_fn, op)
    tape = _active_tape.get()
    if tape is not None and any(parent.requires_grad for parent in parents):
        tape.record(node)
    else:
        node.parents = ()
        node.backward_fn = None
    return node


def backward(loss: Var) -> None:
    """Run backward on the tape that produced ``loss``."""
    if loss.tape is None:
        raise UsageError("loss was not produced by taped operations")
    loss.tape.backward(loss)
