"""
Finite-difference gradient checking.
"""

import logging
from typing import Callable, Dict, Sequence

import numpy as np

from core.autodiff import Param, Tape, Var, zero_grads

logger = logging.getLogger(__name__)

STEP = 1e-5
MIN_COORDINATES = 32
# Absolute gap below which analytic and numeric derivatives count as equal: the
# rounding noise of a central difference on an O(1) loss is about eps / STEP.
NOISE_FLOOR = 1e-9


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def gradcheck(f: Callable[[], Var], params: Sequence[Param], h: float = STEP,
              coordinates: int = MIN_COORDINATES, seed: int = 0) -> float:
    """Compare taped gradients of the scalar ``f()`` against central differences.

    Samples ``coordinates`` entries per param (all of them when the param is
    smaller) and returns the maximum relative error. Param values are restored
    on return; param grads are left holding the analytic gradient.

    Coordinates where the two derivatives differ by less than NOISE_FLOOR score
    0, so a gradient that is exactly zero (a bias the loss is invariant to) is
    not reported against central-difference noise.
    """
    rng = np.random.default_rng(seed)

    zero_grads(params)
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    analytic: Dict[int, np.ndarray] = {p.id: p.grad.copy() for p in params}

    worst = 0.0
    for param in params:
        if param.size <= coordinates:
            picks = np.arange(param.size)
        else:
            picks = np.sort(rng.choice(param.size, size=coordinates, replace=False))

        original = param.value
        for flat in picks:
            index = np.unravel_index(flat, param.shape)
            try:
                bumped = original.copy()
                bumped[index] += h
                param.assign(bumped)
                up = f().item()

                bumped[index] -= 2 * h
                param.assign(bumped)
                down = f().item()
            finally:
                param.assign(original)

            numeric = (up - down) / (2 * h)
            exact = float(analytic[param.id][index])
            error = 0.0 if abs(exact - numeric) < NOISE_FLOOR else relative_error(exact, numeric)
            if error > worst:
                worst = error

        logger.debug(f"gradcheck {param.name or param.id}: {len(picks)} coordinates, running max {worst:.3e}")

    logger.info(f"gradcheck max relative error {worst:.3e} over {len(params)} params")
    return worst
