"""Central finite-difference checks against tape gradients."""
from __future__ import annotations

from typing import Callable, List, Sequence, Tuple

import numpy as np

from .errors import ContractError
from .tensor import Tensor, backward, no_grad


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    """|a - b| / max(|a|, |b|, floor)."""
    return abs(a - b) / max(abs(a), abs(b), floor)


_STENCILS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12)),
}


def finite_difference(
    fn: Callable[[], Tensor], param: Tensor, index: tuple, step: float = 1e-5, order: int = 2
) -> float:
    """Central difference of scalar ``fn()`` w.r.t. one entry of ``param``.

    ``order=4`` uses the five-point stencil, whose O(step^4) truncation
    error permits a larger step and hence less cancellation for small
    gradients.
    """
    if order not in _STENCILS:
        raise ContractError(f"order must be 2 or 4, got {order}")
    orig = param.data[index]
    total = 0.0
    with no_grad():
        for shift, weight in _STENCILS[order]:
            param.data[index] = orig + shift * step
            total += weight * fn().item()
    param.data[index] = orig
    return total / step


def sample_indices(params: Sequence[Tensor], count: int, rng: np.random.Generator) -> List[Tuple[int, tuple]]:
    """``count`` distinct (param_position, index) pairs drawn uniformly over all entries."""
    sizes = np.cumsum([p.size for p in params])
    flat = np.sort(rng.choice(int(sizes[-1]), size=count, replace=False))
    out = []
    for f in flat:
        k = int(np.searchsorted(sizes, f, side="right"))
        offset = int(f - (sizes[k - 1] if k else 0))
        out.append((k, tuple(int(i) for i in np.unravel_index(offset, params[k].shape))))
    return out


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    samples: List[Tuple[int, tuple]] = None,
    step: float = 1e-5,
    floor: float = 1e-8,
    order: int = 2,
) -> List[Tuple[int, tuple, float, float, float]]:
    """Compare tape gradients with central differences.

    ``samples`` lists ``(param_position, index)`` pairs; by default every
    entry of every parameter is checked. Returns one
    ``(param_position, index, analytic, numeric, rel_err)`` row per sample.
    """
    for p in params:
        p.grad = None
    backward(fn())
    if samples is None:
        samples = [(k, idx) for k, p in enumerate(params) for idx in np.ndindex(p.shape)]
    rows = []
    for k, idx in samples:
        p = params[k]
        analytic = 0.0 if p.grad is None else float(p.grad[idx])
        numeric = finite_difference(fn, p, idx, step, order)
        rows.append((k, idx, analytic, numeric, relative_error(analytic, numeric, floor)))
    return rows
