"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation returns a new :class:`Tensor` that remembers
its inputs and a closure mapping the upstream gradient to input gradients.
Tensors carry a creation counter, so sorting the nodes reachable from an
output by that counter yields a valid topological order: the :class:`Tape`.

Broadcasting is deliberately narrow. Binary elementwise ops need identical
shapes (or a Python scalar); the only broadcast is :func:`add_channel`,
which adds a per-channel vector to an ``(N, C, H, W)`` activation.
"""
from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_counter = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, sampling)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """An n-dimensional float64 array that can take part in autodiff.

    Parameters
    ----------
    data : array_like
        Values; converted to a float64 ndarray.
    requires_grad : bool
        Leaf tensors with ``requires_grad=True`` receive ``.grad`` after
        :func:`backward`.
    name : str, optional
        Label used by checkpoints and diagnostics.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self._id = next(_counter)

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def is_finite(self) -> bool:
        """Validity check: False if any value is NaN or infinite."""
        return bool(np.isfinite(self.data).all())

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor / tensor is not supported")
        return scale(self, 1.0 / float(other))

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        backward(self, seed=seed)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, parents: Sequence[Tensor], grad_fn: Callable) -> Tensor:
    """Wrap ``data`` as the output of an op over ``parents``.

    ``grad_fn(g)`` must return one gradient (or None) per parent.
    """
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = grad_fn
    return out


class Tape:
    """The recorded operations reachable from ``output``, in recording order.

    ``nodes`` lists every tensor in the graph (leaves included) such that
    each node appears after all of its inputs.
    """

    def __init__(self, output: Tensor):
        seen = {}
        stack = [output]
        while stack:
            node = stack.pop()
            if node._id in seen:
                continue
            seen[node._id] = node
            stack.extend(p for p in node._parents if p.requires_grad)
        self.nodes = [seen[k] for k in sorted(seen)]
        self.output = output

    def __len__(self) -> int:
        return len(self.nodes)

    def operations(self):
        """Non-leaf nodes as ``(input_ids, output_id)`` pairs."""
        return [(tuple(p._id for p in n._parents), n._id) for n in self.nodes if n._parents]


def backward(output: Tensor, tape: Optional[Tape] = None, seed: Optional[np.ndarray] = None) -> Tape:
    """Accumulate d(output)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    ``output`` must be a scalar unless an explicit ``seed`` of matching shape
    is given (used to compute vector-Jacobian products). Returns the tape.
    """
    if seed is None:
        if output.size != 1:
            raise ContractError(f"backward() needs a scalar output, got shape {output.shape}")
        seed = np.ones_like(output.data)
    else:
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != output.shape:
            raise DimensionError(f"seed shape {seed.shape} != output shape {output.shape}")
    if not output.requires_grad:
        raise ContractError("output does not depend on any tensor requiring grad")
    tape = tape if tape is not None else Tape(output)
    grads = {output._id: seed}
    for node in reversed(tape.nodes):
        g = grads.pop(node._id, None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(parent._id)
            grads[parent._id] = pg if prev is None else prev + pg
    return tape


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return make_result(a.data + c, (a,), lambda g: (g,))
    _check_same(a, b, "add")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return make_result(a.data - c, (a,), lambda g: (g,))
    _check_same(a, b, "sub")
    return make_result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        return scale(a, b)
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_result(a.data * c, (a,), lambda g: (g * c,))


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,))


def add_channel(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel vector to an ``(N, C, H, W)`` tensor.

    ``b`` has shape ``(C,)`` (shared across the batch) or ``(N, C)``.
    """
    if x.ndim != 4:
        raise DimensionError(f"add_channel expects (N,C,H,W), got {x.shape}")
    n, c = x.shape[:2]
    if b.shape == (c,):
        out = x.data + b.data[None, :, None, None]
        return make_result(out, (x, b), lambda g: (g, g.sum(axis=(0, 2, 3))))
    if b.shape == (n, c):
        out = x.data + b.data[:, :, None, None]
        return make_result(out, (x, b), lambda g: (g, g.sum(axis=(2, 3))))
    raise DimensionError(f"add_channel: bias {b.shape} does not match {x.shape}")


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    xd = x.data
    return make_result(xd * s, (x,), lambda g: (g * (s * (1.0 + xd * (1.0 - s))),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# shape manipulation and reductions
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(tensors: Iterable[Tensor], axis: int = 1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ContractError("concat of nothing")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)
        ):
            raise DimensionError(f"concat: {t.shape} incompatible with {ref} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def grad_fn(g):
        idx = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[axis] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return tuple(out)

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tensors, grad_fn)


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return make_result(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    return make_result(
        np.asarray(x.data.mean()), (x,), lambda g: (np.broadcast_to(g / n, shape).copy(),)
    )


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout. Identity when ``p == 0`` or ``rng`` is None (eval mode)."""
    if p <= 0.0 or rng is None:
        return x
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must be in [0, 1), got {p}")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return make_result(x.data * keep, (x,), lambda g: (g * keep,))


def mse(a: Tensor, b) -> Tensor:
    """Mean squared error between two same-shape tensors."""
    d = sub(a, as_tensor(b))
    return mean_all(mul(d, d))
