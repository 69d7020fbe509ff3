"""Small reverse-mode autodiff over float64 numpy arrays.

Every op returns a new :class:`Tensor`; an op only records its inputs when at
least one of them requires a gradient, so inference code pays nothing for the
graph. :func:`grad` walks the recorded graph once in reverse topological order.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError

HALF_POWER_EPS = 1e-12

BackwardFn = Callable[[np.ndarray], tuple]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _backward=None, op: str = "leaf"):
        arr = np.array(data, dtype=np.float64)  # always copies
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward: BackwardFn | None = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("only division by a Python scalar is supported")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _lift(x) -> Tensor:
    return as_tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn, op: str) -> Tensor:
    # op outputs own their freshly computed array, so skip the defensive copy
    out = Tensor.__new__(Tensor)
    arr = np.asarray(data, dtype=np.float64)
    arr.setflags(write=False)
    out.data = arr
    out.grad = None
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ContractError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# --- primitives -----------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Row-wise broadcast add of a bias vector to a (B, n) matrix."""
    if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ContractError(f"add_bias: cannot add {b.shape} to rows of {x.shape}")
    return _make(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)), "add_bias")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a: Tensor, k: float) -> Tensor:
    k = float(k)
    return _make(a.data * k, (a,), lambda g: (g * k,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ContractError("transpose expects a matrix")
    return _make(a.data.T, (a,), lambda g: (g.T,), "transpose")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    shape = a.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return _make(a.data.sum(axis=axis), (a,), backward, "sum")


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    shape = a.shape
    return _make(a.data.mean(), (a,), lambda g: (np.broadcast_to(g / n, shape),), "mean")


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2.0 * ad * g,), "square")


def sqrt(a: Tensor) -> Tensor:
    """Elementwise square root; the derivative is undefined at 0 (inf)."""
    if np.any(a.data < 0):
        raise ContractError("sqrt of negative value")
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def half_power_value(t, eps: float = 0.0):
    """``(t**2 + eps) ** 0.25`` on plain arrays; equals ``|t| ** 0.5`` at eps=0."""
    t = np.asarray(t, dtype=np.float64)
    return (t * t + eps) ** 0.25


def half_power(a: Tensor, eps: float = HALF_POWER_EPS) -> Tensor:
    """Smoothed ``|t|^(1/2)``: ``(t^2 + eps)^(1/4)`` elementwise.

    The derivative ``t / (2 (t^2+eps)^(3/4))`` stays bounded by
    ``0.5 * eps**-0.25`` for eps > 0. With eps = 0 the gradient at t = 0 is
    reported as 0 (the subgradient midpoint) instead of inf.
    """
    if eps < 0:
        raise ContractError("half_power: eps must be >= 0")
    t = a.data
    s = t * t + eps
    out = s ** 0.25

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(s > 0, t / (2.0 * s ** 0.75), 0.0)
        return (g * d,)

    return _make(out, (a,), backward, "half_power")


def gather_rows(a: Tensor, index) -> Tensor:
    """``a[index]`` for a matrix; repeated indices accumulate in the backward."""
    idx = np.asarray(index, dtype=np.intp)
    if a.ndim != 2:
        raise ContractError("gather_rows expects a matrix")
    if idx.ndim != 1:
        raise ContractError("gather_rows expects a 1-D index")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ContractError("gather_rows: index out of range")
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.data[idx], (a,), backward, "gather_rows")


def logsumexp(a: Tensor) -> Tensor:
    """Row-wise log-sum-exp of a (B, M) matrix, shifted by the row max."""
    if a.ndim != 2:
        raise ContractError("logsumexp expects a matrix")
    x = a.data
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    z = e.sum(axis=1, keepdims=True)
    out = (m + np.log(z))[:, 0]
    soft = e / z
    return _make(out, (a,), lambda g: (g[:, None] * soft,), "logsumexp")


# --- backward -------------------------------------------------------------

class ComputationRecord:
    """Topologically ordered view of the graph that produced ``output``.

    ``nodes[k]``'s parents all appear before index k. :meth:`backward` visits
    each node exactly once; ``visits`` is kept so tests can assert it.
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes: list[Tensor] = _topo_order(output)
        self.visits = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, seed: np.ndarray | None = None) -> dict[int, np.ndarray]:
        grads: dict[int, np.ndarray] = {}
        if not self.output.requires_grad:
            return grads
        grads[id(self.output)] = np.ones(self.output.shape) if seed is None else np.asarray(seed, dtype=np.float64)
        self.visits = 0
        for node in reversed(self.nodes):
            self.visits += 1
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg
        return grads


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss: Tensor, leaves: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` w.r.t. each of ``leaves``.

    Leaves that do not influence the loss get zero arrays.
    """
    if loss.ndim != 0:
        raise ContractError(f"grad needs a scalar loss, got shape {loss.shape}")
    grads = ComputationRecord(loss).backward()
    out = []
    for leaf in leaves:
        g = grads.get(id(leaf))
        out.append(np.zeros(leaf.shape) if g is None else np.array(g, dtype=np.float64))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate gradients of ``loss`` into ``.grad`` of every leaf that requires one."""
    if loss.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    record = ComputationRecord(loss)
    grads = record.backward()
    for node in record.nodes:
        if node.is_leaf and node.requires_grad:
            g = grads.get(id(node))
            if g is None:
                g = np.zeros(node.shape)
            node.grad = g if node.grad is None else node.grad + g
