"""Dense tensors with a reverse-mode autodiff tape.

Each op produces a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to one gradient per parent. The graph is
rebuilt on every forward pass; :func:`backward` walks it once in reverse
topological order.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents: Sequence["Tensor"] = (),
                 backward: Callable | None = None, name: str | None = None):
        if isinstance(data, np.generic):
            data = np.asarray(data)  # 0-d op results keep their dtype
        elif not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self):
        return sum_all(self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype or DEFAULT_DTYPE)
    return Tensor(arr)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    live = tuple(parents)
    if any(p.requires_grad for p in live):
        return Tensor(data, True, live, backward)
    return Tensor(data)


def _lift_pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return a, b


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # only scalar-vs-array broadcasting is supported
    if grad.shape == shape:
        return grad
    if len(shape) == 0 or int(np.prod(shape)) == 1:
        return np.asarray(grad.sum(), dtype=grad.dtype).reshape(shape)
    raise ShapeError(f"cannot reduce gradient of shape {grad.shape} to {shape}")


def _check_elementwise(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(f"elementwise shapes differ: {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    a, b = _lift_pair(a, b)
    _check_elementwise(a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _lift_pair(a, b)
    _check_elementwise(a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _lift_pair(a, b)
    _check_elementwise(a, b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def square(x: Tensor) -> Tensor:
    xd = x.data
    return _make(xd * xd, (x,), lambda g: (2.0 * g * xd,))


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    dtype = x.dtype
    return _make(np.asarray(x.data.sum(), dtype=dtype), (x,),
                 lambda g: (np.broadcast_to(g, shape).astype(dtype),))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def stop_gradient(x: Tensor) -> Tensor:
    """A graph cut: same value, no parents, so nothing flows back through it."""
    return Tensor(x.data)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return _make(out, (x,), lambda g: (g * (out > 0),))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    # split by sign so exp never overflows
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    out[~pos] = e / (1.0 + e)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


# reverse pass -------------------------------------------------------------

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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad_graph(loss: Tensor, leaves: Iterable[Tensor] | None = None) -> dict[int, np.ndarray]:
    """Return ``{id(leaf): dloss/dleaf}`` without touching ``.grad`` buffers."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    wanted = None if leaves is None else {id(t) for t in leaves}
    order = _topo_order(loss)
    relevant = None
    if wanted is not None:
        # prune nodes with no path to a requested leaf
        relevant = set(wanted)
        for node in order:
            if any(id(p) in relevant for p in node._parents):
                relevant.add(id(node))
    out: dict[int, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None or (relevant is not None and id(node) not in relevant):
            continue
        if node._backward is None:
            if wanted is None or id(node) in wanted:
                out[id(node)] = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if relevant is not None and id(parent) not in relevant:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return out


def backward(loss: Tensor, params=None, scope: str = "both") -> None:
    """Accumulate d(loss)/d(param) into ``.grad`` of the parameters in scope.

    ``params`` is a :class:`ParameterSet` (or ``None`` for every reachable
    leaf). Tensors outside ``scope`` are left untouched.
    """
    if params is None:
        targets = None
    else:
        targets = params.group(scope)
    grads = grad_graph(loss, targets)
    if targets is None:
        return
    for t in targets:
        g = grads.get(id(t))
        if g is None:
            continue
        t.grad = g.astype(t.dtype, copy=True) if t.grad is None else t.grad + g


class ParameterSet:
    """Named trainable tensors split into the ``theta`` and ``eta`` groups."""

    GROUPS = ("theta", "eta")

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._group: dict[str, str] = {}

    def add(self, name: str, value: np.ndarray, group: str = "theta") -> Tensor:
        if group not in self.GROUPS:
            raise ValueError(f"unknown parameter group {group!r}")
        if name in self._tensors:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(value, requires_grad=True, name=name)
        self._tensors[name] = t
        self._group[name] = group
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def group_of(self, name: str) -> str:
        return self._group[name]

    def names(self, scope: str = "both") -> list[str]:
        if scope == "both":
            return list(self._tensors)
        if scope not in self.GROUPS:
            raise ValueError(f"unknown scope {scope!r}")
        return [n for n, g in self._group.items() if g == scope]

    def group(self, scope: str = "both") -> list[Tensor]:
        return [self._tensors[n] for n in self.names(scope)]

    def zero_grad(self, scope: str = "both") -> None:
        for t in self.group(scope):
            t.grad = None

    def count(self, scope: str = "both") -> int:
        return int(sum(t.data.size for t in self.group(scope)))
